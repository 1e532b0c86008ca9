"""Collocation resampling: GLF, its GLF-D / GLF-M variants, RAD and uniform.

GLF perturbs every anchor with an isotropic Gaussian whose scale shrinks as
the anchor's residual grows, lets each candidate inherit its anchor's
residual, and draws the next training set from the residual-weighted PMF over
the pool.  No residual is evaluated beyond the ones already computed for the
anchors during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import ContractError
from .pde import PERIODIC, DomainBox, PdeProblem, residual

SAMPLER_NAMES = ("glf", "glf-d", "glf-m", "rad", "uniform")


class DegenerateDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class GlfConfig:
    alpha: float = 1e-4
    epsilon: float = 1e-8
    m_per_anchor: int = 3
    k: float = 1.0
    c: float = 1.0
    replacement: bool = True

    def __post_init__(self):
        if not (self.alpha > 0 and self.epsilon > 0 and self.m_per_anchor >= 1 and self.k >= 0 and self.c >= 0):
            raise ContractError(f"invalid GLF configuration {self}")


@dataclass
class CollocationSet:
    points: np.ndarray
    residuals: np.ndarray | None = None

    def __len__(self):
        return len(self.points)


@dataclass
class CandidatePool:
    candidates: np.ndarray
    anchor_index: np.ndarray
    inherited_residual: np.ndarray

    def __len__(self):
        return len(self.candidates)


class DiscretePmf:
    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or len(probs) == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ContractError("PMF needs finite non-negative probabilities")
        self.probs = probs

    def __len__(self):
        return len(self.probs)


def scaling_factor(r, alpha: float, epsilon: float):
    """Perturbation scale ``alpha / (r + epsilon)``."""
    if alpha <= 0 or epsilon <= 0:
        raise ContractError("alpha and epsilon must be positive")
    return alpha / (np.asarray(r, dtype=float) + epsilon)


def reflect(points: np.ndarray, domain: DomainBox) -> np.ndarray:
    """Fold points back into the box.

    Non-periodic axes are mirrored at whichever facet they cross, as many
    times as needed; this equals folding ``x - lo`` modulo twice the width.
    Periodic axes wrap around.
    """
    points = np.array(points, dtype=float, copy=True)
    for ax in range(domain.dim):
        lo, hi = domain.lo[ax], domain.hi[ax]
        width = hi - lo
        col = points[..., ax]
        if domain.roles[ax] == PERIODIC:
            y = np.mod(col - lo, width)
        else:
            y = np.mod(col - lo, 2.0 * width)
            y = np.where(y > width, 2.0 * width - y, y)
        inside = (col >= lo) & (col <= hi)
        points[..., ax] = np.where(inside, col, np.clip(lo + y, lo, hi))
    return points


def generate_candidates(anchors: CollocationSet, cfg: GlfConfig, domain: DomainBox, rng: np.random.Generator) -> CandidatePool:
    if len(anchors) == 0:
        raise ContractError("empty anchor set")
    if anchors.residuals is None:
        raise ContractError("anchors carry no residuals")
    n, d = anchors.points.shape
    m = cfg.m_per_anchor
    h = scaling_factor(anchors.residuals, cfg.alpha, cfg.epsilon)
    # row i of xi belongs to anchor i regardless of how the pool is later consumed
    xi = rng.standard_normal((n, m, d))
    raw = anchors.points[:, None, :] + h[:, None, None] * xi
    candidates = reflect(raw.reshape(n * m, d), domain)
    anchor_index = np.repeat(np.arange(n), m)
    return CandidatePool(candidates, anchor_index, anchors.residuals[anchor_index])


def build_pmf(residual_values, k: float, c: float) -> DiscretePmf:
    """Normalised weights ``r^k / mean(r^k) + c``."""
    r = np.asarray(residual_values, dtype=float)
    if r.size == 0:
        raise ContractError("no residual values")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ContractError("residuals must be finite and non-negative")
    rk = r**k
    mean = rk.mean()
    if mean > 0:
        w = rk / mean + c
    elif c > 0:
        w = np.full_like(r, c)
    else:
        raise DegenerateDistributionError("all weights are zero (r == 0 and c == 0)")
    return DiscretePmf(w / w.sum())


def draw_indices(pmf: DiscretePmf, n: int, rng: np.random.Generator, replacement: bool = True) -> np.ndarray:
    """``n`` indices from ``pmf``; without replacement uses Gumbel top-n."""
    p = pmf.probs
    if n < 1:
        raise ContractError("need n >= 1")
    if replacement:
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        return np.minimum(idx, len(p) - 1)
    if np.count_nonzero(p) < n:
        raise ContractError("fewer positive-probability candidates than requested points")
    with np.errstate(divide="ignore"):
        keys = np.log(p) + rng.gumbel(size=len(p))
    return np.argsort(-keys, kind="stable")[:n]


def resample(pool: CandidatePool, pmf: DiscretePmf, n: int, rng: np.random.Generator, replacement: bool = True) -> CollocationSet:
    if len(pmf) != len(pool):
        raise ContractError(f"PMF has {len(pmf)} entries for a pool of {len(pool)}")
    idx = draw_indices(pmf, n, rng, replacement)
    return CollocationSet(pool.candidates[idx].copy())


def glf_step(anchors: CollocationSet, cfg: GlfConfig, domain: DomainBox, rng: np.random.Generator) -> CollocationSet:
    pool = generate_candidates(anchors, cfg, domain, rng)
    pmf = build_pmf(pool.inherited_residual, cfg.k, cfg.c)
    return resample(pool, pmf, len(anchors), rng, cfg.replacement)


def evaluate_residuals(problem: PdeProblem, field, points: np.ndarray, chunk: int = 8192) -> np.ndarray:
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        out[s:s + chunk] = residual(problem, field, points[s:s + chunk])
    return out


def glf_d_step(anchors: CollocationSet, cfg: GlfConfig, problem: PdeProblem, field, rng: np.random.Generator):
    """GLF with true residuals at every candidate.  Returns ``(set, extra_evals)``."""
    pool = generate_candidates(anchors, cfg, problem.domain, rng)
    true_r = evaluate_residuals(problem, field, pool.candidates)
    pmf = build_pmf(true_r, cfg.k, cfg.c)
    return resample(pool, pmf, len(anchors), rng, cfg.replacement), len(pool)


def glf_m_config(cfg: GlfConfig, n: int, total_candidates: int = 100_000) -> GlfConfig:
    """Enlarge ``m_per_anchor`` so that ``n * m`` reaches ``total_candidates``."""
    return replace(cfg, m_per_anchor=math.ceil(total_candidates / n))


def rad_step(problem: PdeProblem, field, n: int, S: int, k: float, c: float, rng: np.random.Generator, replacement: bool = True):
    """Residual-distribution resampling over ``S`` dense uniform points.  Returns ``(set, S)``."""
    if S < n:
        raise ContractError("RAD needs S >= n")
    dense = problem.domain.uniform(S, rng)
    r = evaluate_residuals(problem, field, dense)
    pmf = build_pmf(r, k, c)
    idx = draw_indices(pmf, n, rng, replacement)
    return CollocationSet(dense[idx].copy()), S


def uniform_step(domain: DomainBox, n: int, rng: np.random.Generator) -> CollocationSet:
    return CollocationSet(domain.uniform(n, rng))


class Sampler:
    """Dispatches one resampling round by name and tracks extra residual evaluations."""

    def __init__(self, name: str, cfg: GlfConfig = GlfConfig(), dense_points: int = 100_000):
        if name not in SAMPLER_NAMES:
            raise ContractError(f"unknown sampler {name!r}; choose from {', '.join(SAMPLER_NAMES)}")
        self.name = name
        self.cfg = cfg
        self.dense_points = dense_points
        self.extra_evaluations = 0

    def effective_config(self, n: int) -> GlfConfig:
        if self.name == "glf-m":
            return glf_m_config(self.cfg, n, self.dense_points)
        return self.cfg

    def step(self, problem: PdeProblem, anchors: CollocationSet, field, rng: np.random.Generator) -> CollocationSet:
        n = len(anchors)
        if self.name in ("glf", "glf-m"):
            return glf_step(anchors, self.effective_config(n), problem.domain, rng)
        if self.name == "glf-d":
            out, extra = glf_d_step(anchors, self.cfg, problem, field, rng)
        elif self.name == "rad":
            out, extra = rad_step(problem, field, n, self.dense_points, self.cfg.k, self.cfg.c, rng, self.cfg.replacement)
        else:
            return uniform_step(problem.domain, n, rng)
        self.extra_evaluations += extra
        return out
