"""Training loop: alternate optimisation and collocation resampling.

One run trains on the initial uniform point set, then performs
``outer_rounds`` iterations of *resample, then train*.  Each training phase is
``adam_steps`` of Adam followed by ``lbfgs_steps`` of L-BFGS on a fixed point
set.  The interior residuals handed to the sampler are those computed by the
last accepted loss evaluation of the phase, so GLF costs no extra residual
evaluations.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .autodiff import ContractError, EvaluationError
from .config import RunConfig
from .network import NetworkSpec, forward, init_params
from .optim import AdamState, LbfgsState, adam_step, lbfgs_run
from .pde import (
    ConditionPoints,
    NetworkField,
    PdeProblem,
    condition_mismatch,
    condition_residual,
    get_problem,
    network_bundle,
    residual,
    sample_conditions,
    sample_interior,
)
from .reference import ReferenceField, reference_for
from .sampler import CollocationSet, GlfConfig, Sampler

log = logging.getLogger(__name__)

THREADS_ENV = "GLFPINN_THREADS"


class DivergenceError(RuntimeError):
    pass


def _mean_sq(x):
    if isinstance(x, ad.Var):
        return ad.mean(x * x)
    return np.mean(x * x)


def _concat(parts):
    if any(isinstance(p, ad.Var) for p in parts):
        return ad.concat(parts)
    return np.concatenate(parts)


class Objective:
    """Empirical loss: mean squared interior residual + lam * mean squared condition residual."""

    def __init__(self, problem: PdeProblem, spec: NetworkSpec, interior: np.ndarray, conds: list[ConditionPoints]):
        if len(interior) == 0:
            raise ContractError("empty interior point set")
        self.problem = problem
        self.spec = spec
        self.interior = np.asarray(interior, dtype=float)
        self.conds = conds
        blocks, spans, pos = [], [], 0
        for cp in conds:
            n = len(cp)
            blocks.append(cp.points)
            lo = (pos, pos + n)
            pos += n
            hi = None
            if cp.partner is not None:
                blocks.append(cp.partner)
                hi = (pos, pos + n)
                pos += n
            spans.append((lo, hi))
        self.cond_points = np.concatenate(blocks) if blocks else np.zeros((0, problem.dim))
        self.spans = spans
        self.cond_needed = tuple(sorted({cp.spec.probe for cp in conds if cp.spec.order > 0}))
        self.n_calls = 0

    def _assemble(self, params):
        problem = self.problem
        bundle = network_bundle(self.spec, params, self.interior, problem.needed)
        r_int = problem.interior(bundle, self.interior)
        loss = _mean_sq(r_int)
        if self.conds:
            b = network_bundle(self.spec, params, self.cond_points, self.cond_needed)
            parts = []
            for cp, (lo, hi) in zip(self.conds, self.spans):
                u = b[cp.spec.probe]
                u_lo = u[lo[0]:lo[1]]
                u_hi = u[hi[0]:hi[1]] if hi is not None else None
                parts.append(condition_mismatch(problem, cp.spec, u_lo, cp.points, u_hi))
            loss = loss + problem.lam * _mean_sq(_concat(parts))
        return loss, r_int

    def value(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss and interior residuals ``|L u - f|`` without recording."""
        loss, r_int = self._assemble(params)
        return float(loss), np.abs(r_int)

    def __call__(self, params: np.ndarray):
        """``(loss, gradient, residuals)``."""
        self.n_calls += 1
        tape = ad.Tape()
        theta = tape.leaf(params)
        loss, r_int = self._assemble(theta)
        f = float(loss.value)
        if not np.isfinite(f):
            raise DivergenceError("non-finite training loss")
        g = ad.loss_gradient(tape, loss, theta)
        return f, g, np.abs(r_int.value)


def empirical_loss(problem: PdeProblem, field, interior, conds: list[ConditionPoints]) -> tuple[float, np.ndarray]:
    """Loss of any field (analytic or network) and its interior residuals ``|L u - f|``."""
    r = residual(problem, field, interior)
    loss = float(np.mean(r * r))
    if conds:
        c = np.concatenate([condition_residual(problem, field, cp.points, cp.spec) for cp in conds])
        loss += problem.lam * float(np.mean(c * c))
    return loss, r


def l2_relative_error(pred: np.ndarray, ref: np.ndarray) -> float:
    """``||pred - ref||_2 / ||ref||_2``."""
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ContractError("reference has zero norm")
    return float(np.linalg.norm(np.asarray(pred) - ref) / denom)


def network_error(spec: NetworkSpec, params: np.ndarray, ref: ReferenceField, chunk: int = 32768) -> float:
    pred = np.concatenate([forward(spec, params, ref.points[s:s + chunk]) for s in range(0, len(ref.points), chunk)])
    return l2_relative_error(pred, ref.values)


def coordinate_names(problem: PdeProblem) -> list[str]:
    if problem.name == "laplace-polar":
        return ["r", "theta"]
    if problem.dim == 2:
        return ["x", "t"]
    return [f"x{i}" for i in range(problem.dim - 1)] + ["t"]


def write_points(path: Path, points: np.ndarray, names: list[str]) -> None:
    np.savetxt(path, points, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


# stream identifiers
_INIT, _INTERIOR, _CONDITIONS, _SAMPLER = 0, 1, 2, 3


@dataclass
class SeedRecord:
    seed: int
    status: str = "ok"
    message: str = ""
    rounds: list[dict] = field(default_factory=list)
    final_l2_error: float | None = None
    extra_residual_evals: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def train_phase(objective: Objective, theta: np.ndarray, cfg: RunConfig, loss_rows: list, rnd: int):
    """Adam then L-BFGS on one point set.  Returns ``(theta, info, residuals)``."""
    opt = cfg.optimizer
    state = AdamState.zeros(theta.size, lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.adam_eps)
    step = 0
    residuals = None
    f = np.nan
    for _ in range(opt.adam_steps):
        f, g, residuals = objective(theta)
        loss_rows.append((rnd, step, f))
        step += 1
        theta, state = adam_step(state, theta, g)
    info = {"loss_before_lbfgs": None, "lbfgs_status": None, "lbfgs_iters": 0}
    if opt.lbfgs_steps > 0:
        lstate = LbfgsState(opt.lbfgs_history, opt.c1, opt.c2, opt.max_ls_evals)
        first = objective(theta)
        info["loss_before_lbfgs"] = first[0]
        res = lbfgs_run(lstate, objective, theta, opt.lbfgs_steps, initial=first)
        for f in res.losses:
            loss_rows.append((rnd, step, f))
            step += 1
        theta, f, residuals = res.x, res.f, res.aux
        info.update(lbfgs_status=res.status, lbfgs_iters=res.n_iter)
    elif residuals is None:
        f, _, residuals = objective(theta)
    info["loss"] = float(f)
    return theta, info, residuals


def run_seed(cfg: RunConfig, seed: int, out_dir: Path | None = None, reference: ReferenceField | None = None) -> SeedRecord:
    cfg = cfg.resolved()
    problem = get_problem(cfg.problem, cfg.boundary, cfg.lam)
    spec = NetworkSpec(problem.dim, cfg.network.depth, cfg.network.width)
    ref = reference if reference is not None else reference_for(problem)
    s = cfg.sampler
    sampler = Sampler(s.name, GlfConfig(s.alpha, s.epsilon, s.m_per_anchor, s.k, s.c, s.replacement), s.dense_points)
    names = coordinate_names(problem)

    theta = init_params(spec, seed)
    points = sample_interior(problem, cfg.n_interior, _rng(seed, _INTERIOR))
    conds = sample_conditions(problem, cfg.n_condition, _rng(seed, _CONDITIONS))

    record = SeedRecord(seed)
    loss_rows: list[tuple[int, int, float]] = []
    residuals = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    try:
        for rnd in range(cfg.outer_rounds + 1):
            t0 = time.perf_counter()
            if rnd > 0:
                anchors = CollocationSet(points, residuals)
                new = sampler.step(problem, anchors, NetworkField(spec, theta), _rng(seed, _SAMPLER, rnd))
                points = new.points
            points_file = None
            if out_dir is not None and cfg.save_points:
                points_file = f"points_round_{rnd}.csv"
                write_points(out_dir / points_file, points, names)
            objective = Objective(problem, spec, points, conds)
            theta, info, residuals = train_phase(objective, theta, cfg, loss_rows, rnd)
            err = network_error(spec, theta, ref)
            entry = {
                "round": rnd,
                **info,
                "l2_error": err,
                "extra_residual_evals": sampler.extra_evaluations,
                "loss_evaluations": objective.n_calls,
                "n_points": int(len(points)),
                "points_file": points_file,
                "wall_clock_s": time.perf_counter() - t0,
            }
            record.rounds.append(entry)
            log.info("seed %d round %d loss %.3e l2 %.3e", seed, rnd, info["loss"], err)
    except (DivergenceError, EvaluationError) as exc:
        record.status = "diverged"
        record.message = str(exc)
    record.extra_residual_evals = sampler.extra_evaluations
    if record.rounds:
        record.final_l2_error = record.rounds[-1]["l2_error"]
    if out_dir is not None:
        with open(out_dir / "loss.csv", "w") as fh:
            fh.write("round,step,loss\n")
            for r, st, f in loss_rows:
                fh.write(f"{r},{st},{f!r}\n")
        with open(out_dir / "error.csv", "w") as fh:
            fh.write("round,l2_error\n")
            for e in record.rounds:
                fh.write(f"{e['round']},{e['l2_error']!r}\n")
    return record


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return int(threads)
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else (os.cpu_count() or 1)


def _seed_worker(cfg: RunConfig, seed: int, out_dir, ref: ReferenceField) -> SeedRecord:
    # single-threaded BLAS keeps every reduction order, and hence every bit, fixed
    with threadpool_limits(limits=1):
        return run_seed(cfg, seed, out_dir, ref)


def run(cfg: RunConfig, out_dir=None, threads: int | None = None) -> dict:
    """Run every seed of ``cfg``; returns the record (also written as ``record.json``).

    Per-seed artifacts go to ``<out>/seed_<s>/``.  ``threads`` worker processes
    train seeds concurrently; results do not depend on the worker count.
    """
    cfg = cfg.resolved()
    out = Path(out_dir) if out_dir is not None else (Path(cfg.output_dir) if cfg.output_dir else None)
    n_threads = thread_count(threads)
    problem = get_problem(cfg.problem, cfg.boundary, cfg.lam)
    with threadpool_limits(limits=1):
        ref = reference_for(problem)
    subs = [out / f"seed_{seed}" if out is not None else None for seed in cfg.seeds]
    workers = min(n_threads, len(cfg.seeds))
    if workers <= 1:
        seeds = [_seed_worker(cfg, seed, sub, ref) for seed, sub in zip(cfg.seeds, subs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            seeds = list(pool.map(_seed_worker, [cfg] * len(subs), cfg.seeds, subs, [ref] * len(subs)))
    errs = np.array([s.final_l2_error for s in seeds if s.status == "ok" and s.final_l2_error is not None])
    record = {
        "version": 1,
        "config": cfg.to_dict(),
        "reference": ref.info(),
        "seeds": [s.to_dict() for s in seeds],
        "final": {
            "l2_mean": float(errs.mean()) if errs.size else None,
            "l2_std": float(errs.std()) if errs.size else None,
            "n_ok": int(errs.size),
            "n_diverged": sum(s.status != "ok" for s in seeds),
        },
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "record.json").write_text(json.dumps(record, indent=2))
        env = {"threads": n_threads, "threads_env": THREADS_ENV, "numpy": np.__version__}
        (out / "environment.json").write_text(json.dumps(env, indent=2))
    return record


WALL_CLOCK_KEYS = ("wall_clock_s",)


def strip_wall_clock(record):
    """Copy of a record without timing fields (for reproducibility comparisons)."""
    if isinstance(record, dict):
        return {k: strip_wall_clock(v) for k, v in record.items() if k not in WALL_CLOCK_KEYS}
    if isinstance(record, list):
        return [strip_wall_clock(v) for v in record]
    return record
