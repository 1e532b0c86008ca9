"""Adam and L-BFGS (two-loop recursion, strong Wolfe line search) on flat vectors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .autodiff import EvaluationError


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape:
        raise ValueError("gradient and parameters are misaligned")
    if not np.all(np.isfinite(grad)):
        raise EvaluationError("non-finite gradient; Adam step rejected")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


@dataclass
class LbfgsState:
    history: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 25
    s: deque = field(default_factory=deque)
    y: deque = field(default_factory=deque)

    def clear(self):
        self.s.clear()
        self.y.clear()

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        """Store a curvature pair if ``s.y > 1e-10``."""
        if float(s @ y) <= 1e-10:
            return False
        if len(self.s) == self.history:
            self.s.popleft()
            self.y.popleft()
        self.s.append(s)
        self.y.append(y)
        return True

    def direction(self, g: np.ndarray) -> np.ndarray:
        q = g.copy()
        alphas = []
        rhos = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            rho = 1.0 / float(y @ s)
            a = rho * float(s @ q)
            q -= a * y
            alphas.append(a)
            rhos.append(rho)
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y), a, rho in zip(zip(self.s, self.y), reversed(alphas), reversed(rhos)):
            b = rho * float(y @ q)
            q += (a - b) * s
        return -q


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    aux: Any
    n_iter: int
    n_eval: int
    status: str
    losses: list[float]
    steps: list[tuple[float, float, float, float]]  # (alpha, f_old, f_new, slope) per accepted step


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating (a, fa, da), (b, fb, db); None if undefined."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(phi, f0, dphi0, alpha1, c1, c2, max_evals):
    """Strong Wolfe search.  Returns ``(alpha, payload, ok)``; ``alpha == 0`` means no progress."""
    evals = 0
    a_prev, f_prev, d_prev, p_prev = 0.0, f0, dphi0, None
    a = alpha1

    def zoom(lo, flo, dlo, plo, hi, fhi, dhi):
        nonlocal evals
        while evals < max_evals:
            width = hi - lo
            cand = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * abs(width)
            if cand is None or not np.isfinite(cand) or cand < left + margin or cand > right - margin:
                cand = 0.5 * (lo + hi)
            f, d, p = phi(cand)
            evals += 1
            if not np.isfinite(f) or f > f0 + c1 * cand * dphi0 or f >= flo:
                hi, fhi, dhi = cand, (f if np.isfinite(f) else np.inf), (d if np.isfinite(d) else 0.0)
            else:
                if abs(d) <= -c2 * dphi0:
                    return cand, p, True
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo, plo = cand, f, d, p
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return lo, plo, False

    while evals < max_evals:
        f, d, p = phi(a)
        evals += 1
        if not np.isfinite(f):
            return zoom(a_prev, f_prev, d_prev, p_prev, a, np.inf, 0.0)
        if f > f0 + c1 * a * dphi0 or (evals > 1 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, p_prev, a, f, d)
        if abs(d) <= -c2 * dphi0:
            return a, p, True
        if d >= 0:
            return zoom(a, f, d, p, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev, p_prev = a, f, d, p
        a = 4.0 * a
    return a_prev, p_prev, False


def lbfgs_run(
    state: LbfgsState,
    fun: Callable[[np.ndarray], tuple],
    x0: np.ndarray,
    max_iters: int,
    gtol: float = 1e-9,
    callback: Callable[[int, float], None] | None = None,
    initial: tuple | None = None,
) -> LbfgsResult:
    """Minimise ``fun`` from ``x0``.

    ``fun(x)`` returns ``(f, g)`` or ``(f, g, aux)``; ``aux`` of the final
    accepted point is handed back in the result.  Status is one of
    ``"max_iters"``, ``"gtol"``, ``"line_search_failed"``.
    """
    n_eval = 0

    def call(x):
        nonlocal n_eval
        n_eval += 1
        out = fun(x)
        f, g = float(out[0]), np.asarray(out[1], dtype=float)
        return f, g, (out[2] if len(out) > 2 else None)

    x = np.array(x0, dtype=float, copy=True)
    if initial is None:
        f, g, aux = call(x)
    else:
        f, g, aux = float(initial[0]), np.asarray(initial[1], dtype=float), (initial[2] if len(initial) > 2 else None)
    losses: list[float] = []
    steps = []
    status = "max_iters"
    it = 0
    while it < max_iters:
        if not np.all(np.isfinite(g)) or not np.isfinite(f):
            raise EvaluationError("non-finite loss or gradient in L-BFGS")
        if np.linalg.norm(g) < gtol:
            status = "gtol"
            break
        d = state.direction(g)
        slope = float(g @ d)
        if not slope < 0:
            state.clear()
            d = -g
            slope = float(g @ d)
        alpha1 = 1.0 if state.s else min(1.0, 1.0 / np.linalg.norm(g))

        def phi(a, x=x, d=d):
            xa = x + a * d
            fa, ga, auxa = call(xa)
            return fa, (float(ga @ d) if np.all(np.isfinite(ga)) else np.nan), (xa, fa, ga, auxa)

        alpha, payload, ok = _line_search(phi, f, slope, alpha1, state.c1, state.c2, state.max_ls_evals)
        if alpha == 0 or payload is None:
            status = "line_search_failed"
            break
        xn, fn, gn, auxn = payload
        state.push(xn - x, gn - g)
        steps.append((alpha, f, fn, slope))
        x, f, g, aux = xn, fn, gn, auxn
        it += 1
        losses.append(f)
        if callback is not None:
            callback(it, f)
        if not ok:
            status = "line_search_failed"
            break
    return LbfgsResult(x, f, g, aux, it, n_eval, status, losses, steps)
