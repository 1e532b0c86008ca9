"""Ground-truth fields for measuring PINN error.

Analytic solutions cover Laplace, dispersive and reaction-diffusion.  Burgers
uses the Cole-Hopf representation integrated with Gauss-Hermite quadrature,
cross-checked by a fourth-order finite-difference method-of-lines solve.
Allen-Cahn uses Chebyshev collocation in space with an implicit stiff
integrator in time.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator, CubicSpline
from scipy.special import roots_hermite
from scipy.stats import qmc

from .autodiff import ContractError
from .pde import BURGERS_NU, PdeProblem, get_problem

REFERENCE_VERSION = "1"


class UnsupportedReference(ValueError):
    pass


class ReferenceConvergenceError(RuntimeError):
    pass


@dataclass
class ReferenceField:
    """Reference values on a fixed evaluation set."""

    points: np.ndarray
    values: np.ndarray
    provenance: str
    accuracy: float
    version: str = REFERENCE_VERSION

    def info(self) -> dict:
        return {"provenance": self.provenance, "accuracy": float(self.accuracy), "version": self.version}


# ---------------------------------------------------------------------------
# Evaluation sets
# ---------------------------------------------------------------------------


def grid_points(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Points of the tensor grid, ``xs`` varying slowest."""
    X, T = np.meshgrid(xs, ts, indexing="ij")
    return np.column_stack([X.ravel(), T.ravel()])


def evaluation_grid(problem: PdeProblem):
    """``(points, axes)``: 256 x 100 space-time grid, 100 x 100 polar grid, or 10^4 Halton points."""
    dom = problem.domain
    if problem.name == "laplace-polar":
        axes = (np.linspace(0.0, 1.0, 100), np.linspace(0.0, 2.0 * np.pi, 100))
        return grid_points(*axes), axes
    if dom.dim == 2:
        axes = (np.linspace(dom.lo[0], dom.hi[0], 256), np.linspace(dom.lo[1], dom.hi[1], 100))
        return grid_points(*axes), axes
    halton = qmc.Halton(d=dom.dim, scramble=True, seed=0)
    pts = qmc.scale(halton.random(10_000), dom.lo, dom.hi)
    return pts, None


# ---------------------------------------------------------------------------
# Analytic
# ---------------------------------------------------------------------------


def analytic_reference(problem: PdeProblem, points: np.ndarray | None = None) -> ReferenceField:
    if problem.exact is None:
        raise UnsupportedReference(f"{problem.name} has no analytic solution")
    if points is None:
        points, _ = evaluation_grid(problem)
    return ReferenceField(points, problem.exact(points), "analytic", 0.0)


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _hermgauss(order: int):
    z, w = roots_hermite(order)
    with np.errstate(divide="ignore"):
        return z, np.log(w)


def burgers_reference(x, t, order: int = 256, nu: float = BURGERS_NU) -> np.ndarray:
    """Cole-Hopf solution of viscous Burgers with ``u(x,0) = -sin(pi x)``.

    ``u = -int sin(pi(x-eta)) F(x-eta) G(eta) / int F(x-eta) G(eta)`` with
    ``F(y) = exp(-cos(pi y) / (2 pi nu))`` and the heat kernel ``G``; the
    substitution ``eta = sqrt(4 nu t) z`` turns both integrals into
    Gauss-Hermite sums, evaluated in log space.
    """
    if order < 64:
        raise ContractError("quadrature order must be at least 64")
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    shape = x.shape
    x, t = x.ravel(), t.ravel()
    out = -np.sin(np.pi * x)
    live = t > 0
    if not np.any(live):
        return out.reshape(shape)
    z, logw = _hermgauss(order)
    xl = x[live][:, None]
    sig = np.sqrt(4.0 * nu * t[live])[:, None]
    y = xl - sig * z[None, :]
    expo = logw[None, :] - np.cos(np.pi * y) / (2.0 * np.pi * nu)
    expo -= expo.max(axis=1, keepdims=True)
    wts = np.exp(expo)
    num = (wts * np.sin(np.pi * y)).sum(axis=1)
    den = wts.sum(axis=1)
    vals = -num / den
    if not np.all(np.isfinite(vals)):
        raise ReferenceConvergenceError("Cole-Hopf quadrature produced non-finite values")
    out[live] = vals
    return out.reshape(shape)


def burgers_cole_hopf(points: np.ndarray, order: int = 256) -> ReferenceField:
    fine = burgers_reference(points[:, 0], points[:, 1], order)
    coarse = burgers_reference(points[:, 0], points[:, 1], order // 2)
    smooth = ~((np.abs(points[:, 0]) < 0.05) & (points[:, 1] > 0.4))
    acc = float(np.max(np.abs(fine - coarse)[smooth])) if np.any(smooth) else 0.0
    return ReferenceField(points, fine, f"cole-hopf/gauss-hermite-{order}", acc)


def _d4(u, dx):
    """Fourth-order central first and second differences on interior nodes (Dirichlet 0 padding)."""
    up = np.concatenate([[0.0], u, [0.0]])  # includes boundary nodes
    n = len(up)
    d1 = np.zeros(n)
    d2 = np.zeros(n)
    d1[2:-2] = (up[:-4] - 8 * up[1:-3] + 8 * up[3:-1] - up[4:]) / (12 * dx)
    d2[2:-2] = (-up[:-4] + 16 * up[1:-3] - 30 * up[2:-2] + 16 * up[3:-1] - up[4:]) / (12 * dx * dx)
    for i in (1, n - 2):
        d1[i] = (up[i + 1] - up[i - 1]) / (2 * dx)
        d2[i] = (up[i + 1] - 2 * up[i] + up[i - 1]) / (dx * dx)
    return d1[1:-1], d2[1:-1]


def burgers_mol(t_eval: np.ndarray, nx: int = 2048, nu: float = BURGERS_NU, rtol: float = 1e-9):
    """Method-of-lines Burgers solve on ``nx`` uniform nodes.  Returns ``(x, u[x, t])``."""
    x = np.linspace(-1.0, 1.0, nx)
    dx = x[1] - x[0]
    u0 = -np.sin(np.pi * x[1:-1])

    def rhs(_, u):
        # conservative flux (u^2/2)_x with the same stencil
        f1, _ = _d4(0.5 * u * u, dx)
        _, uxx = _d4(u, dx)
        return -f1 + nu * uxx

    sol = solve_ivp(rhs, (0.0, float(np.max(t_eval))), u0, method="RK45", t_eval=t_eval, rtol=rtol, atol=1e-12)
    if not sol.success:
        raise ReferenceConvergenceError(f"Burgers method of lines failed: {sol.message}")
    full = np.zeros((nx, len(t_eval)))
    full[1:-1] = sol.y
    return x, full


def burgers_mol_at(points: np.ndarray, nx: int = 2048) -> np.ndarray:
    ts = np.unique(points[:, 1])
    x, U = burgers_mol(ts, nx)
    out = np.empty(len(points))
    for j, t in enumerate(ts):
        sel = points[:, 1] == t
        out[sel] = CubicSpline(x, U[:, j])(points[sel, 0])
    return out


# ---------------------------------------------------------------------------
# Allen-Cahn
# ---------------------------------------------------------------------------


def cheb(n: int):
    """Chebyshev points ``cos(j pi / n)`` and differentiation matrix (negative-sum diagonal)."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def allen_cahn_solve(t_eval: np.ndarray, n: int = 512, eps: float = 0.001, rtol: float = 1e-8):
    """Chebyshev method-of-lines solution; returns ``(nodes, u[node, t])``."""
    x, D = cheb(n)
    D2 = D @ D
    inner = slice(1, n)
    A = eps * D2[inner, inner]
    bdry = eps * (D2[inner, 0] + D2[inner, n]) * (-1.0)
    u0 = x[inner] ** 2 * np.cos(np.pi * x[inner])

    def rhs(_, u):
        return A @ u + bdry + 5.0 * (u - u**3)

    def jac(_, u):
        J = A.copy()
        J[np.diag_indices_from(J)] += 5.0 - 15.0 * u * u
        return J

    sol = solve_ivp(rhs, (0.0, float(np.max(t_eval))), u0, method="BDF", jac=jac, t_eval=t_eval, rtol=rtol, atol=1e-10)
    if not sol.success:
        raise ReferenceConvergenceError(f"Allen-Cahn solve failed: {sol.message}")
    U = np.full((n + 1, len(t_eval)), -1.0)
    U[inner] = sol.y
    return x, U


def allen_cahn_reference(xs: np.ndarray, ts: np.ndarray, n: int = 512, tol: float = 1e-5):
    """Values on the grid ``xs x ts`` (shape ``(len(xs), len(ts))``) and a refinement estimate.

    The estimate is the max-norm change when the node count is doubled;
    exceeding ``tol`` raises :class:`ReferenceConvergenceError`.
    """
    def on_grid(nodes):
        x, U = allen_cahn_solve(ts, nodes)
        return BarycentricInterpolator(x, U)(xs)

    vals = on_grid(n)
    est = float(np.max(np.abs(vals - on_grid(2 * n))))
    if not est < tol:
        raise ReferenceConvergenceError(f"Allen-Cahn reference not converged (refinement change {est:.2e})")
    return vals, est


# ---------------------------------------------------------------------------
# Dispatch and caching
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _cached_reference(name: str) -> ReferenceField:
    problem = get_problem(name)
    points, axes = evaluation_grid(problem)
    if problem.exact is not None:
        return analytic_reference(problem, points)
    if name == "burgers":
        return burgers_cole_hopf(points)
    if name == "allen-cahn":
        vals, est = allen_cahn_reference(axes[0], axes[1])
        return ReferenceField(points, vals.ravel(), "method-of-lines/chebyshev-512", est)
    raise UnsupportedReference(name)


def reference_for(problem: PdeProblem) -> ReferenceField:
    """Reference on the problem's fixed evaluation set (cached per process)."""
    if problem.exact is not None:
        return analytic_reference(problem)
    return _cached_reference(problem.name)


def write_reference(ref: ReferenceField, problem: PdeProblem, out_dir) -> Path:
    """``reference_<name>.csv`` (coordinates + ``u``) plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / f"reference_{problem.name}"
    cols = [f"x{i}" for i in range(problem.dim)] if problem.dim > 2 else (["r", "theta"] if problem.name == "laplace-polar" else ["x", "t"])
    np.savetxt(stem.with_suffix(".csv"), np.column_stack([ref.points, ref.values]), delimiter=",",
               header=",".join(cols + ["u"]), comments="", fmt="%.17g")
    _, axes = evaluation_grid(problem)
    grid = {"kind": "tensor", "shape": [len(a) for a in axes]} if axes is not None else {"kind": "halton", "n": len(ref.points), "seed": 0}
    sidecar = {"problem": problem.name, "grid": grid, **ref.info()}
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return stem.with_suffix(".csv")


def read_reference(path) -> ReferenceField:
    path = Path(path)
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1)
    meta = json.loads(path.with_suffix(".json").read_text())
    return ReferenceField(data[:, :-1], data[:, -1], meta["provenance"], meta["accuracy"], meta["version"])
