"""Fully connected tanh networks over a flat parameter vector.

Parameter layout (frozen): for each layer in order, the weight matrix of
shape ``(fan_in, fan_out)`` in row-major order, followed by its bias of
length ``fan_out``.  Hidden layers apply tanh; the output layer is affine.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, EvaluationError, Jet, ProbeLayout


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    depth: int = 3
    width: int = 20
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.depth < 1 or self.width < 1:
            raise ContractError(f"invalid network spec {self}")
        if self.output_dim != 1:
            raise ContractError("only scalar-output networks are supported")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.width] * self.depth + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_sizes)

    def blocks(self):
        """Yield ``(w_start, w_stop, b_stop, fan_in, fan_out)`` per layer."""
        pos = 0
        for i, o in self.layer_sizes:
            yield pos, pos + i * o, pos + i * o + o, i, o
            pos += i * o + o


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params)
    for w0, w1, _, fi, fo in spec.blocks():
        bound = np.sqrt(6.0 / (fi + fo))
        theta[w0:w1] = rng.uniform(-bound, bound, size=fi * fo)
    return theta


def _layers(spec: NetworkSpec, params):
    for w0, w1, b1, fi, fo in spec.blocks():
        if isinstance(params, ad.Var):
            yield ad.take_block(params, w0, w1, (fi, fo)), ad.take_block(params, w1, b1, (fo,))
        else:
            yield params[w0:w1].reshape(fi, fo), params[w1:b1]


def forward_slab(spec: NetworkSpec, params, slab, layout: ProbeLayout):
    """Propagate an input slab ``(rows, B, input_dim)``; returns ``(rows, B)``.

    ``params`` may be an ndarray or a recorded :class:`~glfpinn.autodiff.Var`;
    in the latter case the result is recorded too.
    """
    if slab.shape[-1] != spec.input_dim:
        raise ContractError(f"expected input dim {spec.input_dim}, got {slab.shape[-1]}")
    layers = list(_layers(spec, params))
    h = slab
    for W, b in layers[:-1]:
        h = ad.tanh(ad.affine(h, W, b), layout)
    W, b = layers[-1]
    out = ad.affine(h, W, b)
    if isinstance(out, ad.Var):
        return ad.Var(out.tape, out.value[..., 0], (out,), lambda g: (g[..., None],))
    return out[..., 0]


def forward(spec: NetworkSpec, params, x):
    """Network output at ``x``.

    ``x`` is either an array of points ``(..., input_dim)`` or a :class:`Jet`
    whose coefficients have shape ``(K+1, ..., input_dim)``; jets come back
    as jets of the output.
    """
    if isinstance(x, Jet):
        c = x.coeffs
        layout = ProbeLayout((0,), (x.order,)) if x.order > 0 else ProbeLayout((), ())
        lead = c.shape[1:-1]
        slab = c.reshape((c.shape[0], -1, c.shape[-1]))
        out = forward_slab(spec, params, slab, layout)
        return Jet(out.reshape((c.shape[0],) + lead))
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.input_dim:
        raise ContractError(f"expected input dim {spec.input_dim}, got {x.shape[-1]}")
    lead = x.shape[:-1]
    out = forward_slab(spec, params, x.reshape(1, -1, spec.input_dim), ProbeLayout((), ()))
    return out[0].reshape(lead)


def eval_with_derivatives(spec: NetworkSpec, params, x, axis: int, order: int):
    """``(u, d1, ..., dK)`` of the output along coordinate ``axis`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if not 0 <= axis < spec.input_dim:
        raise ContractError(f"axis {axis} out of range")
    if not 0 <= order <= ad.MAX_ORDER:
        raise ContractError(f"order {order} out of range")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(params))):
        raise EvaluationError("non-finite input or parameters")
    coeffs = np.zeros((order + 1,) + x.shape)
    coeffs[0] = x
    if order >= 1:
        coeffs[1][..., axis] = 1.0
    return tuple(forward(spec, params, Jet(coeffs)).derivatives())


def output_bound(spec: NetworkSpec, params: np.ndarray) -> float:
    """``sum |w_last| + |b_last|``; bounds ``|forward|`` since tanh is in [-1, 1]."""
    w0, _, b1, _, _ = list(spec.blocks())[-1]
    return float(np.abs(params[w0:b1]).sum())


def save_params(path, spec: NetworkSpec, params: np.ndarray, seed: int | None = None) -> None:
    """Write ``<path>.json`` (spec, seed, count) and ``<path>.csv`` (one value per line)."""
    path = Path(path)
    header = {"spec": asdict(spec), "seed": seed, "n_params": int(params.size), "layout": "layer-major W(row-major),b"}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))
    np.savetxt(path.with_suffix(".csv"), params, fmt="%.17g")


def load_params(path) -> tuple[NetworkSpec, np.ndarray, int | None]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    spec = NetworkSpec(**header["spec"])
    params = np.atleast_1d(np.loadtxt(path.with_suffix(".csv")))
    if params.size != spec.n_params:
        raise ContractError("parameter file does not match its header")
    return spec, params, header.get("seed")
