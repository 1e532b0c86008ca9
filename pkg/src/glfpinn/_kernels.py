"""Fused loops for the slab tanh jet and its adjoint.

The numpy versions in :mod:`glfpinn.autodiff` are the reference; these
kernels compute the same closed forms in one pass over memory.  Slabs are
passed as 2-D ``(rows, M)`` views with the level sizes ``n1 >= n2 >= n3``.
"""

import numpy as np
from numba import njit

_THIRD = 1.0 / 3.0


@njit(cache=True)
def tanh_forward(a, y0, out, n1, n2, n3):
    o1 = 1
    o2 = o1 + n1
    o3 = o2 + n2
    for m in range(a.shape[1]):
        y = y0[m]
        t = 1.0 - y * y
        out[0, m] = y
        for p in range(n1):
            out[o1 + p, m] = t * a[o1 + p, m]
        for p in range(n2):
            a1 = a[o1 + p, m]
            out[o2 + p, m] = t * (a[o2 + p, m] - y * a1 * a1)
        for p in range(n3):
            a1 = a[o1 + p, m]
            a2 = a[o2 + p, m]
            out[o3 + p, m] = t * (a[o3 + p, m] - 2.0 * y * a1 * a2 + (y * y - _THIRD) * a1 * a1 * a1)


@njit(cache=True)
def tanh_backward(a, y0, g, ga, n1, n2, n3):
    o1 = 1
    o2 = o1 + n1
    o3 = o2 + n2
    for m in range(a.shape[1]):
        y = y0[m]
        t = 1.0 - y * y
        yt = y * t
        lin = 0.0
        quad = 0.0
        cub = 0.0
        for p in range(n1):
            g1 = g[o1 + p, m]
            lin += g1 * a[o1 + p, m]
            ga[o1 + p, m] = g1 * t
        for p in range(n2):
            g2 = g[o2 + p, m]
            a1 = a[o1 + p, m]
            lin += g2 * a[o2 + p, m]
            quad += g2 * a1 * a1
            ga[o1 + p, m] -= 2.0 * yt * g2 * a1
            ga[o2 + p, m] = g2 * t
        for p in range(n3):
            g3 = g[o3 + p, m]
            a1 = a[o1 + p, m]
            a2 = a[o2 + p, m]
            lin += g3 * a[o3 + p, m]
            quad += 2.0 * g3 * a1 * a2
            cub += g3 * a1 * a1 * a1
            ga[o1 + p, m] += g3 * (3.0 * t * (y * y - _THIRD) * a1 * a1 - 2.0 * yt * a2)
            ga[o2 + p, m] -= 2.0 * yt * g3 * a1
            ga[o3 + p, m] = g3 * t
        ga[0, m] = (g[0, m] * t - 2.0 * yt * lin - t * (1.0 - 3.0 * y * y) * quad
                    + yt * (8.0 / 3.0 - 4.0 * y * y) * cub)


def level_sizes(layout):
    return tuple(layout.level_size(k) for k in (1, 2, 3))


def fused_tanh(a: np.ndarray, layout) -> np.ndarray:
    a2 = np.ascontiguousarray(a).reshape(a.shape[0], -1)
    out = np.empty_like(a2)
    tanh_forward(a2, np.tanh(a2[0]), out, *level_sizes(layout))
    return out.reshape(a.shape)


def fused_tanh_vjp(a: np.ndarray, g: np.ndarray, layout) -> np.ndarray:
    a2 = np.ascontiguousarray(a).reshape(a.shape[0], -1)
    g2 = np.ascontiguousarray(g).reshape(a2.shape)
    ga = np.empty_like(a2)
    tanh_backward(a2, np.tanh(a2[0]), g2, ga, *level_sizes(layout))
    return ga.reshape(a.shape)
