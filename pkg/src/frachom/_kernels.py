"""Hot numeric kernels.

Each kernel exists twice: a numba ``@njit`` version and a plain numpy
version with identical semantics.  The numba path is used when numba imports
cleanly and ``FRACHOM_DISABLE_NUMBA`` is unset (or ``0``); set it to ``1`` to
force the numpy path.  Both variants stay importable under explicit names so
the benchmark and the equivalence tests can exercise them side by side.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("FRACHOM_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# history convolution:  out = sum_{k=1}^{n} w[n-k] * hist[k]
# ---------------------------------------------------------------------------


def history_sum_numpy(weights: np.ndarray, hist: np.ndarray, n: int) -> np.ndarray:
    if n < 1:
        return np.zeros(hist.shape[1])
    # hist rows 1..n pair with weights n-1..0
    return weights[n - 1 :: -1][:n] @ hist[1 : n + 1]


def _history_sum_py(weights, hist, n):
    ncol = hist.shape[1]
    out = np.zeros(ncol)
    for k in range(1, n + 1):
        wk = weights[n - k]
        row = hist[k]
        for j in range(ncol):
            out[j] += wk * row[j]
    return out


# ---------------------------------------------------------------------------
# control-volume stiffness: per-triangle 3x3 local matrices
# ---------------------------------------------------------------------------


def local_stiffness_numpy(xy: np.ndarray, tris: np.ndarray, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Vectorised local CVM flux matrices, shape (ntri, 3, 3).

    Row ``a`` holds the net flux into the sub-control volume of local vertex
    ``a`` through the two median-dual faces inside the triangle, as a linear
    form in the three vertex values.
    """
    p = xy[tris]  # (nt, 3, 2)
    x, y = p[..., 0], p[..., 1]
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    y1, y2, y3 = y[:, 0], y[:, 1], y[:, 2]
    area2 = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    # grad N_i = (b_i, c_i) / (2 area) in the usual linear-element notation
    bx = np.stack([y2 - y3, y3 - y1, y1 - y2], axis=1) / area2[:, None]
    by = np.stack([x3 - x2, x1 - x3, x2 - x1], axis=1) / area2[:, None]
    gx = qx[:, None] * bx  # q1 dN/dx, constant on the triangle
    gy = qy[:, None] * by
    cx = x.mean(axis=1)
    cy = y.mean(axis=1)
    out = np.zeros((tris.shape[0], 3, 3))
    for a in range(3):
        b = (a + 1) % 3
        c = (a + 2) % 3
        # face from midpoint(a,b) to centroid, then centroid to midpoint(a,c);
        # traversed anticlockwise around vertex a
        mabx = 0.5 * (x[:, a] + x[:, b])
        maby = 0.5 * (y[:, a] + y[:, b])
        macx = 0.5 * (x[:, a] + x[:, c])
        macy = 0.5 * (y[:, a] + y[:, c])
        dy = (cy - maby) + (macy - cy)
        dx = (cx - mabx) + (macx - cx)
        out[:, a, :] = gx * dy[:, None] - gy * dx[:, None]
    return out


def _local_stiffness_py(xy, tris, qx, qy):
    nt = tris.shape[0]
    out = np.zeros((nt, 3, 3))
    for e in range(nt):
        i0, i1, i2 = tris[e, 0], tris[e, 1], tris[e, 2]
        x1, y1 = xy[i0, 0], xy[i0, 1]
        x2, y2 = xy[i1, 0], xy[i1, 1]
        x3, y3 = xy[i2, 0], xy[i2, 1]
        area2 = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        bx0 = (y2 - y3) / area2
        bx1 = (y3 - y1) / area2
        bx2 = (y1 - y2) / area2
        by0 = (x3 - x2) / area2
        by1 = (x1 - x3) / area2
        by2 = (x2 - x1) / area2
        cx = (x1 + x2 + x3) / 3.0
        cy = (y1 + y2 + y3) / 3.0
        xs = (x1, x2, x3)
        ys = (y1, y2, y3)
        for a in range(3):
            b = (a + 1) % 3
            c = (a + 2) % 3
            mabx = 0.5 * (xs[a] + xs[b])
            maby = 0.5 * (ys[a] + ys[b])
            macx = 0.5 * (xs[a] + xs[c])
            macy = 0.5 * (ys[a] + ys[c])
            dy = (cy - maby) + (macy - cy)
            dx = (cx - mabx) + (macx - cx)
            out[e, a, 0] = qx[e] * bx0 * dy - qy[e] * by0 * dx
            out[e, a, 1] = qx[e] * bx1 * dy - qy[e] * by1 * dx
            out[e, a, 2] = qx[e] * bx2 * dy - qy[e] * by2 * dx
    return out


# ---------------------------------------------------------------------------
# per-triangle gradients of a nodal field
# ---------------------------------------------------------------------------


def triangle_gradients_numpy(xy: np.ndarray, tris: np.ndarray, u: np.ndarray) -> np.ndarray:
    p = xy[tris]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    ue = u[tris]
    g = np.empty((tris.shape[0], 2))
    g[:, 0] = (bx * ue).sum(axis=1) / area2
    g[:, 1] = (by * ue).sum(axis=1) / area2
    return g


def _triangle_gradients_py(xy, tris, u):
    nt = tris.shape[0]
    g = np.empty((nt, 2))
    for e in range(nt):
        i0, i1, i2 = tris[e, 0], tris[e, 1], tris[e, 2]
        x1, y1 = xy[i0, 0], xy[i0, 1]
        x2, y2 = xy[i1, 0], xy[i1, 1]
        x3, y3 = xy[i2, 0], xy[i2, 1]
        area2 = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        g[e, 0] = ((y2 - y3) * u[i0] + (y3 - y1) * u[i1] + (y1 - y2) * u[i2]) / area2
        g[e, 1] = ((x3 - x2) * u[i0] + (x1 - x3) * u[i1] + (x2 - x1) * u[i2]) / area2
    return g


if _HAVE_NUMBA:
    history_sum_numba = njit(cache=True)(_history_sum_py)
    local_stiffness_numba = njit(cache=True)(_local_stiffness_py)
    triangle_gradients_numba = njit(cache=True)(_triangle_gradients_py)
else:  # pragma: no cover
    history_sum_numba = None
    local_stiffness_numba = None
    triangle_gradients_numba = None


if NUMBA_ENABLED:
    history_sum = history_sum_numba
    local_stiffness = local_stiffness_numba
    triangle_gradients = triangle_gradients_numba
else:
    history_sum = history_sum_numpy
    local_stiffness = local_stiffness_numpy
    triangle_gradients = triangle_gradients_numpy


def backend() -> str:
    """Name of the active kernel backend (``"numba"`` or ``"numpy"``)."""
    return "numba" if NUMBA_ENABLED else "numpy"
