"""Time-discretisation weights for Riemann-Liouville operators and the Mittag-Leffler function.

All weights refer to the shifted Grünwald-Letnikov family with shifts
``(p, q) = (0, -1)``.  For an order ``alpha`` the building blocks are

* ``g_k``: Grünwald coefficients ``(-1)^k binom(alpha, k)``;
* ``omega_k``: weighted-and-shifted (WSGL) weights, second order at ``t_n``;
* ``D_k``: Crank-Nicolson averages of ``omega``, second order at ``t_{n-1/2}``;
* ``E_k^(n)`` and ``P_k^(n)``: starting weights that make the fractional and
  first-derivative operators exact on ``t^sigma_r``.

``alpha = 0`` is accepted and turns the fractional operator into the
identity (``D_0 = D_1 = 1/2``), which is how integer-order regions are handled.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError

__all__ = [
    "gl_weights",
    "wsgl_weights",
    "cn_wsgl_weights",
    "correction_weights_fractional",
    "correction_weights_first_derivative",
    "default_correction_count",
    "default_sigma",
    "WeightTable",
    "mittag_leffler",
    "rl_derivative_power",
]


def _check_order(alpha: float) -> None:
    if not (0.0 <= alpha < 2.0) or not math.isfinite(alpha):
        raise DomainError(f"order alpha={alpha} outside [0, 2)")


def gl_weights(alpha: float, n: int) -> np.ndarray:
    """Grünwald coefficients ``g_0..g_n`` by the stable product recurrence."""
    _check_order(alpha)
    if n < 0:
        raise DomainError("n must be non-negative")
    g = np.empty(n + 1)
    g[0] = 1.0
    if n:
        k = np.arange(1, n + 1, dtype=float)
        g[1:] = np.cumprod(1.0 - (alpha + 1.0) / k)
    return g


def wsgl_weights(alpha: float, n: int) -> np.ndarray:
    """``omega_0..omega_n`` for the ``(0, -1)`` shifted pair."""
    g = gl_weights(alpha, n)
    w = 0.5 * (2.0 + alpha) * g
    w[1:] -= 0.5 * alpha * g[:-1]
    return w


def cn_wsgl_weights(alpha: float, n: int) -> np.ndarray:
    """``D_0..D_n``: averages of consecutive WSGL weights."""
    w = wsgl_weights(alpha, n)
    d = 0.5 * w
    d[1:] += 0.5 * w[:-1]
    return d


def default_correction_count(gamma: float, cap: int | None = None) -> int:
    """Smallest ``m`` with ``(m + 1) * gamma >= 2``, optionally capped."""
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma={gamma} outside (0, 1]")
    m = max(0, math.ceil(2.0 / gamma - 1.0 - 1e-12))
    return m if cap is None else min(m, cap)


def default_sigma(gamma: float, m: int) -> np.ndarray:
    return gamma * np.arange(1, m + 1, dtype=float)


def _check_sigma(sigma: np.ndarray) -> None:
    if sigma.ndim != 1 or sigma.size == 0:
        raise DomainError("need at least one correction exponent")
    if np.any(sigma < 0) or np.any(np.diff(sigma) <= 0):
        raise DomainError(f"correction exponents must be non-negative and strictly increasing, got {sigma}")


def _starting_matrix(sigma: np.ndarray) -> np.ndarray:
    # A[r, k-1] = k ** sigma_r; row-scaled solve keeps it well conditioned for m <= 4
    k = np.arange(1, sigma.size + 1, dtype=float)
    return k[None, :] ** sigma[:, None]


def _solve_starting(sigma: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x_n = rhs_n`` for every column ``n`` of ``rhs`` (shape (m, N))."""
    a = _starting_matrix(sigma)
    scale = np.abs(a).max(axis=1, keepdims=True)
    an = a / scale
    if np.linalg.cond(an) > 1e12:
        raise DomainError(f"starting-weight system is singular for sigma={sigma}")
    return np.linalg.solve(an, rhs / scale)


def _power_table(sigma: np.ndarray, n_max: int) -> np.ndarray:
    k = np.arange(n_max + 1, dtype=float)
    out = k[None, :] ** sigma[:, None]
    # level 0 carries no increment, so sigma = 0 means a unit jump after t = 0
    out[:, 0] = 0.0
    return out


def _fractional_rhs(alpha: float, sigma: np.ndarray, d: np.ndarray, ns: np.ndarray) -> np.ndarray:
    n_max = int(ns.max())
    powers = _power_table(sigma, n_max)
    out = np.empty((sigma.size, ns.size))
    half = ns - 0.5
    for r, s in enumerate(sigma):
        conv = np.convolve(d[: n_max + 1], powers[r])[: n_max + 1]
        exact = math.exp(math.lgamma(s + 1.0) - math.lgamma(s + 1.0 - alpha)) * half ** (s - alpha)
        out[r] = exact - conv[ns]
    return out


def _first_derivative_rhs(sigma: np.ndarray, ns: np.ndarray) -> np.ndarray:
    nf = ns.astype(float)
    out = np.empty((sigma.size, ns.size))
    for r, s in enumerate(sigma):
        if s == 0.0:
            # the jump function keeps its plain difference quotient
            out[r] = 0.0
            continue
        out[r] = s * (nf - 0.5) ** (s - 1.0) - (nf**s - (nf - 1.0) ** s)
    return out


def correction_weights_fractional(alpha: float, sigma: Sequence[float], n: int) -> np.ndarray:
    """``E_1..E_m`` at step ``n`` for the averaged operator ``sum_k D_{n-k} v_k``.

    With these weights ``sum_{k=0}^n D_{n-k} v(t_k) + sum_k E_k v(t_k)`` equals
    ``tau^alpha`` times the exact Riemann-Liouville derivative at ``t_{n-1/2}``
    for each ``v = t^sigma_r`` (``tau = 1`` scaling).
    """
    sig = np.asarray(sigma, dtype=float)
    _check_sigma(sig)
    if n < 1:
        raise DomainError("step index n must be >= 1")
    d = cn_wsgl_weights(alpha, n)
    rhs = _fractional_rhs(alpha, sig, d, np.array([n]))
    return _solve_starting(sig, rhs)[:, 0]


def correction_weights_first_derivative(sigma: Sequence[float], n: int) -> np.ndarray:
    """``P_1..P_m`` at step ``n`` so the centred difference is exact on ``t^sigma_r``."""
    sig = np.asarray(sigma, dtype=float)
    _check_sigma(sig)
    if n < 1:
        raise DomainError("step index n must be >= 1")
    return _solve_starting(sig, _first_derivative_rhs(sig, np.array([n])))[:, 0]


def rl_derivative_power(alpha: float, sigma: float, t: float | np.ndarray) -> float | np.ndarray:
    """Exact Riemann-Liouville derivative of order ``alpha`` of ``t^sigma``."""
    c = math.exp(math.lgamma(sigma + 1.0) - math.lgamma(sigma + 1.0 - alpha))
    return c * np.asarray(t, dtype=float) ** (sigma - alpha)


@dataclass(frozen=True, eq=False)
class WeightTable:
    """All temporal weights for one derivative order ``alpha = 1 - gamma``.

    ``E[n]`` and ``P[n]`` hold the ``m`` starting weights for step ``n``
    (row 0 is unused and zero).  ``m = 0`` disables corrections.
    """

    order: float
    n_max: int
    g: np.ndarray
    omega: np.ndarray
    d_avg: np.ndarray
    sigma: np.ndarray
    E: np.ndarray
    P: np.ndarray

    @property
    def m(self) -> int:
        return int(self.sigma.size)

    @classmethod
    def build(cls, alpha: float, n_max: int, sigma: Sequence[float] = ()) -> "WeightTable":
        _check_order(alpha)
        if n_max < 1:
            raise DomainError("n_max must be >= 1")
        sig = np.asarray(sigma, dtype=float)
        g = gl_weights(alpha, n_max)
        w = wsgl_weights(alpha, n_max)
        d = cn_wsgl_weights(alpha, n_max)
        m = sig.size
        E = np.zeros((n_max + 1, m))
        P = np.zeros((n_max + 1, m))
        if m:
            _check_sigma(sig)
            ns = np.arange(1, n_max + 1)
            E[1:] = _solve_starting(sig, _fractional_rhs(alpha, sig, d, ns)).T
            P[1:] = _solve_starting(sig, _first_derivative_rhs(sig, ns)).T
        for arr in (g, w, d, E, P, sig):
            arr.setflags(write=False)
        return cls(float(alpha), int(n_max), g, w, d, sig, E, P)

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            head = ["k", "g", "omega", "D"]
            head += [f"E_{r + 1}" for r in range(self.m)] + [f"P_{r + 1}" for r in range(self.m)]
            wr.writerow(head)
            for k in range(self.n_max + 1):
                row = [k, repr(self.g[k]), repr(self.omega[k]), repr(self.d_avg[k])]
                row += [repr(v) for v in self.E[k]] + [repr(v) for v in self.P[k]]
                wr.writerow(row)


# ---------------------------------------------------------------------------
# Mittag-Leffler
# ---------------------------------------------------------------------------


def _ml_series(alpha: float, beta: float, z: float) -> float:
    """Taylor series, terms built from log-gamma.  Fine for |z| <= 1 and z > 0."""
    if z == 0.0:
        return 1.0 / special.gamma(beta) if beta > 0 or beta != int(beta) else 0.0
    lz = math.log(abs(z))
    sgn = -1.0 if z < 0 else 1.0
    total = 0.0
    k = 0
    # peak term sits near k ~ z^(1/alpha)/alpha, so the bound scales with it
    kmax = 200 + int(4.0 * max(z, 1.0) ** (1.0 / alpha) / alpha)
    while k < kmax:
        arg = alpha * k + beta
        if arg <= 0 and arg == int(arg):
            k += 1
            continue
        lg = special.gammaln(arg)
        term = math.exp(k * lz - lg) * special.gammasgn(arg) * sgn**k
        total += term
        if k > 5 and abs(term) <= 1e-17 * max(abs(total), 1e-300):
            break
        k += 1
    return total


def _ml_negative_integral(alpha: float, beta: float, x: float) -> float:
    """``E_{alpha,beta}(-x)`` for ``x > 0``, ``0 < alpha < 1``, ``0 < beta <= 1``.

    Hankel-contour representation collapsed onto the real axis, with
    ``r = s^(1/alpha)`` so the integrand is smooth at the origin.  The
    denominator is ``(s - s0)^2 + d^2`` with ``s0 = x cos((1-alpha) pi)`` and
    ``d = x sin((1-alpha) pi)``; as alpha nears 1 this is a narrow Lorentzian
    peak, integrated in the angle variable ``s = s0 + d tan(theta)``.
    """
    p = 1.0 / alpha
    q = (1.0 - beta) * p
    # angles measured from pi so that beta = 1 or alpha near 1 do not lose digits
    sb = math.sin((1.0 - beta) * math.pi)
    cb = math.cos((1.0 - beta) * math.pi)
    s0 = x * math.cos((1.0 - alpha) * math.pi)
    d = x * math.sin((1.0 - alpha) * math.pi)

    # s sin(beta pi) + x sin((beta - alpha) pi), rewritten without cancellation at s0
    def g(s: float) -> float:
        return math.exp(-(s**p)) * s**q * ((s - s0) * sb + d * cb)

    def den(s: float) -> float:
        return (s - s0) ** 2 + d * d

    # exp(-s^p) is below e^-60 past s = 60^alpha, so the range is finite
    top = 60.0**alpha
    pieces: list[tuple[Callable[[float], float], float, float]] = []
    if 0.0 < s0 < top and d < 0.05 * s0:
        # s = s0 + d tan(theta) flattens the peak; the angle window stays well
        # inside (-pi/2, pi/2) so tan keeps its digits
        half = min(0.5 * s0, 1e4 * d)
        top = max(top, 1.5 * s0)
        edge = math.atan(half / d)

        def peak(theta: float) -> float:
            t = math.tan(theta)
            s = s0 + d * t
            return math.exp(-(s**p)) * s**q * (t * sb + cb)

        def f(s: float) -> float:
            return g(s) / den(s)

        # geometric cuts walk quad down the 1/(s - s0)^2 flanks
        steps = [half]
        while steps[-1] * 10.0 < 0.5 * s0:
            steps.append(steps[-1] * 10.0)
        steps.append(0.5 * s0)
        left = [0.0] + [s0 - r for r in reversed(steps)]
        right = [s0 + r for r in steps] + [top]
        pieces += [(f, a, b) for a, b in zip(left[:-1], left[1:]) if b > a]
        pieces += [(peak, -edge, 0.0), (peak, 0.0, edge)]
        pieces += [(f, a, b) for a, b in zip(right[:-1], right[1:]) if b > a]
    else:
        cuts = [0.0, x, top] if x < top else [0.0, top]
        pieces += [(lambda s: g(s) / den(s), a, b) for a, b in zip(cuts[:-1], cuts[1:])]
    total = 0.0
    # the tolerance sits at the round-off floor, so quad's round-off notice is expected
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for fn, a, b in pieces:
            v, _ = integrate.quad(fn, a, b, limit=400, epsabs=0.0, epsrel=1e-13)
            total += v
    return total / (math.pi * alpha)


def _ml_mpmath(alpha: float, beta: float, z: float) -> float:
    import mpmath as mp

    a, b, zz = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
    digits = 30 + int(abs(z) ** (1.0 / alpha) / 2.3)
    with mp.workdps(digits):
        tot = mp.mpf(0)
        k = 0
        while True:
            t = zz**k * mp.rgamma(a * k + b)
            tot += t
            if k > 10 and abs(t) < mp.mpf(10) ** (-25) * max(abs(tot), mp.mpf(10) ** (-300)):
                break
            k += 1
        return float(tot)


def _ml_scalar(alpha: float, beta: float, z: float) -> float:
    if alpha == 1.0 and beta == 1.0:
        return math.exp(z)
    if z > 0.0:
        # positive series has no cancellation; guard overflow first
        lead = z ** (1.0 / alpha)
        if lead > 700.0:
            return math.inf
        return _ml_series(alpha, beta, z)
    if z >= -1.0:
        return _ml_series(alpha, beta, z)
    if alpha < 1.0 and 0.0 < beta <= 1.0:
        return _ml_negative_integral(alpha, beta, -z)
    return _ml_mpmath(alpha, beta, z)


def mittag_leffler(alpha: float, beta: float, z):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    Accepts scalars or arrays.  Relative accuracy is about 1e-12 for
    ``0 < alpha <= 1``, ``0 < beta <= 1`` and ``z <= 5``.
    """
    if not alpha > 0:
        raise DomainError(f"Mittag-Leffler needs alpha > 0, got {alpha}")
    if np.iscomplexobj(z):
        raise DomainError("complex arguments are not supported")
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        return _ml_scalar(float(alpha), float(beta), float(arr))
    out = np.empty_like(arr)
    flat = out.ravel()
    for i, v in enumerate(arr.ravel()):
        flat[i] = _ml_scalar(float(alpha), float(beta), float(v))
    return out
