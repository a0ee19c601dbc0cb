"""Semi-analytical solution of the three-layer time-fractional problem.

Layers ``(l_{i-1}, l_i)``, ``i = 1, 2, 3``, obey
``dX_i/dt = D^(1-gamma_i)[D_i X_i'']`` with flux and value continuity at
``l_1`` and ``l_2``, and the quasi-periodic pair

    flux(l_0) = flux(l_3),    X_3(l_3) = X_1(l_0) + q0

closing the ring.  Each layer is expanded in its Neumann cosine basis, the
Laplace transform turns the memory operator into ``s^(1-gamma)``, the three
interfacial fluxes come from a 3x3 Cramer solve, and the time-domain values
are recovered with a Caratheodory-Fejer rational approximation of ``e^z``.

Modal sums are truncated at ``n_modes`` after subtracting their ``1/m^2``
asymptote, whose infinite cosine sum is known in closed form.  This leaves an
``O(M^-3)`` tail instead of ``O(M^-1)``.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DomainError, SolverError, SpecError

__all__ = [
    "LayeredSpec",
    "OracleSolution",
    "eigenbasis",
    "cf_poles_residues",
    "invert_laplace",
    "interface_solve",
    "laplace_profile",
    "evaluate",
    "solve",
    "mass_balance",
    "tail_check",
    "write_profile_csv",
]

PROFILE_SCHEMA = "frachom-layered/1"

Initial = float | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LayeredSpec:
    """Three-layer problem; layers 1 and 3 are the outer medium, layer 2 the inner one.

    ``initial`` holds one constant or callable ``X_i0(x)`` per layer.
    """

    breakpoints: tuple[float, float, float, float] = (0.0, 0.375, 0.625, 1.0)
    diffusivity: tuple[float, float, float] = (10.0, 1.0, 10.0)
    gamma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    q0: float = 1.0
    initial: tuple[Initial, Initial, Initial] = (1.0, 1.0, 1.0)
    n_modes: int = 200

    @classmethod
    def binary(
        cls,
        d_outer: float,
        d_inner: float,
        gamma_outer: float,
        gamma_inner: float,
        q0: float = 1.0,
        u0: float = 1.0,
        breakpoints: Sequence[float] = (0.0, 0.375, 0.625, 1.0),
        n_modes: int = 200,
    ) -> "LayeredSpec":
        """Slab version of a binary cell: outer medium in layers 1 and 3."""
        return cls(
            tuple(float(b) for b in breakpoints),
            (d_outer, d_inner, d_outer),
            (gamma_outer, gamma_inner, gamma_outer),
            q0,
            (u0, u0, u0),
            n_modes,
        )

    def validate(self) -> None:
        if len(self.breakpoints) != 4 or len(self.diffusivity) != 3 or len(self.gamma) != 3 or len(self.initial) != 3:
            raise SpecError("need four breakpoints and three values per layer")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise SpecError(f"breakpoints must increase strictly, got {self.breakpoints}")
        if min(self.diffusivity) <= 0:
            raise SpecError("layer diffusivities must be positive")
        for g in self.gamma:
            if not 0.0 < g <= 1.0:
                raise SpecError(f"fractional index {g} outside (0, 1]")
        if self.n_modes < 1:
            raise SpecError("n_modes must be at least 1")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.breakpoints, dtype=float))

    @property
    def length(self) -> float:
        return float(self.breakpoints[3] - self.breakpoints[0])


def eigenbasis(spec: LayeredSpec, n_modes: int | None = None) -> list[tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]]:
    """Per layer: eigenvalues ``lambda_m = m pi / d`` and ``phi(x) -> (len(x), M+1)``."""
    n_modes = spec.n_modes if n_modes is None else n_modes
    if n_modes < 1:
        raise SpecError("n_modes must be at least 1")
    out = []
    m = np.arange(n_modes + 1)
    for i, d in enumerate(spec.widths):
        lam = m * math.pi / d
        left = spec.breakpoints[i]
        norm = np.full(n_modes + 1, math.sqrt(2.0 / d))
        norm[0] = 1.0 / math.sqrt(d)

        def phi(x, _lam=lam, _left=left, _norm=norm):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            return _norm * np.cos(np.outer(x - _left, _lam))

        out.append((lam, phi))
    return out


# ---------------------------------------------------------------------------
# Caratheodory-Fejer inversion
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def cf_poles_residues(n: int = 14, n_cheb: int = 75, nf: int = 1024, scale: float = 9.0) -> tuple[np.ndarray, np.ndarray]:
    """Poles and residues of the best type ``(n, n)`` approximation to ``e^z`` on ``(-inf, 0]``.

    Chebyshev coefficients of ``exp`` on the transplanted negative axis feed a
    Hankel SVD; the ``n+1``-st singular vector gives the Blaschke product
    whose exterior zeros are the poles.  Only poles with ``Im z >= 0`` are
    returned, one from each conjugate pair.
    """
    if n < 2 or n % 2:
        raise DomainError(f"rational degree must be even and >= 2, got {n}")
    w = np.exp(2j * np.pi * np.arange(nf) / nf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = scale * (w - 1) ** 2 / (w + 1) ** 2
        F = np.exp(t)
    F[~np.isfinite(F)] = 0.0
    c = np.real(np.fft.fft(F)) / nf
    f = np.polyval(c[n_cheb::-1], w)
    U, S, Vh = np.linalg.svd(scipy.linalg.hankel(c[1 : n_cheb + 1]))
    s = S[n]
    u = U[::-1, n]
    v = Vh[n, :]
    pad = np.zeros(nf - n_cheb)
    b = np.fft.fft(np.concatenate([u, pad])) / np.fft.fft(np.concatenate([v, pad]))
    rt = f - s * w**n_cheb * b
    zr = np.roots(v)
    qk = zr[np.abs(zr) > 1]
    if len(qk) != n:
        raise SolverError(f"CF construction found {len(qk)} poles instead of {n}")
    qc = np.poly(qk)
    pt = rt * np.polyval(qc, w)
    ptc = np.real(np.fft.fft(pt) / nf)[n::-1]
    ck = np.empty(n, dtype=complex)
    for k in range(n):
        q = qk[k]
        ck[k] = np.polyval(ptc, q) / np.polyval(np.poly(np.delete(qk, k)), q)
    zk = scale * (qk - 1) ** 2 / (qk + 1) ** 2
    # residues map to the z-plane through dz/dq
    ck = 4 * scale * ck * (qk - 1) / (qk + 1) ** 3
    keep = zk.imag >= 0
    order = np.argsort(zk[keep].real)
    return zk[keep][order], ck[keep][order]


def invert_laplace(values: Callable[[complex], complex], t: float, n: int = 14) -> float:
    """``f(t) = -2 Re sum_k c_k F(z_k / t) / t`` over the upper-half-plane CF poles."""
    if not t > 0:
        raise DomainError(f"inversion time must be positive, got {t}")
    zk, ck = cf_poles_residues(n)
    total = sum(c * values(z / t) for z, c in zip(zk, ck))
    return float(-2.0 * np.real(total) / t)


# ---------------------------------------------------------------------------
# Laplace-domain layer solution
# ---------------------------------------------------------------------------


def _clausen2(theta: np.ndarray) -> np.ndarray:
    """``sum_{m>=1} cos(m theta) / m^2`` for ``theta`` in ``[0, 2 pi]``."""
    return math.pi**2 / 6 - math.pi * theta / 2 + theta**2 / 4


@functools.lru_cache(maxsize=16)
def _initial_coefficients(spec: LayeredSpec) -> tuple[np.ndarray, ...]:
    """``<X_i0, phi_{i,m}>`` per layer; constants only touch ``m = 0``."""
    out = []
    nodes, wts = np.polynomial.legendre.leggauss(max(64, 4 * spec.n_modes))
    for i, ((lam, phi), x0) in enumerate(zip(eigenbasis(spec), spec.initial)):
        d = spec.widths[i]
        coef = np.zeros(spec.n_modes + 1)
        if callable(x0):
            a = spec.breakpoints[i]
            x = a + 0.5 * d * (nodes + 1)
            vals = np.asarray(x0(x), dtype=float)
            coef = 0.5 * d * (wts * vals) @ phi(x)
        else:
            coef[0] = float(x0) * math.sqrt(d)
        out.append(coef)
    return tuple(out)


class _LayerKernel:
    """Laplace-domain sums for one layer at one ``s``.

    ``kernel(theta)`` is ``sum_m phi_m(x) phi_m(l_left) / eta_m`` with
    ``theta = pi (x - l_left) / d``; the right-endpoint kernel is the same
    function at ``pi - theta``.
    """

    def __init__(self, spec: LayeredSpec, i: int, s: complex):
        self.d = float(spec.widths[i])
        self.left = float(spec.breakpoints[i])
        self.s = s
        m = np.arange(1, spec.n_modes + 1)
        self.m = m
        self.b = spec.diffusivity[i] * s ** (1.0 - spec.gamma[i]) * (math.pi / self.d) ** 2
        self.eta = np.concatenate([[s], s + self.b * m**2.0])
        if np.any(self.eta == 0):
            raise SolverError(f"eta vanishes at s={s}")

    def kernel(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(theta)
        cos = np.cos(np.outer(theta, self.m))
        m2 = self.m**2.0
        # cos(m theta)/(s + b m^2) minus its 1/m^2 asymptote, then add the asymptote back in closed form
        resid = cos @ (1.0 / (self.s + self.b * m2) - 1.0 / (self.b * m2))
        return 1.0 / (self.d * self.s) + (2.0 / self.d) * (resid + _clausen2(theta) / self.b)

    def endpoint_sums(self) -> tuple[complex, complex]:
        k = self.kernel(np.array([0.0, math.pi]))
        return complex(k[0]), complex(k[1])


def interface_solve(spec: LayeredSpec, s: complex) -> tuple[complex, complex, complex]:
    """Laplace-domain fluxes ``(v12, v13, v23)`` from the three matching conditions.

    ``v12`` crosses ``l_1``, ``v23`` crosses ``l_2`` and ``v13`` the periodic
    seam ``l_3 ~ l_0``, all positive in the direction of increasing ``x``.
    """
    kers = [_LayerKernel(spec, i, s) for i in range(3)]
    P = []
    Q = []
    for k in kers:
        p, q = k.endpoint_sums()
        P.append(p)
        Q.append(q)
    ia, ib = _initial_endpoint_values(spec, kers)
    A = np.array(
        [
            [P[0] + P[1], -Q[0], -Q[1]],
            [-Q[0], P[0] + P[2], -Q[2]],
            [-Q[1], -Q[2], P[1] + P[2]],
        ],
        dtype=complex,
    )
    rhs = np.array([ia[1] - ib[0], ia[0] - ib[2] + spec.q0 / s, ia[2] - ib[1]], dtype=complex)
    det = np.linalg.det(A)
    scale = np.prod(np.abs(np.diag(A)))
    if abs(det) <= 1e-14 * scale:
        raise SolverError(f"interface determinant vanishes at s={s} for {spec}")
    out = []
    for j in range(3):
        Aj = A.copy()
        Aj[:, j] = rhs
        out.append(complex(np.linalg.det(Aj) / det))
    return out[0], out[1], out[2]


def _initial_endpoint_values(spec: LayeredSpec, kers: Sequence[_LayerKernel]) -> tuple[list[complex], list[complex]]:
    """Initial-data part of ``X_i`` at the left and right end of each layer."""
    coefs = _initial_coefficients(spec)
    ia, ib = [], []
    for i, k in enumerate(kers):
        c = coefs[i] / k.eta
        norm = np.full(len(c), math.sqrt(2.0 / k.d))
        norm[0] = 1.0 / math.sqrt(k.d)
        sign = (-1.0) ** np.arange(len(c))
        ia.append(complex(np.sum(c * norm)))
        ib.append(complex(np.sum(c * norm * sign)))
    return ia, ib


def _locate(spec: LayeredSpec, x: np.ndarray) -> np.ndarray:
    l0, l3 = spec.breakpoints[0], spec.breakpoints[3]
    if np.any(x < l0 - 1e-12) or np.any(x > l3 + 1e-12):
        raise DomainError(f"position outside [{l0}, {l3}]")
    layer = np.searchsorted(np.asarray(spec.breakpoints[1:3]), x, side="right")
    return layer


def laplace_profile(spec: LayeredSpec, x: np.ndarray, s: complex, layer: np.ndarray | None = None) -> np.ndarray:
    """``X_bar(x, s)``; ``layer`` forces the layer used at interface points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    layer = _locate(spec, x) if layer is None else np.asarray(layer)
    v12, v13, v23 = interface_solve(spec, s)
    # (flux entering at the left end, flux leaving at the right end) per layer
    ends = ((v13, v12), (v12, v23), (v23, v13))
    coefs = _initial_coefficients(spec)
    basis = eigenbasis(spec)
    out = np.empty(len(x), dtype=complex)
    for i in range(3):
        sel = layer == i
        if not sel.any():
            continue
        k = _LayerKernel(spec, i, s)
        theta = np.clip(math.pi * (x[sel] - k.left) / k.d, 0.0, math.pi)
        v_in, v_out = ends[i]
        init = basis[i][1](x[sel]) @ (coefs[i] / k.eta)
        out[sel] = init + v_out * k.kernel(math.pi - theta) - v_in * k.kernel(theta)
    return out


@dataclass(frozen=True)
class OracleSolution:
    """Oracle values on a grid of positions at one time, plus diagnostics."""

    spec: LayeredSpec
    t: float
    x: np.ndarray
    layer: np.ndarray
    values: np.ndarray
    fluxes: tuple[float, float, float]
    cf_poles: np.ndarray
    cf_residues: np.ndarray
    imag_ratio: float
    meta: dict = field(default_factory=dict)

    def modes(self, i: int) -> np.ndarray:
        """Time-domain Fourier coefficients ``X_tilde_i(lambda_m, t)`` of layer ``i`` (0-based)."""
        return _invert_vector(lambda s: _layer_modes(self.spec, i, s), self.t)


def _layer_modes(spec: LayeredSpec, i: int, s: complex) -> np.ndarray:
    v12, v13, v23 = interface_solve(spec, s)
    v_in, v_out = ((v13, v12), (v12, v23), (v23, v13))[i]
    k = _LayerKernel(spec, i, s)
    d = k.d
    norm = np.full(spec.n_modes + 1, math.sqrt(2.0 / d))
    norm[0] = 1.0 / math.sqrt(d)
    sign = (-1.0) ** np.arange(spec.n_modes + 1)
    return (_initial_coefficients(spec)[i] + norm * (v_out * sign - v_in)) / k.eta


def _invert_vector(fn: Callable[[complex], np.ndarray], t: float, n: int = 14) -> np.ndarray:
    if not t > 0:
        raise DomainError(f"inversion time must be positive, got {t}")
    zk, ck = cf_poles_residues(n)
    acc = sum(c * fn(z / t) for z, c in zip(zk, ck))
    return -2.0 * np.real(acc) / t


def solve(spec: LayeredSpec, x: Sequence[float] | np.ndarray, t: float, layer: np.ndarray | None = None) -> OracleSolution:
    """Evaluate the oracle at positions ``x`` and time ``t > 0``."""
    spec.validate()
    if not t > 0:
        raise DomainError(f"evaluation time must be positive, got {t}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    layer = _locate(spec, x) if layer is None else np.asarray(layer)
    zk, ck = cf_poles_residues()
    acc = np.zeros(len(x), dtype=complex)
    flux = np.zeros(3, dtype=complex)
    acc_conj = np.zeros(len(x), dtype=complex)
    for z, c in zip(zk, ck):
        s = z / t
        acc += c * laplace_profile(spec, x, s, layer)
        flux += c * np.array(interface_solve(spec, s))
        # the conjugate pole contributes the conjugate term when F is real on the real axis
        acc_conj += np.conj(c) * laplace_profile(spec, x, np.conj(s), layer)
    values = -2.0 * np.real(acc) / t
    full = -(acc + acc_conj) / t
    imag = float(np.max(np.abs(full.imag)) / max(np.max(np.abs(full.real)), 1e-300))
    fl = tuple(float(v) for v in -2.0 * np.real(flux) / t)
    return OracleSolution(spec, float(t), x, layer, values, fl, zk, ck, imag, {"n_modes": spec.n_modes, "cf_degree": 2 * len(zk)})


def evaluate(spec: LayeredSpec, x, t: float):
    """``X(x, t)``; scalar in, scalar out."""
    sol = solve(spec, x, t)
    return float(sol.values[0]) if np.ndim(x) == 0 else sol.values


def mass_balance(spec: LayeredSpec, t: float) -> float:
    """Length-weighted mean ``sum_i (d_i / L) <X_i>`` from the ``m = 0`` coefficients."""
    spec.validate()
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")
    d = spec.widths
    if t == 0:
        c0 = np.array([c[0] for c in _initial_coefficients(spec)])
    else:
        c0 = np.array([_invert_vector(lambda s, i=i: _layer_modes(spec, i, s)[:1], t)[0] for i in range(3)])
    # <X_i> = X_tilde_i(0) / sqrt(d_i)
    return float(np.sum(np.sqrt(d) * c0) / spec.length)


def tail_check(spec: LayeredSpec, x, t: float) -> float:
    """Max change of the profile when the truncation level doubles."""
    a = solve(spec, x, t).values
    b = solve(_with_modes(spec, 2 * spec.n_modes), x, t).values
    return float(np.max(np.abs(a - b)))


def _with_modes(spec: LayeredSpec, n: int) -> LayeredSpec:
    return LayeredSpec(spec.breakpoints, spec.diffusivity, spec.gamma, spec.q0, spec.initial, n)


def write_profile_csv(solutions: Sequence[OracleSolution], path: str | Path, config: dict | None = None) -> None:
    """Rows ``(x, t, value, layer)`` with a schema line and config echo."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {PROFILE_SCHEMA}\n")
        fh.write(f"# config: {json.dumps(config or {}, sort_keys=True, default=str)}\n")
        wr = csv.writer(fh)
        wr.writerow(["x", "t", "value", "layer"])
        for sol in solutions:
            for xi, v, li in zip(sol.x, sol.values, sol.layer):
                wr.writerow([f"{xi:.12g}", f"{sol.t:.12g}", f"{v:.17g}", int(li) + 1])
