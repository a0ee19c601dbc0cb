"""Corrected Crank-Nicolson / WSGL time stepping with full-history convolution.

The semi-discrete system is ``M w' = sum_j D^(1-gamma_j)[K_j w + b_j] + F(t)``.
Writing ``delta^k = w^k - w^0``, each step evaluates every term at
``t_{n-1/2}``::

    M (delta^n - delta^{n-1})/tau + (1/tau) sum_k P_k M delta^k
        = sum_j tau^(gamma_j-1) [ sum_{k=1}^n D^j_{n-k} K_j delta^k + sum_k E^j_k K_j delta^k ]
          + sum_j t_{n-1/2}^(gamma_j-1) / Gamma(gamma_j) (K_j w^0 + b_j) + F(t_{n-1/2})

where the ``P``/``E`` sums run over the ``m`` starting levels.  Levels
``1..m`` are solved together as one block; later levels reuse a single
sparse factorisation.

The initial-slip factor multiplying ``K_j w^0 + b_j`` is either the closed
form above (``slip="exact"``) or the convolution weights applied to a
constant history (``slip="discrete"``).  Systems that carry ``memory_mass``
(classical fluxes, per-phase Caputo storage) move the fractional weights onto
the mass side instead; they accept no starting corrections.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .assembly import SparseSystem
from .errors import BudgetError, ConfigError, SolverError, SpecError
from .fracops import WeightTable, default_correction_count, default_sigma

__all__ = [
    "TimeGrid",
    "StopCriterion",
    "EvolutionState",
    "Scheme",
    "build_weights",
    "startup",
    "step",
    "run_until",
    "write_trace",
    "solution_change",
]

TRACE_SCHEMA = "frachom-trace/1"
SLIP_MODES = ("exact", "discrete")


@dataclass(frozen=True)
class TimeGrid:
    tau: float
    n_steps: int

    def __post_init__(self):
        if not self.tau > 0:
            raise SpecError(f"time step must be positive, got {self.tau}")
        if self.n_steps < 1:
            raise SpecError("need at least one time step")

    @property
    def t_final(self) -> float:
        return self.tau * self.n_steps

    @classmethod
    def from_final(cls, tau: float, t_final: float) -> "TimeGrid":
        return cls(tau, int(round(t_final / tau)))


@dataclass(frozen=True)
class StopCriterion:
    """Stop at the end of the grid, or earlier once steady.

    ``steady_tol=None`` disables steady detection.  With ``require_steady`` a
    run that exhausts the grid without becoming steady raises
    :class:`~frachom.errors.BudgetError`.
    """

    steady_tol: float | None = None
    window: int = 10
    require_steady: bool = False
    monitor: Callable[[SparseSystem, np.ndarray], np.ndarray] | None = None


@dataclass
class EvolutionState:
    """Full solution history stored as increments ``delta^k = w^k - w^0``."""

    w0: np.ndarray
    increments: np.ndarray
    n: int = 0
    tau: float = 1.0
    trace: list = field(default_factory=list)
    reason: str = ""
    monitor_values: list = field(default_factory=list)

    @property
    def current_time(self) -> float:
        return self.n * self.tau

    @property
    def history_length(self) -> int:
        return self.n + 1

    def solution(self, k: int | None = None) -> np.ndarray:
        k = self.n if k is None else k
        if k > self.n:
            raise IndexError(f"level {k} not computed yet (n={self.n})")
        return self.w0 + self.increments[k]

    def midpoint(self) -> np.ndarray:
        """Average of the last two levels; damps the stiff-mode sign flip of CN."""
        if self.n == 0:
            return self.w0.copy()
        return self.w0 + 0.5 * (self.increments[self.n] + self.increments[self.n - 1])


def build_weights(
    sys: SparseSystem,
    n_steps: int,
    m: int | None = None,
    m_cap: int | None = 3,
    sigma: Sequence[float] | None = None,
) -> dict[float, WeightTable]:
    """Weight tables for each distinct fractional index in ``sys``.

    Correction exponents default to ``r * gamma_min`` so every region shares
    the same starting levels.
    """
    gammas = sorted({t.gamma for t in sys.terms})
    gref = gammas[0]
    if sigma is None:
        mm = default_correction_count(gref, m_cap) if m is None else m
        sig = default_sigma(gref, mm)
    else:
        sig = np.asarray(sigma, dtype=float)
    return {g: WeightTable.build(1.0 - g, n_steps, sig) for g in gammas}


def _factorize(a: sp.spmatrix, what: str):
    try:
        return spla.splu(a.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"{what}: factorisation failed ({exc})") from exc


class Scheme:
    """Precomputed operators for one system, grid and weight set."""

    def __init__(
        self,
        sys: SparseSystem,
        grid: TimeGrid,
        weights: dict[float, WeightTable],
        w0: np.ndarray,
        slip: str = "exact",
    ):
        if slip not in SLIP_MODES:
            raise ConfigError(f"slip must be one of {SLIP_MODES}, got {slip!r}")
        self.sys = sys
        self.slip_mode = slip
        self.grid = grid
        self.weights = weights
        tau = grid.tau
        missing = [t.gamma for t in sys.terms if t.gamma not in weights]
        if missing:
            raise ConfigError(f"no weight table for gamma={missing}")
        ms = {weights[t.gamma].m for t in sys.terms}
        if len(ms) != 1:
            raise ConfigError("all weight tables must share the same correction count")
        self.m = ms.pop()
        for t in sys.terms:
            if weights[t.gamma].n_max < grid.n_steps:
                raise ConfigError(f"weight table for gamma={t.gamma} covers {weights[t.gamma].n_max} < {grid.n_steps} steps")
        self.scale = [tau ** (t.gamma - 1.0) for t in sys.terms]
        self.tables = [weights[t.gamma] for t in sys.terms]
        self.P = self.tables[0].P
        # Caputo form: classical share of the mass plus one memory block per index
        self.rate_mass = np.asarray(sys.mass, dtype=float)
        self.memory: list[tuple[np.ndarray, float, WeightTable]] = []
        if sys.memory_mass is not None:
            if self.m:
                raise ConfigError("correction terms are not available for Caputo-form systems; use m=0")
            self.rate_mass = np.zeros(sys.n_unknowns)
            for mm, g in sys.memory_mass:
                if g == 1.0:
                    self.rate_mass = self.rate_mass + mm
                elif np.any(mm):
                    self.memory.append((np.asarray(mm, dtype=float), tau ** (-g), WeightTable.build(g, grid.n_steps)))
        self.Ms = sp.diags(self.rate_mass).tocsr()
        a = self.Ms / tau
        for mm, c, tab in self.memory:
            a = a + sp.diags(c * tab.d_avg[0] * mm)
        for t, c, tab in zip(sys.terms, self.scale, self.tables):
            a = a - (c * tab.d_avg[0]) * t.K
        self.A = a.tocsc()
        self.lu = _factorize(self.A, "step matrix")
        self.w0 = np.asarray(w0, dtype=float)
        # constant part of the initial-slip term per operator block
        self.slip = []
        for t in sys.terms:
            v = t.K @ self.w0
            if t.offset_load is not None:
                v = v + t.offset_load
            self.slip.append(v)
        self._support = []
        for tab in self.tables:
            nz = np.flatnonzero(tab.d_avg)
            self._support.append(int(nz[-1]) if len(nz) and nz[-1] < len(tab.d_avg) - 1 else len(tab.d_avg))
        # discrete mode: the weights applied to a constant history, sum_{j<n} D_j
        self._slip_sums = [np.concatenate([[0.0], np.cumsum(tab.d_avg)]) for tab in self.tables]

    def forcing(self, n: int) -> np.ndarray:
        th = (n - 0.5) * self.grid.tau
        out = np.zeros(self.sys.n_unknowns)
        if self.slip_mode == "exact":
            for t, v in zip(self.sys.terms, self.slip):
                out += th ** (t.gamma - 1.0) / math.gamma(t.gamma) * v
        else:
            for c, cs, v in zip(self.scale, self._slip_sums, self.slip):
                out += c * cs[n] * v
        if self.sys.boundary_load is not None:
            out += self.sys.boundary_load(th)
        return out

    def new_state(self) -> EvolutionState:
        inc = np.zeros((self.grid.n_steps + 1, self.sys.n_unknowns))
        st = EvolutionState(self.w0.copy(), inc, 0, self.grid.tau)
        st.trace.append((0.0, self.sys.mean(self.w0), float("nan")))
        return st

    def history_terms(self, state: EvolutionState, n: int) -> list[np.ndarray]:
        """``sum_{k=1}^{n-1} D_{n-k} delta^k`` for each operator block."""
        out = []
        for tab, lag in zip(self.tables, self._support):
            lo = n - lag
            if lo > 1:
                # integer order: only the last few weights are non-zero
                ks = np.arange(lo, n)
                out.append(tab.d_avg[n - ks] @ state.increments[lo:n])
            else:
                out.append(_kernels.history_sum(tab.d_avg[1:], state.increments, n - 1))
        return out


def startup(scheme: Scheme, state: EvolutionState) -> EvolutionState:
    """Solve levels ``1..m`` as a single coupled block."""
    m = scheme.m
    if m == 0:
        return step(scheme, state)
    if state.n != 0:
        raise SolverError("startup must begin from level 0")
    m = min(m, scheme.grid.n_steps)
    sys = scheme.sys
    tau = scheme.grid.tau
    N = sys.n_unknowns
    blocks = [[None] * m for _ in range(m)]
    rhs = np.zeros(m * N)
    for n in range(1, m + 1):
        for k in range(1, m + 1):
            b = scheme.P[n, k - 1] / tau * scheme.Ms
            if k == n:
                b = b + scheme.Ms / tau
            if k == n - 1:
                b = b - scheme.Ms / tau
            for t, c, tab in zip(sys.terms, scheme.scale, scheme.tables):
                coef = tab.E[n, k - 1]
                if k <= n:
                    coef += tab.d_avg[n - k]
                if coef != 0.0:
                    b = b - (c * coef) * t.K
            blocks[n - 1][k - 1] = b
        rhs[(n - 1) * N : n * N] = scheme.forcing(n)
    big = sp.bmat(blocks, format="csc")
    try:
        sol = spla.spsolve(big, rhs)
    except RuntimeError as exc:
        raise ConfigError(f"startup block solve failed for m={m}, tau={tau}, gammas={[t.gamma for t in sys.terms]}") from exc
    if not np.all(np.isfinite(sol)):
        raise ConfigError(f"startup block singular for m={m}, tau={tau}, gammas={[t.gamma for t in sys.terms]}")
    res = np.linalg.norm(big @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-8:
        raise ConfigError(f"startup block solve inaccurate (residual {res:.2e}) for m={m}, tau={tau}")
    for n in range(1, m + 1):
        state.increments[n] = sol[(n - 1) * N : n * N]
        state.n = n
        _record(scheme, state)
    return state


def step(scheme: Scheme, state: EvolutionState) -> EvolutionState:
    """Advance one level once the starting block (if any) is done."""
    n = state.n + 1
    if n > scheme.grid.n_steps:
        raise SolverError(f"history exhausted: grid has {scheme.grid.n_steps} steps")
    if n <= scheme.m:
        raise SolverError(f"levels 1..{scheme.m} must come from startup()")
    sys = scheme.sys
    tau = scheme.grid.tau
    inc = state.increments
    m = scheme.m
    M = sys.mass
    rhs = scheme.rate_mass * inc[n - 1] / tau
    for mm, c, tab in scheme.memory:
        rhs -= c * mm * _kernels.history_sum(tab.d_avg[1:], inc, n - 1)
    if m:
        rhs -= M * (scheme.P[n, :m] @ inc[1 : m + 1]) / tau
    hist = scheme.history_terms(state, n)
    for t, c, tab, h in zip(sys.terms, scheme.scale, scheme.tables, hist):
        acc = h
        if m:
            acc = acc + tab.E[n, :m] @ inc[1 : m + 1]
        rhs += c * (t.K @ acc)
    rhs += scheme.forcing(n)
    x = scheme.lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        res = float(np.linalg.norm(scheme.A @ np.nan_to_num(x) - rhs))
        raise SolverError(f"linear solve failed at step {n}", res)
    inc[n] = x
    state.n = n
    _record(scheme, state)
    return state


def _record(scheme: Scheme, state: EvolutionState) -> None:
    w = state.solution()
    ch = solution_change(scheme.sys, state)
    state.trace.append((state.current_time, scheme.sys.mean(w), ch))


def solution_change(sys: SparseSystem, state: EvolutionState) -> float:
    """``||w^n - w^{n-1}||_inf / (tau * max(||w^n||_inf, 1))``."""
    if state.n == 0:
        return float("nan")
    d = state.increments[state.n] - state.increments[state.n - 1]
    return float(np.abs(d).max() / (state.tau * max(np.abs(state.solution()).max(), 1.0)))


def run_until(
    sys: SparseSystem,
    weights: dict[float, WeightTable],
    w0: np.ndarray,
    grid: TimeGrid,
    stop: StopCriterion | None = None,
    callback: Callable[[EvolutionState], None] | None = None,
    slip: str = "exact",
) -> EvolutionState:
    """Run the scheme to the end of ``grid`` or until steady.

    With a monitor, the steady metric is the max relative change of the
    monitored values between consecutive steps, evaluated on the midpoint
    average of the last two levels.  Without one it is
    :func:`solution_change`.

    ``slip="discrete"`` replaces the closed-form initial-slip factor by the
    convolution weights applied to a constant history.  It is first order but
    stays accurate for stiff modes at small ``gamma``; pair it with ``m=0``.
    """
    stop = stop or StopCriterion()
    scheme = Scheme(sys, grid, weights, w0, slip)
    state = scheme.new_state()
    if scheme.m:
        startup(scheme, state)
    prev = None
    calm = 0
    last_metric = float("nan")

    def check() -> bool:
        nonlocal prev, calm, last_metric
        if stop.monitor is not None:
            cur = np.atleast_1d(np.asarray(stop.monitor(sys, state.midpoint()), dtype=float))
            state.monitor_values.append((state.current_time, cur))
            if prev is None:
                prev = cur
                return False
            metric = float(np.abs(cur - prev).max() / max(np.abs(cur).max(), 1e-300))
            prev = cur
        else:
            metric = solution_change(sys, state)
        last_metric = metric
        if stop.steady_tol is None:
            return False
        calm = calm + 1 if metric < stop.steady_tol else 0
        return calm >= stop.window

    if state.n and callback:
        callback(state)
    if state.n and check():
        state.reason = "steady"
        return state
    while state.n < grid.n_steps:
        step(scheme, state)
        if callback:
            callback(state)
        if check():
            state.reason = "steady"
            return state
    state.reason = "t_final"
    if stop.require_steady and stop.steady_tol is not None:
        raise BudgetError(f"not steady after {grid.n_steps} steps (t={grid.t_final:g})", last_metric)
    return state


def write_trace(state: EvolutionState, path: str | Path, config: dict | None = None, schedule: Sequence[int] | None = None) -> None:
    """CSV trace: time, mean, change metric.  Header carries schema and config echo."""
    import json

    rows = state.trace if schedule is None else [state.trace[i] for i in schedule if i < len(state.trace)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {TRACE_SCHEMA}\n")
        fh.write(f"# config: {json.dumps(config or {}, sort_keys=True, default=str)}\n")
        wr = csv.writer(fh)
        wr.writerow(["time", "mean", "change"])
        for t, mean, ch in rows:
            wr.writerow([f"{t:.12g}", f"{mean:.17g}", f"{ch:.6e}"])
