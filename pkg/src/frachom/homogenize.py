"""Unit-cell problems and effective diffusivity tensors for binary media.

Each cell problem runs the binary control-volume scheme with a unit jump of
the unknown across one pair of opposite cell sides.  The effective tensor at
any time is the area average of ``Q grad(phi_j)`` over triangles, with
gradients constant per triangle from the linear basis.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .assembly import MediumSpec, SparseSystem, apply_quasi_periodic, couple_binary
from .errors import ConfigError, DomainError, IncompleteInputError, SolverError, SpecError
from .meshkit import CvMesh, Mesh, MorphologySpec, RegionTags, build_control_volumes, pair_periodic, tag_regions
from .stepper import EvolutionState, StopCriterion, TimeGrid, build_weights, run_until

__all__ = [
    "CellProblemSpec",
    "EffectiveTensorSeries",
    "WoodScenarioConfig",
    "bounds",
    "cell_system",
    "cell_initial",
    "tensor_column",
    "effective_tensor",
    "limit_tensor",
    "output_schedule",
    "run_cell_problem",
    "wood_cell_run",
]

TENSOR_SCHEMA = "frachom-tensor/1"
DIRECTIONS = ("x", "y")


def bounds(eps1: float, d1: float, d2: float) -> tuple[float, float]:
    """Harmonic (series) and arithmetic (parallel) averages of two phases."""
    if not 0.0 <= eps1 <= 1.0:
        raise DomainError(f"volume fraction {eps1} outside [0, 1]")
    if d1 <= 0 or d2 <= 0:
        raise DomainError(f"diffusivities must be positive, got {d1}, {d2}")
    eps2 = 1.0 - eps1
    return 1.0 / (eps1 / d1 + eps2 / d2), eps1 * d1 + eps2 * d2


def cell_system(cv: CvMesh, tags: RegionTags, medium: MediumSpec, direction: str) -> SparseSystem:
    """Binary system with a unit jump across the cell in ``direction``."""
    if direction not in DIRECTIONS:
        raise SpecError(f"direction must be 'x' or 'y', got {direction!r}")
    mesh = cv.base
    ox, oy = (1.0, 0.0) if direction == "x" else (0.0, 1.0)
    maps = [pair_periodic(mesh, "x", ox), pair_periodic(mesh, "y", oy)]
    return apply_quasi_periodic(couple_binary(cv, tags, medium), maps)


def cell_initial(sys: SparseSystem, direction: str, u0: float = 1.0) -> np.ndarray:
    """``phi_j(y, 0) = y_j + u0``, projected onto the constrained space."""
    xy = sys.cv.base.nodes
    return sys.project(xy[:, DIRECTIONS.index(direction)] + u0)


def _tri_coefficients(cv: CvMesh, tags: RegionTags, medium: MediumSpec) -> tuple[np.ndarray, np.ndarray]:
    mesh = cv.base
    bary = mesh.nodes[mesh.triangles].mean(axis=1)
    return medium.coefficients(bary, tags.tri_region)


def tensor_column(cv: CvMesh, tags: RegionTags, medium: MediumSpec, u: np.ndarray) -> np.ndarray:
    """Area average of ``Q grad u`` for one nodal cell solution."""
    mesh = cv.base
    g = _kernels.triangle_gradients(mesh.nodes, mesh.triangles, np.ascontiguousarray(u, dtype=float))
    qx, qy = _tri_coefficients(cv, tags, medium)
    a = cv.tri_area
    return np.array([a @ (qx * g[:, 0]), a @ (qy * g[:, 1])]) / a.sum()


def effective_tensor(cv: CvMesh, tags: RegionTags, medium: MediumSpec, fields: dict[str, np.ndarray]) -> np.ndarray:
    """2x2 tensor whose column j comes from the ``phi_j`` nodal field."""
    missing = [d for d in DIRECTIONS if d not in fields]
    if missing:
        raise IncompleteInputError(f"cell solution missing for direction(s) {missing}")
    cols = [tensor_column(cv, tags, medium, fields[d]) for d in DIRECTIONS]
    return np.column_stack(cols)


def limit_tensor_column(sys: SparseSystem, direction: str) -> np.ndarray:
    """Nodal long-time limit of a cell problem, solved directly.

    A flux carried by ``D^(1-gamma)`` of a settled field decays like
    ``t^(gamma-1)``, so at each row only the block with the largest index
    survives.  Rows are assembled from that block alone and one unknown is
    pinned; the result has the same gradients as the limit of the evolution.
    """
    terms = sorted(sys.terms, key=lambda t: t.gamma, reverse=True)
    n = sys.n_unknowns
    owner = np.full(n, -1)
    for j, t in enumerate(terms):
        active = np.diff(t.K.indptr) > 0
        active &= np.asarray(abs(t.K).sum(axis=1)).ravel() > 0
        owner[(owner < 0) & active] = j
    if np.any(owner < 0):
        raise SolverError("limit problem has rows without any flux block")
    rows = []
    rhs = np.zeros(n)
    for j, t in enumerate(terms):
        mask = sp.diags((owner == j).astype(float))
        rows.append(mask @ t.K)
        if t.offset_load is not None:
            rhs -= (owner == j) * t.offset_load
    a = sum(rows[1:], rows[0]).tolil()
    pin = int(np.flatnonzero(owner == 0)[0])
    a[pin, :] = 0.0
    a[pin, pin] = 1.0
    rhs[pin] = 0.0
    w = spla.spsolve(a.tocsc(), rhs)
    if not np.all(np.isfinite(w)):
        raise SolverError("limit problem is singular")
    return sys.expand(w)


def limit_tensor(cv: CvMesh, tags: RegionTags, medium: MediumSpec) -> np.ndarray:
    """Long-time tensor of the fractional cell problem without time stepping."""
    fields = {d: limit_tensor_column(cell_system(cv, tags, medium, d), d) for d in DIRECTIONS}
    return effective_tensor(cv, tags, medium, fields)


def output_schedule(grid: TimeGrid, per_decade: int = 10) -> np.ndarray:
    """Step indices spaced geometrically in time, always ending at the last step."""
    n = grid.n_steps
    if n <= 1:
        return np.array([n])
    k = np.unique(np.round(np.logspace(0, math.log10(n), max(2, int(per_decade * math.log10(n)) + 1))).astype(int))
    return np.unique(np.append(k[(k >= 1) & (k <= n)], n))


@dataclass(frozen=True)
class CellProblemSpec:
    """One unit-cell homogenisation run.

    ``slip`` and ``m`` default by regime: plain Crank-Nicolson when both phases
    are classical, the first-order discrete slip without corrections otherwise.
    """

    mesh: Mesh
    morphology: MorphologySpec
    medium: MediumSpec
    directions: tuple[str, ...] = DIRECTIONS
    u0: float = 1.0
    tau: float = 1e-2
    t_final: float = 10.0
    steady_tol: float | None = 1e-8
    window: int = 10
    slip: str | None = None
    m: int | None = None
    per_decade: int = 10
    require_steady: bool = False

    def validate(self) -> None:
        self.medium.validate()
        if self.medium.interface_mode != "rl":
            raise ConfigError("cell problems use the Riemann-Liouville interface form")
        bad = [d for d in self.directions if d not in DIRECTIONS]
        if bad or not self.directions:
            raise ConfigError(f"directions must be drawn from {DIRECTIONS}, got {self.directions}")
        if not self.tau > 0 or not self.t_final >= self.tau:
            raise ConfigError(f"need 0 < tau <= t_final, got tau={self.tau}, t_final={self.t_final}")
        x0, y0, x1, y1 = self.mesh.bbox
        if max(abs(x0), abs(y0), abs(x1 - 1.0), abs(y1 - 1.0)) > 1e-9:
            raise ConfigError(f"cell mesh must span the unit square, got bbox {self.mesh.bbox}")

    @property
    def classical(self) -> bool:
        return self.medium.gamma1 == 1.0 and self.medium.gamma2 == 1.0

    def run_controls(self) -> tuple[str, int | None]:
        slip = self.slip or ("exact" if self.classical else "discrete")
        m = self.m
        if m is None:
            m = None if slip == "exact" and not self.classical else 0
        return slip, m


@dataclass
class EffectiveTensorSeries:
    """Time history of the effective tensor with bounds and steady metadata."""

    times: np.ndarray
    tensors: np.ndarray  # (n, 2, 2)
    bounds: tuple[float, float]
    steady: bool
    reasons: dict[str, str] = field(default_factory=dict)
    eps1: float = float("nan")
    fields: dict[str, np.ndarray] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.tensors[-1]

    def symmetry_gap(self) -> float:
        t = self.final
        return float(abs(t[0, 1] - t[1, 0]) / max(abs(t[0, 1]), abs(t[1, 0]), 1e-300))

    def scaled(self, factor: float) -> "EffectiveTensorSeries":
        return replace(self, tensors=self.tensors / factor, bounds=(self.bounds[0] / factor, self.bounds[1] / factor))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# schema: {TENSOR_SCHEMA}\n")
            fh.write(f"# config: {json.dumps(self.config, sort_keys=True, default=str)}\n")
            wr = csv.writer(fh)
            wr.writerow(["time", "D_bx", "D_bxy", "D_byx", "D_by", "K1", "K2"])
            k1, k2 = self.bounds
            for t, d in zip(self.times, self.tensors):
                wr.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in (d[0, 0], d[0, 1], d[1, 0], d[1, 1], k1, k2)])

    def summary(self) -> dict:
        d = self.final
        return {
            "schema": TENSOR_SCHEMA,
            "time": float(self.times[-1]),
            "D_bx": float(d[0, 0]),
            "D_bxy": float(d[0, 1]),
            "D_byx": float(d[1, 0]),
            "D_by": float(d[1, 1]),
            "K1": self.bounds[0],
            "K2": self.bounds[1],
            "eps1": self.eps1,
            "steady": self.steady,
            "reasons": dict(self.reasons),
            "config": self.config,
        }


def _run_direction(sys: SparseSystem, spec: CellProblemSpec, direction: str, grid: TimeGrid, schedule: np.ndarray):
    cv, tags, medium = sys.cv, sys.tags, spec.medium
    j = DIRECTIONS.index(direction)
    slip, m = spec.run_controls()
    weights = build_weights(sys, grid.n_steps, m=m)

    def monitor(s: SparseSystem, w: np.ndarray) -> np.ndarray:
        return tensor_column(cv, tags, medium, s.expand(w))

    stop = StopCriterion(spec.steady_tol, spec.window, spec.require_steady, monitor)
    marks = set(int(k) for k in schedule)
    record: dict[int, np.ndarray] = {}

    def callback(state: EvolutionState) -> None:
        if state.n in marks:
            record[state.n] = monitor(sys, state.midpoint())

    state = run_until(sys, weights, cell_initial(sys, direction, spec.u0), grid, stop, callback, slip=slip)
    record[state.n] = monitor(sys, state.midpoint())
    return record, state, j


def _merge_records(records: dict[int, dict[int, np.ndarray]]) -> tuple[list[int], np.ndarray]:
    steps = sorted({k for r in records.values() for k in r})
    tensors = np.zeros((len(steps), 2, 2))
    for j, rec in records.items():
        keys = sorted(rec)
        for i, k in enumerate(steps):
            # hold the latest value at or before step k
            pos = np.searchsorted(keys, k, side="right") - 1
            tensors[i, :, j] = rec[keys[max(pos, 0)]]
    return steps, tensors


def run_cell_problem(spec: CellProblemSpec, cv: CvMesh | None = None) -> EffectiveTensorSeries:
    """Evolve the cell problems until the tensor is steady or ``t_final``.

    Columns that settle early are held at their last value.  Unrequested
    directions are left as zero columns.
    """
    spec.validate()
    cv = cv or build_control_volumes(spec.mesh)
    tags = tag_regions(spec.mesh, spec.morphology)
    grid = TimeGrid.from_final(spec.tau, spec.t_final)
    schedule = output_schedule(grid, spec.per_decade)
    records = {}
    reasons = {}
    fields = {}
    for d in spec.directions:
        sys = cell_system(cv, tags, spec.medium, d)
        rec, state, j = _run_direction(sys, spec, d, grid, schedule)
        records[j] = rec
        reasons[d] = state.reason
        fields[d] = sys.expand(state.midpoint())
    steps, tensors = _merge_records(records)
    q1, q2 = spec.medium.q1, spec.medium.q2
    if callable(q1) or callable(q2) or q1[0] != q1[1] or q2[0] != q2[1]:
        bnd = (float("nan"), float("nan"))
    else:
        bnd = bounds(tags.eps1, q1[0], q2[0])
    slip, m = spec.run_controls()
    config = {
        "morphology": spec.morphology.kind,
        "D_b1": q1 if callable(q1) else list(q1),
        "D_b2": q2 if callable(q2) else list(q2),
        "gamma1": spec.medium.gamma1,
        "gamma2": spec.medium.gamma2,
        "u0": spec.u0,
        "tau": spec.tau,
        "t_final": spec.t_final,
        "steady_tol": spec.steady_tol,
        "window": spec.window,
        "slip": slip,
        "m": m,
        "n_nodes": spec.mesh.n_nodes,
        "h": spec.mesh.h,
    }
    return EffectiveTensorSeries(
        np.array(steps, dtype=float) * spec.tau,
        tensors,
        bnd,
        all(r == "steady" for r in reasons.values()),
        reasons,
        tags.eps1,
        fields,
        config,
    )


# ---------------------------------------------------------------------------
# wood cell
# ---------------------------------------------------------------------------

WOOD_REQUIRED = ("rho_s", "D_b", "D_v", "rho_g", "omega_v", "domega_dX", "drho_v_dX")


@dataclass(frozen=True)
class WoodScenarioConfig:
    """Linearised single-potential wood cell.

    The moisture content ``X`` is the shared potential.  The solid wall stores
    ``rho_s`` per unit ``X`` and conducts ``rho_s * D_b``; the lumen stores
    ``drho_v_dX`` and conducts ``rho_g * D_v * domega_dX / (1 - omega_v)``.
    Temperature-dependent closures are evaluated by the user and supplied as
    constants at the operating point.
    """

    mesh: Mesh
    constants: dict
    lumen_tags: tuple[int, ...] = (1,)
    gamma_solid: float = 1.0
    gradients: tuple[float, float] = (1.0, 1.0)
    tau: float = 1e-2
    t_final: float = 10.0
    steady_tol: float | None = 1e-8
    window: int = 10
    u0: float = 0.0

    def missing(self) -> list[str]:
        return [k for k in WOOD_REQUIRED if k not in self.constants or self.constants[k] is None]

    def coefficients(self) -> dict[str, float]:
        miss = self.missing()
        if miss:
            raise ConfigError(f"wood scenario is missing constants: {', '.join(miss)}")
        c = {k: float(self.constants[k]) for k in WOOD_REQUIRED}
        if not 0.0 <= c["omega_v"] < 1.0:
            raise ConfigError(f"omega_v must lie in [0, 1), got {c['omega_v']}")
        for k in ("rho_s", "D_b", "D_v", "rho_g", "domega_dX", "drho_v_dX"):
            if c[k] <= 0:
                raise ConfigError(f"{k} must be positive, got {c[k]}")
        return {
            "k_solid": c["rho_s"] * c["D_b"],
            "k_lumen": c["rho_g"] * c["D_v"] * c["domega_dX"] / (1.0 - c["omega_v"]),
            "c_solid": c["rho_s"],
            "c_lumen": c["drho_v_dX"],
            "D_v": c["D_v"],
        }


def _capacity_mass(sys: SparseSystem, tags: RegionTags, c_inclusion: float, c_matrix: float) -> np.ndarray:
    """Lumped storage per unknown with a phase-dependent capacity."""
    mesh = sys.cv.base
    cap = np.where(tags.tri_region == 1, c_inclusion, c_matrix) * sys.cv.tri_area / 3.0
    node = np.bincount(mesh.triangles.ravel(), weights=np.repeat(cap, 3), minlength=mesh.n_nodes)
    return np.bincount(sys.layout, weights=node, minlength=sys.n_unknowns)


def wood_cell_run(spec: WoodScenarioConfig, cv: CvMesh | None = None) -> EffectiveTensorSeries:
    """Homogenise a tagged wood cell and scale the tensor by ``D_v``.

    ``gradients`` weight the two cell problems: the macroscopic moisture
    gradient only selects which directions are needed (non-zero entries).
    """
    coef = spec.coefficients()
    morph = MorphologySpec.tagged(spec.lumen_tags)
    medium = MediumSpec.isotropic(coef["k_lumen"], coef["k_solid"], 1.0, spec.gamma_solid)
    directions = tuple(d for d, g in zip(DIRECTIONS, spec.gradients) if g != 0.0)
    cell = CellProblemSpec(
        spec.mesh, morph, medium, directions or DIRECTIONS, spec.u0, spec.tau, spec.t_final, spec.steady_tol, spec.window
    )
    cell.validate()
    cv = cv or build_control_volumes(spec.mesh)
    tags = tag_regions(spec.mesh, morph)
    grid = TimeGrid.from_final(cell.tau, cell.t_final)
    schedule = output_schedule(grid, cell.per_decade)
    records, reasons, fields = {}, {}, {}
    for d in cell.directions:
        base = cell_system(cv, tags, medium, d)
        sys = replace(base, mass=_capacity_mass(base, tags, coef["c_lumen"], coef["c_solid"]))
        rec, state, j = _run_direction(sys, cell, d, grid, schedule)
        records[j] = rec
        reasons[d] = state.reason
        fields[d] = sys.expand(state.midpoint())
    steps, tensors = _merge_records(records)
    series = EffectiveTensorSeries(
        np.array(steps, dtype=float) * cell.tau,
        tensors,
        bounds(tags.eps1, coef["k_lumen"], coef["k_solid"]),
        all(r == "steady" for r in reasons.values()),
        reasons,
        tags.eps1,
        fields,
        {"constants": dict(spec.constants), "gamma_solid": spec.gamma_solid, "tau": spec.tau, "t_final": spec.t_final, **coef},
    )
    return series.scaled(coef["D_v"])
