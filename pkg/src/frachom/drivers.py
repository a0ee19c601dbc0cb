"""Scenario drivers shared by the command line and the acceptance tests.

Each driver takes plain objects (meshes, numbers) and returns row dicts, so
callers decide how to report them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assembly import MediumSpec, SparseSystem, apply_quasi_periodic, boundary_flux_vector, couple_binary, single_medium
from .errors import SpecError
from .fracops import mittag_leffler
from .layered import LayeredSpec, mass_balance, solve
from .meshkit import Mesh, MorphologySpec, build_control_volumes, pair_periodic, tag_regions
from .stepper import StopCriterion, TimeGrid, build_weights, run_until

__all__ = [
    "manufactured_problem",
    "convergence_study",
    "observed_orders",
    "layered_system",
    "centreline",
    "interpolate_p1",
    "LayeredRun",
    "layered_run",
    "steady_centreline",
]

# ---------------------------------------------------------------------------
# manufactured convergence problem
# ---------------------------------------------------------------------------


def manufactured_problem(mesh: Mesh, gamma: float, diffusivity: float = 0.5):
    """``u = E_gamma(-t^gamma) sin x sin y`` with ``Q = q I`` and its boundary flux.

    With ``q = 1/2`` the field is an eigenfunction of ``div(Q grad)`` with
    eigenvalue -1, so the time factor is the Mittag-Leffler relaxation.
    Returns ``(system, u0, exact)`` where ``exact(t)`` gives nodal values.
    """
    cv = build_control_volumes(mesh)
    sys = single_medium(cv, (diffusivity, diffusivity), gamma)
    lam = 2.0 * diffusivity

    def psi(x, y, t):
        # D^(1-gamma) of the flux: d/dt E_gamma(-lam t^gamma) integrated once
        c = diffusivity * t ** (gamma - 1.0) * mittag_leffler(gamma, gamma, -lam * t**gamma)
        return c * np.cos(x) * np.sin(y), c * np.sin(x) * np.cos(y)

    sys = sys.with_boundary_load(lambda t: boundary_flux_vector(cv, psi, t))
    shape = np.sin(mesh.nodes[:, 0]) * np.sin(mesh.nodes[:, 1])

    def exact(t: float) -> np.ndarray:
        return float(mittag_leffler(gamma, 1.0, -lam * t**gamma)) * shape

    return sys, shape.copy(), exact


def observed_orders(h: Sequence[float], err: Sequence[float]) -> list[float]:
    """``log(e_{k-1}/e_k) / log(h_{k-1}/h_k)``; NaN where h does not change."""
    out = [math.nan]
    for k in range(1, len(h)):
        rh = h[k - 1] / h[k]
        if rh <= 0 or abs(math.log(rh)) < 1e-12 or err[k] <= 0 or err[k - 1] <= 0:
            out.append(math.nan)
        else:
            out.append(math.log(err[k - 1] / err[k]) / math.log(rh))
    return out


def convergence_study(
    meshes: Sequence[tuple[str, Mesh]],
    gamma: float,
    m: int,
    tau: float = 1e-3,
    t_final: float = 1.0,
) -> list[dict]:
    """Errors at ``t_final`` for each mesh; orders use the volume-weighted L2 norm."""
    rows = []
    grid = TimeGrid.from_final(tau, t_final)
    for name, mesh in meshes:
        t0 = time.perf_counter()
        sys, u0, exact = manufactured_problem(mesh, gamma)
        weights = build_weights(sys, grid.n_steps, m=m)
        state = run_until(sys, weights, u0, grid)
        e = state.solution() - exact(grid.t_final)
        rows.append(
            {
                "mesh": name,
                "h": mesh.h,
                "nodes": mesh.n_nodes,
                "gamma": gamma,
                "m": m,
                "error_l2": float(np.sqrt(sys.mass @ (e * e))),
                "error_max": float(np.abs(e).max()),
                "seconds": time.perf_counter() - t0,
            }
        )
    hs = [r["h"] for r in rows]
    for key, col in (("order_l2", "error_l2"), ("order_max", "error_max")):
        for r, o in zip(rows, observed_orders(hs, [r[col] for r in rows])):
            r[key] = o
    return rows


# ---------------------------------------------------------------------------
# layered cross-validation on the strip morphology
# ---------------------------------------------------------------------------


def layered_system(mesh: Mesh, medium: MediumSpec, q0: float, morphology: MorphologySpec | None = None) -> SparseSystem:
    """Binary cell, periodic in y, with a jump ``q0`` of the unknown across x."""
    cv = build_control_volumes(mesh)
    tags = tag_regions(mesh, morphology or MorphologySpec.rect())
    maps = [pair_periodic(mesh, "x", q0), pair_periodic(mesh, "y", 0.0)]
    return apply_quasi_periodic(couple_binary(cv, tags, medium), maps)


def centreline(mesh: Mesh, y: float = 0.5, tol: float = 1e-9) -> np.ndarray:
    """Indices of nodes on the line ``y``, sorted by x."""
    idx = np.flatnonzero(np.abs(mesh.nodes[:, 1] - y) <= tol)
    return idx[np.argsort(mesh.nodes[idx, 0], kind="stable")]


def interpolate_p1(mesh: Mesh, u: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolant of a nodal field at arbitrary points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    p = mesh.nodes[mesh.triangles]
    out = np.full(len(pts), np.nan)
    a = p[:, 0]
    e1 = p[:, 1] - a
    e2 = p[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    for i, q in enumerate(pts):
        d = q - a
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        l0 = 1.0 - l1 - l2
        lam = np.stack([l0, l1, l2], axis=1)
        e = int(np.argmax(lam.min(axis=1)))
        if lam[e].min() < -1e-9:
            raise SpecError(f"point {tuple(q)} lies outside the mesh")
        out[i] = lam[e] @ u[mesh.triangles[e]]
    return out


@dataclass
class LayeredRun:
    gamma1: float
    gamma2: float
    x: np.ndarray
    fvm: np.ndarray
    oracle: np.ndarray
    gap_centre: float
    gap_all: float
    mean_drift: float
    oracle_mean: float
    seconds: float
    trace: list = field(default_factory=list)

    def row(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "gap_centreline": self.gap_centre,
            "gap_all_nodes": self.gap_all,
            "mean_drift": self.mean_drift,
            "oracle_mean": self.oracle_mean,
            "seconds": self.seconds,
        }


def layered_run(
    mesh: Mesh,
    gamma1: float,
    gamma2: float,
    d1: float = 10.0,
    d2: float = 1.0,
    u0: float = 1.0,
    q0: float = 1.0,
    tau: float = 1e-3,
    t_final: float = 1.0,
    slip: str = "discrete",
    m: int | None = 0,
    n_modes: int = 200,
) -> LayeredRun:
    """FVM on the strip cell against the three-layer oracle at ``t_final``.

    Phase 1 (diffusivity ``d1``, index ``gamma1``) is the strip
    ``3/8 < x < 5/8``; it is the middle layer of the oracle.
    """
    t0 = time.perf_counter()
    medium = MediumSpec.isotropic(d1, d2, gamma1, gamma2)
    sys = layered_system(mesh, medium, q0)
    grid = TimeGrid.from_final(tau, t_final)
    weights = build_weights(sys, grid.n_steps, m=m)
    w0 = sys.project(np.full(mesh.n_nodes, float(u0)))
    state = run_until(sys, weights, w0, grid, slip=slip)
    u = sys.expand(state.solution())
    spec = LayeredSpec.binary(d2, d1, gamma2, gamma1, q0=q0, u0=u0, n_modes=n_modes)
    bp = spec.breakpoints
    x = mesh.nodes[:, 0]
    layer = np.clip(np.searchsorted(bp[1:3], x, side="right"), 0, 2)
    ref = solve(spec, x, grid.t_final, layer).values
    line = centreline(mesh)
    if len(line) >= 2:
        xs, fvm, ora = x[line], u[line], ref[line]
    else:
        xs = np.linspace(0.0, 1.0, 81)
        pts = np.c_[xs, np.full_like(xs, 0.5)]
        fvm = interpolate_p1(mesh, u, pts)
        ora = solve(spec, xs, grid.t_final).values
    means = np.array([tr[1] for tr in state.trace])
    return LayeredRun(
        gamma1,
        gamma2,
        xs,
        fvm,
        ora,
        float(np.abs(fvm - ora).max()),
        float(np.abs(u - ref).max()),
        float(np.abs(means - means[0]).max() / max(abs(means[0]), 1e-300)),
        mass_balance(spec, grid.t_final),
        time.perf_counter() - t0,
        state.trace,
    )


def steady_centreline(
    mesh: Mesh,
    gamma1: float,
    gamma2: float,
    interface: str = "rl",
    d1: float = 10.0,
    d2: float = 1.0,
    u0: float = 1.0,
    q0: float = 1.0,
    tau: float = 1e-2,
    t_final: float = 1e3,
    steady_tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, str]:
    """Centreline profile once the layered cell stops changing."""
    medium = MediumSpec.isotropic(d1, d2, gamma1, gamma2, interface)
    sys = layered_system(mesh, medium, q0)
    grid = TimeGrid.from_final(tau, t_final)
    fractional = min(gamma1, gamma2) < 1.0
    weights = build_weights(sys, grid.n_steps, m=0 if fractional else None)
    w0 = sys.project(np.full(mesh.n_nodes, float(u0)))
    stop = StopCriterion(steady_tol, 10, False, lambda s, w: s.expand(w))
    state = run_until(sys, weights, w0, grid, stop, slip="discrete" if fractional else "exact")
    u = sys.expand(state.midpoint())
    line = centreline(mesh)
    return mesh.nodes[line, 0], u[line], state.reason
