"""Sparse assembly of the control-volume system for one- and two-phase media.

The stiffness matrix ``K`` maps nodal values to the net outward flux of
``Q grad u`` across each control-volume boundary, so ``M du/dt = K u + F_b``
is the semi-discrete classical problem.  Columns of every local matrix sum to
zero, hence ``1^T K = 0`` for any mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import _kernels
from .errors import ConstraintError, GeometryError, SpecError, TaggingError
from .meshkit import CvMesh, PeriodicMap, RegionTags, resolve_periodic

__all__ = [
    "MediumSpec",
    "OperatorTerm",
    "SparseSystem",
    "lumped_mass",
    "stiffness",
    "boundary_flux_vector",
    "couple_binary",
    "phase_mass",
    "single_medium",
    "apply_quasi_periodic",
    "export_matrix_market",
]

Coeff = tuple[float, float] | Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class MediumSpec:
    """Diagonal diffusivity and fractional index per phase.

    ``q1``/``gamma1`` describe the inclusion (tag 1), ``q2``/``gamma2`` the
    matrix (tag 0).  A coefficient is either ``(qx, qy)`` or a callable taking
    triangle barycentres ``(nt, 2)`` and returning ``(qx, qy)`` arrays.
    ``interface_mode`` is ``"rl"`` (fractional flux continuity) or
    ``"classical"`` (Caputo form: classical fluxes everywhere, memory on the
    stored mass of each phase).
    """

    q1: Coeff = (1.0, 1.0)
    q2: Coeff = (1.0, 1.0)
    gamma1: float = 1.0
    gamma2: float = 1.0
    interface_mode: str = "rl"

    @classmethod
    def isotropic(cls, d1: float, d2: float, gamma1: float = 1.0, gamma2: float = 1.0, interface_mode: str = "rl"):
        return cls((d1, d1), (d2, d2), gamma1, gamma2, interface_mode)

    def validate(self) -> None:
        for g in (self.gamma1, self.gamma2):
            if not 0.0 < g <= 1.0:
                raise SpecError(f"fractional index {g} outside (0, 1]")
        for q in (self.q1, self.q2):
            if not callable(q) and (len(q) != 2 or min(q) <= 0):
                raise SpecError(f"diffusivity {q} must be two positive numbers")
        if self.interface_mode not in ("rl", "classical"):
            raise SpecError(f"interface mode must be 'rl' or 'classical', got {self.interface_mode!r}")

    def coefficients(self, centroids: np.ndarray, region: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        qx = np.empty(len(centroids))
        qy = np.empty(len(centroids))
        for tag, q in ((1, self.q1), (0, self.q2)):
            sel = region == tag
            if not sel.any():
                continue
            if callable(q):
                ax, ay = q(centroids[sel])
                ax = np.broadcast_to(np.asarray(ax, float), (sel.sum(),))
                ay = np.broadcast_to(np.asarray(ay, float), (sel.sum(),))
                if ax.min() <= 0 or ay.min() <= 0:
                    raise SpecError("diffusivity callable returned a non-positive value")
                qx[sel], qy[sel] = ax, ay
            else:
                qx[sel], qy[sel] = q
        return qx, qy


@dataclass(frozen=True, eq=False)
class OperatorTerm:
    """A stiffness block whose flux is acted on by ``D^(1-gamma)``.

    ``offset_load`` is the constant contribution ``K g`` created by eliminating
    quasi-periodic slaves.
    """

    K: sp.csr_matrix
    gamma: float
    offset_load: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Assembled semi-discrete system ``M du/dt = sum_j D^(1-gamma_j)[K_j u] + F_b``.

    ``layout`` maps each mesh node to its unknown index; ``shift`` holds the
    additive offset so ``u_node = w[layout] + shift``.  When ``memory_mass``
    is set the system is in Caputo form instead,
    ``sum_i M_i D^(gamma_i)[u - u0] = K u + F_b``, with one lumped mass per phase.
    """

    mass: np.ndarray
    terms: tuple[OperatorTerm, ...]
    layout: np.ndarray
    shift: np.ndarray
    cv: CvMesh
    tags: RegionTags | None = None
    medium: MediumSpec | None = None
    boundary_load: Callable[[float], np.ndarray] | None = None
    reduction: sp.csr_matrix | None = None
    meta: dict = field(default_factory=dict)
    memory_mass: tuple[tuple[np.ndarray, float], ...] | None = None

    @property
    def n_unknowns(self) -> int:
        return len(self.mass)

    @property
    def stiffness(self) -> sp.csr_matrix:
        out = self.terms[0].K.copy()
        for t in self.terms[1:]:
            out = out + t.K
        return out.tocsr()

    def expand(self, w: np.ndarray) -> np.ndarray:
        """Nodal field from reduced unknowns."""
        return w[self.layout] + self.shift

    def restrict(self, u: np.ndarray) -> np.ndarray:
        """Reduced unknowns from a nodal field (values taken at master nodes)."""
        w = np.empty(self.n_unknowns)
        w[self.layout] = u - self.shift
        return w

    def project(self, u: np.ndarray) -> np.ndarray:
        """Lumped-mass projection of a nodal field onto the constrained space.

        Each master takes the volume-weighted average of ``u - shift`` over its
        equivalence class, so ``mean(project(u))`` equals the mean of ``u``.
        """
        u = np.broadcast_to(np.asarray(u, dtype=float), self.shift.shape)
        acc = np.bincount(self.layout, weights=self.cv.cv_volumes * (u - self.shift), minlength=self.n_unknowns)
        return acc / self.mass

    def mean(self, w: np.ndarray) -> float:
        """Volume-weighted mean of the expanded field over the mesh."""
        u = self.expand(w)
        v = self.cv.cv_volumes
        return float(v @ u / v.sum())

    def with_boundary_load(self, load: Callable[[float], np.ndarray]) -> "SparseSystem":
        return SparseSystem(
            self.mass,
            self.terms,
            self.layout,
            self.shift,
            self.cv,
            self.tags,
            self.medium,
            load,
            self.reduction,
            dict(self.meta),
            self.memory_mass,
        )


def lumped_mass(cv: CvMesh) -> sp.dia_matrix:
    return sp.diags(cv.cv_volumes)


def _assemble(cv: CvMesh, qx: np.ndarray, qy: np.ndarray, tri_mask: np.ndarray | None = None) -> sp.csr_matrix:
    mesh = cv.base
    tris = mesh.triangles if tri_mask is None else mesh.triangles[tri_mask]
    n = mesh.n_nodes
    if len(tris) == 0:
        return sp.csr_matrix((n, n))
    if tri_mask is not None:
        qx, qy = qx[tri_mask], qy[tri_mask]
    local = _kernels.local_stiffness(mesh.nodes, np.ascontiguousarray(tris), np.ascontiguousarray(qx), np.ascontiguousarray(qy))
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    # coo->csr sums duplicates in a fixed order, so the reduction is deterministic
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def stiffness(cv: CvMesh, tags: RegionTags | None, medium: MediumSpec, region: int | None = None) -> sp.csr_matrix:
    """Control-volume stiffness, optionally restricted to triangles of one phase."""
    medium.validate()
    mesh = cv.base
    chi = np.zeros(mesh.n_triangles, dtype=np.int8) if tags is None else tags.tri_region
    if len(chi) != mesh.n_triangles:
        raise GeometryError("region tags do not match the mesh")
    bary = mesh.nodes[mesh.triangles].mean(axis=1)
    qx, qy = medium.coefficients(bary, chi)
    mask = None if region is None else chi == region
    return _assemble(cv, qx, qy, mask)


def boundary_flux_vector(cv: CvMesh, psi: Callable, t: float, edges: np.ndarray | None = None) -> np.ndarray:
    """Prescribed boundary flux integrated over the half edges of each boundary node.

    ``psi(x, y, t)`` returns the flux vector components ``(psi1, psi2)``.  Each
    boundary edge ``p -> q`` (anticlockwise) splits at its midpoint; node ``p``
    receives ``psi1 dy - psi2 dx`` evaluated at the first quarter point and
    ``q`` the same on the second half.
    """
    mesh = cv.base
    e = mesh.boundary_edges if edges is None else edges
    out = np.zeros(mesh.n_nodes)
    if len(e) == 0:
        return out
    p = mesh.nodes[e[:, 0]]
    q = mesh.nodes[e[:, 1]]
    mid = 0.5 * (p + q)
    for nodes, a, b in ((e[:, 0], p, mid), (e[:, 1], mid, q)):
        c = 0.5 * (a + b)
        psi1, psi2 = psi(c[:, 0], c[:, 1], t)
        psi1 = np.broadcast_to(np.asarray(psi1, float), (len(c),))
        psi2 = np.broadcast_to(np.asarray(psi2, float), (len(c),))
        if not (np.all(np.isfinite(psi1)) and np.all(np.isfinite(psi2))):
            raise SpecError(f"boundary flux is undefined at t={t}")
        contrib = psi1 * (b[:, 1] - a[:, 1]) - psi2 * (b[:, 0] - a[:, 0])
        np.add.at(out, nodes, contrib)
    return out


def phase_mass(cv: CvMesh, tags: RegionTags, region: int) -> np.ndarray:
    """Lumped control-volume area lying in one phase (a third of each triangle)."""
    mesh = cv.base
    w = np.where(tags.tri_region == region, cv.tri_area / 3.0, 0.0)
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(w, 3), minlength=mesh.n_nodes)


def couple_binary(cv: CvMesh, tags: RegionTags, medium: MediumSpec) -> SparseSystem:
    """Two-phase system with one shared unknown per interface node.

    In ``rl`` mode each phase's flux block carries that phase's index.  In
    ``classical`` mode all fluxes are classical and each phase's share of a
    control volume stores mass through that phase's Caputo derivative.
    """
    medium.validate()
    mesh = cv.base
    if len(tags.tri_region) != mesh.n_triangles:
        raise TaggingError("region tags do not match the mesh")
    interior1, interface, _ = tags.node_sets(mesh)
    if len(np.intersect1d(interface, tags.interface_nodes)) != len(interface):
        raise TaggingError("interface node set is inconsistent with the triangle tags")
    n = mesh.n_nodes
    k1 = stiffness(cv, tags, medium, region=1)
    k2 = stiffness(cv, tags, medium, region=0)
    memory = None
    if medium.interface_mode == "rl":
        terms = _merge_terms([(k1, medium.gamma1), (k2, medium.gamma2)])
    else:
        terms = _merge_terms([(k1, 1.0), (k2, 1.0)])
        memory = ((phase_mass(cv, tags, 1), medium.gamma1), (phase_mass(cv, tags, 0), medium.gamma2))
    return SparseSystem(
        cv.cv_volumes.copy(),
        terms,
        np.arange(n),
        np.zeros(n),
        cv,
        tags,
        medium,
        meta={"interface_nodes": int(len(interface)), "inclusion_interior_nodes": int(len(interior1))},
        memory_mass=memory,
    )


def single_medium(cv: CvMesh, q: Coeff, gamma: float) -> SparseSystem:
    medium = MediumSpec(q, q, gamma, gamma)
    k = stiffness(cv, None, medium)
    n = cv.base.n_nodes
    return SparseSystem(cv.cv_volumes.copy(), (OperatorTerm(k, float(gamma)),), np.arange(n), np.zeros(n), cv, None, medium)


def _merge_terms(raw: Sequence[tuple[sp.csr_matrix, float]]) -> tuple[OperatorTerm, ...]:
    merged: dict[float, sp.csr_matrix] = {}
    for k, g in raw:
        if k.nnz == 0:
            continue
        merged[g] = (merged[g] + k).tocsr() if g in merged else k.tocsr()
    if not merged:
        k, g = raw[0]
        merged[g] = k.tocsr()
    # order terms by gamma so weight tables line up deterministically
    return tuple(OperatorTerm(merged[g], float(g)) for g in sorted(merged))


def apply_quasi_periodic(sys: SparseSystem, maps: Sequence[PeriodicMap]) -> SparseSystem:
    """Eliminate slave nodes: ``u = T w + g``.

    Slave columns fold into master columns, slave rows accumulate into master
    rows (``T^T K T``), and offsets become the constant load ``T^T K g``.
    """
    n = sys.cv.base.n_nodes
    if len(sys.layout) != n or np.any(sys.layout != np.arange(n)):
        raise ConstraintError("periodic constraints must be applied to an unreduced system")
    root, shift = resolve_periodic(n, maps)
    masters = np.unique(root)
    index = np.full(n, -1, dtype=np.int64)
    index[masters] = np.arange(len(masters))
    layout = index[root]
    if np.any(layout < 0):
        raise ConstraintError("periodic resolution left a node without a master")
    T = sp.csr_matrix((np.ones(n), (np.arange(n), layout)), shape=(n, len(masters)))
    Tt = T.T.tocsr()
    mass = Tt @ sys.mass
    terms = []
    for term in sys.terms:
        kr = (Tt @ term.K @ T).tocsr()
        kr.sum_duplicates()
        load = Tt @ (term.K @ shift)
        if term.offset_load is not None:
            load = load + Tt @ term.offset_load
        terms.append(OperatorTerm(kr, term.gamma, load))
    bl = sys.boundary_load
    red_load = None if bl is None else (lambda t, _f=bl: Tt @ _f(t))
    meta = dict(sys.meta)
    meta["slaves"] = int(n - len(masters))
    memory = None if sys.memory_mass is None else tuple((Tt @ mm, g) for mm, g in sys.memory_mass)
    return SparseSystem(mass, tuple(terms), layout, shift, sys.cv, sys.tags, sys.medium, red_load, T, meta, memory)


def export_matrix_market(sys: SparseSystem, directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for j, term in enumerate(sys.terms):
        p = d / f"K{j}_gamma{term.gamma:g}.mtx"
        scipy.io.mmwrite(str(p), term.K)
        out.append(p)
    p = d / "M.mtx"
    scipy.io.mmwrite(str(p), sp.diags(sys.mass).tocoo())
    out.append(p)
    return out

