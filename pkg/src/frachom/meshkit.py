"""Triangular meshes, median-dual control volumes, phase tags and periodic pairs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, MeshParseError, PairingError, SpecError

__all__ = [
    "Mesh",
    "CvMesh",
    "MorphologySpec",
    "RegionTags",
    "PeriodicMap",
    "parse_msh",
    "write_msh",
    "build_control_volumes",
    "tag_regions",
    "pair_periodic",
    "resolve_periodic",
    "dump_control_volumes",
]

LINE = 1
TRIANGLE = 2
POINT = 15
_ELEMENT_NAMES = {
    1: "2-node line",
    2: "3-node triangle",
    3: "4-node quadrangle",
    4: "4-node tetrahedron",
    5: "8-node hexahedron",
    6: "6-node prism",
    7: "5-node pyramid",
    8: "3-node second order line",
    9: "6-node second order triangle",
    15: "1-node point",
}
_NODES_PER_TYPE = {1: 2, 2: 3, 15: 1}


def _signed_area2(xy: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = xy[tris]
    return (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 2, 0] - p[:, 0, 0]) * (
        p[:, 1, 1] - p[:, 0, 1]
    )


def _topological_boundary(tris: np.ndarray) -> np.ndarray:
    """Edges used by exactly one triangle, oriented as in that triangle."""
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if counts.max(initial=0) > 2:
        raise GeometryError("non-manifold mesh: an edge is shared by more than two triangles")
    return e[counts[inv] == 1]


@dataclass(frozen=True, eq=False)
class Mesh:
    """A 2D triangulation.

    ``triangles`` are always stored counter-clockwise.  ``boundary_edges``
    lists the topological boundary (edges owned by one triangle) with the
    physical tag of the matching line element, or 0 when untagged.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    triangle_tags: np.ndarray
    physical_names: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(
        cls,
        nodes,
        triangles,
        triangle_tags=None,
        tagged_lines: np.ndarray | None = None,
        line_tags: np.ndarray | None = None,
        physical_names: dict | None = None,
    ) -> "Mesh":
        xy = np.ascontiguousarray(np.asarray(nodes, dtype=float)[:, :2])
        tris = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
        if tris.size and (tris.min() < 0 or tris.max() >= len(xy)):
            raise GeometryError("triangle references a node index out of range")
        a2 = _signed_area2(xy, tris)
        flip = a2 < 0
        if flip.any():
            tris = tris.copy()
            tris[flip] = tris[flip][:, [0, 2, 1]]
        ttags = np.zeros(len(tris), dtype=np.int64) if triangle_tags is None else np.asarray(triangle_tags, np.int64)
        bnd = _topological_boundary(tris)
        btags = np.zeros(len(bnd), dtype=np.int64)
        if tagged_lines is not None and len(tagged_lines):
            lookup = {tuple(sorted(map(int, ln))): int(t) for ln, t in zip(tagged_lines, line_tags)}
            for i, (p, q) in enumerate(bnd):
                btags[i] = lookup.get((min(p, q), max(p, q)), 0)
        return cls(xy, tris, bnd, btags, ttags, dict(physical_names or {}))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * _signed_area2(self.nodes, self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def h(self) -> float:
        """Largest triangle diameter (longest edge)."""
        p = self.nodes[self.triangles]
        d = [np.hypot(*(p[:, i] - p[:, (i + 1) % 3]).T) for i in range(3)]
        return float(np.max(d))

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.nodes.min(axis=0)
        hi = self.nodes.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def check(self) -> None:
        """Raise :class:`GeometryError` if a structural invariant is broken."""
        a = self.areas
        if len(a) and a.min() <= 0:
            raise GeometryError(f"triangle {int(a.argmin())} has non-positive area {a.min():.3e}")
        key = np.sort(self.boundary_edges, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise GeometryError("duplicate boundary edge")


def _read_section(lines: list[str], start: int, end_marker: str) -> int:
    for j in range(start, len(lines)):
        if lines[j].strip() == end_marker:
            return j
    raise MeshParseError(f"missing {end_marker}", start + 1)


def parse_msh(path: str | Path) -> Mesh:
    """Read an ASCII Gmsh 2.2 file with 2-node lines and 3-node triangles.

    Triangle physical tags become ``Mesh.triangle_tags``; line physical tags are
    attached to the boundary edges they coincide with.  Point elements are
    accepted and ignored.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    nodes: dict[int, tuple[float, float]] = {}
    tris, ttags, lns, ltags = [], [], [], []
    names: dict[int, str] = {}
    seen_format = False
    i = 0
    while i < len(lines):
        s = lines[i].strip()
        if not s:
            i += 1
            continue
        if s == "$MeshFormat":
            j = _read_section(lines, i + 1, "$EndMeshFormat")
            parts = lines[i + 1].split()
            if len(parts) < 3:
                raise MeshParseError("malformed $MeshFormat header", i + 2)
            if not parts[0].startswith("2."):
                raise MeshParseError(f"unsupported MSH version {parts[0]} (need 2.2)", i + 2)
            if parts[1] != "0":
                raise MeshParseError("binary MSH files are not supported", i + 2)
            seen_format = True
            i = j + 1
        elif s == "$PhysicalNames":
            j = _read_section(lines, i + 1, "$EndPhysicalNames")
            for k in range(i + 2, j):
                parts = lines[k].split(maxsplit=2)
                try:
                    names[int(parts[1])] = parts[2].strip().strip('"')
                except (IndexError, ValueError) as exc:
                    raise MeshParseError(f"bad physical name entry: {lines[k]!r}", k + 1) from exc
            i = j + 1
        elif s == "$Nodes":
            j = _read_section(lines, i + 1, "$EndNodes")
            try:
                count = int(lines[i + 1])
            except (IndexError, ValueError) as exc:
                raise MeshParseError("bad node count", i + 2) from exc
            if j - (i + 2) != count:
                raise MeshParseError(f"expected {count} nodes, found {j - (i + 2)}", i + 2)
            for k in range(i + 2, j):
                parts = lines[k].split()
                try:
                    nid, x, y, z = int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3])
                except (IndexError, ValueError) as exc:
                    raise MeshParseError(f"bad node record: {lines[k]!r}", k + 1) from exc
                if z != 0.0:
                    raise MeshParseError(f"node {nid} has nonzero z={z}; only planar meshes are supported", k + 1)
                nodes[nid] = (x, y)
            i = j + 1
        elif s == "$Elements":
            j = _read_section(lines, i + 1, "$EndElements")
            try:
                count = int(lines[i + 1])
            except (IndexError, ValueError) as exc:
                raise MeshParseError("bad element count", i + 2) from exc
            if j - (i + 2) != count:
                raise MeshParseError(f"expected {count} elements, found {j - (i + 2)}", i + 2)
            for k in range(i + 2, j):
                parts = lines[k].split()
                try:
                    etype, ntag = int(parts[1]), int(parts[2])
                    tags = [int(t) for t in parts[3 : 3 + ntag]]
                    conn = [int(t) for t in parts[3 + ntag :]]
                except (IndexError, ValueError) as exc:
                    raise MeshParseError(f"bad element record: {lines[k]!r}", k + 1) from exc
                if etype not in _NODES_PER_TYPE:
                    name = _ELEMENT_NAMES.get(etype, "unknown")
                    raise MeshParseError(f"unsupported element type {etype} ({name})", k + 1)
                if len(conn) != _NODES_PER_TYPE[etype]:
                    raise MeshParseError(f"element type {etype} needs {_NODES_PER_TYPE[etype]} nodes", k + 1)
                phys = tags[0] if tags else 0
                if etype == TRIANGLE:
                    tris.append(conn)
                    ttags.append(phys)
                elif etype == LINE:
                    lns.append(conn)
                    ltags.append(phys)
            i = j + 1
        elif s.startswith("$"):
            # skip unknown sections such as $Periodic or $NodeData
            end = "$End" + s[1:]
            i = _read_section(lines, i + 1, end) + 1
        else:
            raise MeshParseError(f"unexpected content {s!r}", i + 1)
    if not seen_format:
        raise MeshParseError("missing $MeshFormat section", 1)
    if not tris:
        raise MeshParseError("mesh contains no triangles", len(lines))
    ids = np.array(sorted(nodes))
    index = {nid: k for k, nid in enumerate(ids)}
    xy = np.array([nodes[n] for n in ids])
    try:
        tri_arr = np.array([[index[n] for n in t] for t in tris], dtype=np.int64)
        line_arr = np.array([[index[n] for n in t] for t in lns], dtype=np.int64).reshape(-1, 2)
    except KeyError as exc:
        raise MeshParseError(f"element references undefined node {exc.args[0]}", len(lines)) from exc
    mesh = Mesh.from_arrays(xy, tri_arr, np.array(ttags), line_arr, np.array(ltags, dtype=np.int64), names)
    if mesh.areas.min() <= 0:
        raise GeometryError(f"degenerate triangle {int(mesh.areas.argmin())} in {path}")
    return mesh


def write_msh(mesh: Mesh, path: str | Path) -> None:
    """Write ``mesh`` as ASCII MSH 2.2 (boundary edges as tagged line elements)."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]
    if mesh.physical_names:
        out.append("$PhysicalNames")
        out.append(str(len(mesh.physical_names)))
        surface = set(np.unique(mesh.triangle_tags).tolist())
        for tag, name in sorted(mesh.physical_names.items()):
            dim = 2 if tag in surface else 1
            out.append(f'{dim} {tag} "{name}"')
        out.append("$EndPhysicalNames")
    out.append("$Nodes")
    out.append(str(mesh.n_nodes))
    out.extend(f"{k + 1} {x:.17g} {y:.17g} 0" for k, (x, y) in enumerate(mesh.nodes))
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(len(mesh.boundary_edges) + mesh.n_triangles))
    eid = 1
    for (p, q), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        out.append(f"{eid} 1 2 {tag} {tag} {p + 1} {q + 1}")
        eid += 1
    for (a, b, c), tag in zip(mesh.triangles, mesh.triangle_tags):
        out.append(f"{eid} 2 2 {tag} {tag} {a + 1} {b + 1} {c + 1}")
        eid += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# control volumes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CvMesh:
    """Median-dual control volumes of a :class:`Mesh`.

    Sub-control volume ``(e, a)`` is the part of triangle ``e`` closest to its
    local vertex ``a``.  Its two internal faces run from the midpoint of edge
    ``(a, a+1)`` to the barycentre and from the barycentre to the midpoint of
    edge ``(a, a+2)``; the pair is traversed anticlockwise about vertex ``a``.

    Shape functions follow ``N_a = (a_a x + b_a y + c_a) / (2 area)``.
    """

    base: Mesh
    cv_volumes: np.ndarray
    face_midpoints: np.ndarray  # (nt, 3, 2, 2)
    face_dx: np.ndarray  # (nt, 3, 2)
    face_dy: np.ndarray  # (nt, 3, 2)
    face_owner: np.ndarray  # (nt, 3)
    face_neighbour: np.ndarray  # (nt, 3, 2)
    shape_a: np.ndarray  # (nt, 3)
    shape_b: np.ndarray
    shape_c: np.ndarray
    tri_area: np.ndarray

    def shape_gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Constant ``dN/dx`` and ``dN/dy`` per triangle and local vertex."""
        two = 2.0 * self.tri_area[:, None]
        return self.shape_a / two, self.shape_b / two

    def shape_values(self, e: int, x: float, y: float) -> np.ndarray:
        return (self.shape_a[e] * x + self.shape_b[e] * y + self.shape_c[e]) / (2.0 * self.tri_area[e])


def build_control_volumes(mesh: Mesh) -> CvMesh:
    xy, tris = mesh.nodes, mesh.triangles
    area = mesh.areas
    x0, y0, x1, y1 = mesh.bbox
    scale = max(x1 - x0, y1 - y0, 1e-300)
    bad = np.flatnonzero(area < 1e-14 * scale * scale)
    if bad.size:
        raise GeometryError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})")
    p = xy[tris]  # (nt, 3, 2)
    x, y = p[..., 0], p[..., 1]
    sa = np.empty_like(x)
    sb = np.empty_like(x)
    sc = np.empty_like(x)
    for a in range(3):
        j, k = (a + 1) % 3, (a + 2) % 3
        sa[:, a] = y[:, j] - y[:, k]
        sb[:, a] = x[:, k] - x[:, j]
        sc[:, a] = x[:, j] * y[:, k] - x[:, k] * y[:, j]
    centroid = p.mean(axis=1)
    mids = np.empty((len(tris), 3, 2, 2))
    dx = np.empty((len(tris), 3, 2))
    dy = np.empty((len(tris), 3, 2))
    neigh = np.empty((len(tris), 3, 2), dtype=np.int64)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        mab = 0.5 * (p[:, a] + p[:, b])
        mac = 0.5 * (p[:, a] + p[:, c])
        seg = [(mab, centroid), (centroid, mac)]
        for r, (s0, s1) in enumerate(seg):
            mids[:, a, r] = 0.5 * (s0 + s1)
            dx[:, a, r] = s1[:, 0] - s0[:, 0]
            dy[:, a, r] = s1[:, 1] - s0[:, 1]
        neigh[:, a, 0] = tris[:, b]
        neigh[:, a, 1] = tris[:, c]
    vols = np.zeros(mesh.n_nodes)
    # fixed-order accumulation keeps the reduction deterministic
    np.add.at(vols, tris.ravel(), np.repeat(area / 3.0, 3))
    return CvMesh(mesh, vols, mids, dx, dy, tris.copy(), neigh, sa, sb, sc, area)


def dump_control_volumes(cv: CvMesh, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "cv_volume"])
        for i, v in enumerate(cv.cv_volumes):
            w.writerow([i, f"{v:.17g}"])


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MorphologySpec:
    """Inclusion geometry inside the unit cell.

    ``kind`` is one of ``rect``, ``circle``, ``lshape`` or ``tagged``.  For
    ``rect`` the box is ``(x0, x1, y0, y1)``; for ``circle`` it is
    ``(cx, cy, radius)``; ``lshape`` takes a list of boxes whose union is the
    inclusion; ``tagged`` reads the inclusion from triangle physical tags.
    """

    kind: str
    params: tuple = ()
    tags: tuple[int, ...] = ()

    @classmethod
    def rect(cls, x0=3 / 8, x1=5 / 8, y0=0.0, y1=1.0) -> "MorphologySpec":
        return cls("rect", (x0, x1, y0, y1))

    @classmethod
    def circle(cls, cx=0.5, cy=0.5, radius=None) -> "MorphologySpec":
        r = math.sqrt(1.0 / (4.0 * math.pi)) if radius is None else radius
        return cls("circle", (cx, cy, r))

    @classmethod
    def lshape(cls, boxes=None) -> "MorphologySpec":
        if boxes is None:
            boxes = ((0.5, 0.75, 0.0, 0.5), (0.25, 0.75, 0.5, 0.75))
        return cls("lshape", tuple(tuple(b) for b in boxes))

    @classmethod
    def tagged(cls, tags: Iterable[int]) -> "MorphologySpec":
        return cls("tagged", (), tuple(int(t) for t in tags))

    @classmethod
    def named(cls, name: str) -> "MorphologySpec":
        key = name.lower()
        if key in ("rect", "rectangle", "1", "morphology1"):
            return cls.rect()
        if key in ("circle", "2", "morphology2"):
            return cls.circle()
        if key in ("lshape", "l-shape", "l", "3", "morphology3"):
            return cls.lshape()
        raise SpecError(f"unknown morphology {name!r}")

    def validate(self) -> None:
        if self.kind == "rect":
            boxes = [self.params]
        elif self.kind == "lshape":
            boxes = list(self.params)
        elif self.kind == "circle":
            cx, cy, r = self.params
            if r <= 0 or cx - r < 0 or cx + r > 1 or cy - r < 0 or cy + r > 1:
                raise SpecError(f"circle {self.params} is not inside the unit cell")
            return
        elif self.kind == "tagged":
            if not self.tags:
                raise SpecError("tagged morphology needs at least one physical tag")
            return
        else:
            raise SpecError(f"unknown morphology kind {self.kind!r}")
        for x0, x1, y0, y1 in boxes:
            if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
                raise SpecError(f"box {(x0, x1, y0, y1)} is not inside the unit cell")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        if self.kind == "rect":
            x0, x1, y0, y1 = self.params
            return (x > x0) & (x < x1) & (y > y0) & (y < y1)
        if self.kind == "circle":
            cx, cy, r = self.params
            return (x - cx) ** 2 + (y - cy) ** 2 < r * r
        if self.kind == "lshape":
            inside = np.zeros(len(pts), dtype=bool)
            for x0, x1, y0, y1 in self.params:
                inside |= (x > x0) & (x < x1) & (y > y0) & (y < y1)
            return inside
        raise SpecError(f"morphology {self.kind!r} has no analytic indicator")

    def analytic_fraction(self) -> float | None:
        if self.kind == "rect":
            x0, x1, y0, y1 = self.params
            return (x1 - x0) * (y1 - y0)
        if self.kind == "circle":
            return math.pi * self.params[2] ** 2
        if self.kind == "lshape":
            return sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.params)
        return None


@dataclass(frozen=True, eq=False)
class RegionTags:
    """Phase indicator per triangle (1 = inclusion, 0 = matrix) and derived node sets."""

    tri_region: np.ndarray
    interface_nodes: np.ndarray
    outer_boundary_nodes: np.ndarray
    vol_fraction: tuple[float, float]

    @property
    def eps1(self) -> float:
        return self.vol_fraction[0]

    def node_sets(self, mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(inclusion-interior, interface, matrix-only) node index arrays."""
        in1 = np.zeros(mesh.n_nodes, dtype=bool)
        in2 = np.zeros(mesh.n_nodes, dtype=bool)
        in1[mesh.triangles[self.tri_region == 1].ravel()] = True
        in2[mesh.triangles[self.tri_region == 0].ravel()] = True
        return np.flatnonzero(in1 & ~in2), np.flatnonzero(in1 & in2), np.flatnonzero(in2 & ~in1)


def _regions_from_indicator(mesh: Mesh, chi: np.ndarray) -> RegionTags:
    chi = chi.astype(np.int8)
    in1 = np.zeros(mesh.n_nodes, dtype=bool)
    in2 = np.zeros(mesh.n_nodes, dtype=bool)
    in1[mesh.triangles[chi == 1].ravel()] = True
    in2[mesh.triangles[chi == 0].ravel()] = True
    area = mesh.areas
    eps1 = float(area[chi == 1].sum() / area.sum())
    return RegionTags(chi, np.flatnonzero(in1 & in2), mesh.boundary_nodes(), (eps1, 1.0 - eps1))


def tag_regions(mesh: Mesh, morphology: MorphologySpec) -> RegionTags:
    """Assign each triangle to the inclusion or the matrix.

    Analytic morphologies use barycentre membership, so the mesh must have
    edges along the inclusion boundary for the result to be exact.
    """
    morphology.validate()
    if morphology.kind == "tagged":
        chi = np.isin(mesh.triangle_tags, morphology.tags)
    else:
        bary = mesh.nodes[mesh.triangles].mean(axis=1)
        chi = morphology.contains(bary)
    return _regions_from_indicator(mesh, chi)


# ---------------------------------------------------------------------------
# periodic pairing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicMap:
    """Slave nodes on the high side of ``axis`` tied to masters on the low side.

    The constraint reads ``u[slave] = u[master] + offset``.
    """

    pairs: np.ndarray  # (n, 2) master, slave
    offsets: np.ndarray  # (n,)
    axis: str

    @property
    def masters(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def slaves(self) -> np.ndarray:
        return self.pairs[:, 1]


def pair_periodic(mesh: Mesh, axis: str, offset: float = 0.0, tol: float | None = None) -> PeriodicMap:
    if axis not in ("x", "y"):
        raise SpecError(f"axis must be 'x' or 'y', got {axis!r}")
    x0, y0, x1, y1 = mesh.bbox
    size = max(x1 - x0, y1 - y0)
    tol = 1e-9 * size if tol is None else tol
    k = 0 if axis == "x" else 1
    lo, hi = (x0, x1) if axis == "x" else (y0, y1)
    bnodes = mesh.boundary_nodes()
    c = mesh.nodes[bnodes]
    low = bnodes[np.abs(c[:, k] - lo) <= tol]
    high = bnodes[np.abs(c[:, k] - hi) <= tol]
    t_low = mesh.nodes[low, 1 - k]
    t_high = mesh.nodes[high, 1 - k]
    order = np.argsort(t_low)
    t_sorted = t_low[order]
    pairs = []
    used = set()
    for s, ts in zip(high, t_high):
        j = np.searchsorted(t_sorted, ts)
        cands = [m for m in (j - 1, j, j + 1) if 0 <= m < len(t_sorted) and abs(t_sorted[m] - ts) <= tol]
        if not cands:
            raise PairingError(f"node {int(s)} at {tuple(mesh.nodes[s])} has no partner on the {axis}={lo} side")
        if len(cands) > 1:
            raise PairingError(f"node {int(s)} matches {len(cands)} nodes on the opposite side (ambiguous)")
        m = int(low[order[cands[0]]])
        if m in used:
            raise PairingError(f"master node {m} matched twice (ambiguous pairing)")
        used.add(m)
        pairs.append((m, int(s)))
    if len(pairs) != len(low):
        unmatched = sorted(set(map(int, low)) - used)
        raise PairingError(f"nodes {unmatched[:5]} on the {axis}={lo} side have no partner")
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return PeriodicMap(arr, np.full(len(arr), float(offset)), axis)


def resolve_periodic(n_nodes: int, maps: Sequence[PeriodicMap]) -> tuple[np.ndarray, np.ndarray]:
    """Collapse periodic maps into ``root[i]`` and ``shift[i]`` with ``u[i] = u[root[i]] + shift[i]``.

    Corner nodes that are slaves of several maps are chained to one master
    with summed offsets.  Inconsistent offsets around a cycle raise
    :class:`~frachom.errors.ConstraintError`.
    """
    from .errors import ConstraintError

    parent = np.arange(n_nodes)
    pshift = np.zeros(n_nodes)

    def find(i: int) -> tuple[int, float]:
        total = 0.0
        path = []
        while parent[i] != i:
            path.append(i)
            total += pshift[i]
            i = parent[i]
        # path compression with accumulated shifts
        acc = total
        for j in path:
            old = pshift[j]
            parent[j] = i
            pshift[j] = acc
            acc -= old
        return i, total

    for pm in maps:
        for (m, s), off in zip(pm.pairs, pm.offsets):
            if m == s:
                raise ConstraintError(f"node {m} is paired with itself")
            rm, sm = find(int(m))
            rs, ss = find(int(s))
            # want u[s] = u[m] + off  ->  u[rs] + ss = u[rm] + sm + off
            if rm == rs:
                if abs(ss - (sm + off)) > 1e-12 * max(1.0, abs(off)):
                    raise ConstraintError(f"inconsistent periodic offsets around node {s}")
                continue
            # attach the root with the larger index below the smaller one
            if rs > rm:
                parent[rs] = rm
                pshift[rs] = sm + off - ss
            else:
                parent[rm] = rs
                pshift[rm] = ss - sm - off
    root = np.empty(n_nodes, dtype=np.int64)
    shift = np.empty(n_nodes)
    for i in range(n_nodes):
        r, s = find(i)
        root[i] = r
        shift[i] = s
    return root, shift
