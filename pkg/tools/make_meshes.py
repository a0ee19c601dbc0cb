"""Regenerate the MSH fixtures under meshes/.

Development helper only: needs the ``triangle`` package, which the library
itself does not import.  Boundary sides are pre-split into equal segments and
triangulated with Steiner points suppressed on segments, so opposite sides of
the unit cell carry matching nodes and inclusion boundaries are conforming.
The single-phase convergence squares use a force-smoothed lattice instead,
which gives the near-uniform edge lengths of a frontal mesher.

    python tools/make_meshes.py [outdir]
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import triangle
from scipy.spatial import Delaunay

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from frachom.meshkit import Mesh, write_msh  # noqa: E402

INCLUSION, MATRIX = 1, 2
NAMES = {INCLUSION: "inclusion", MATRIX: "matrix", 11: "bottom", 12: "right", 13: "top", 14: "left"}


class Pslg:
    def __init__(self):
        self.pts: list[tuple[float, float]] = []
        self.segs: list[tuple[int, int]] = []
        self.regions: list[tuple[float, float, int]] = []

    def vid(self, p) -> int:
        p = (round(p[0], 14), round(p[1], 14))
        for i, q in enumerate(self.pts):
            if abs(q[0] - p[0]) < 1e-12 and abs(q[1] - p[1]) < 1e-12:
                return i
        self.pts.append(p)
        return len(self.pts) - 1

    def polyline(self, pts, closed=False):
        ids = [self.vid(p) for p in pts]
        pairs = list(zip(ids[:-1], ids[1:]))
        if closed:
            pairs.append((ids[-1], ids[0]))
        for a, b in pairs:
            if a != b and (a, b) not in self.segs and (b, a) not in self.segs:
                self.segs.append((a, b))

    def line(self, p, q, n):
        t = np.linspace(0.0, 1.0, n + 1)
        self.polyline([(p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])) for s in t])


def _side_points(n: int, breaks=()) -> list[float]:
    pts = set(np.round(np.linspace(0, 1, n + 1), 14))
    pts.update(breaks)
    return sorted(pts)


def unit_square(g: Pslg, n: int, xbreaks=(), ybreaks=()):
    xs = _side_points(n, xbreaks)
    ys = _side_points(n, ybreaks)
    g.polyline([(x, 0.0) for x in xs])
    g.polyline([(x, 1.0) for x in xs])
    g.polyline([(0.0, y) for y in ys])
    g.polyline([(1.0, y) for y in ys])


def build(g: Pslg, area: float, attr: bool = True) -> Mesh:
    data = {"vertices": np.array(g.pts), "segments": np.array(g.segs)}
    opts = f"pq30a{area:.10f}Y"
    if g.regions:
        data["regions"] = np.array([[x, y, tag, 0.0] for x, y, tag in g.regions])
        opts += "A"
    out = triangle.triangulate(data, opts)
    tags = None
    if attr and "triangle_attributes" in out:
        tags = out["triangle_attributes"][:, 0].astype(int)
    mesh = Mesh.from_arrays(out["vertices"], out["triangles"], tags)
    names = dict(NAMES) if tags is not None else {k: v for k, v in NAMES.items() if k > 10}
    return _tag_sides(mesh, names)


def area_for(h: float) -> float:
    # equilateral triangle with edge h, shrunk a little since Triangle's quality
    # meshes end up with edges somewhat longer than the area-equivalent edge
    return 0.35 * h * h


def _tag_sides(mesh: Mesh, names: dict) -> Mesh:
    bt = np.zeros(len(mesh.boundary_edges), dtype=np.int64)
    mids = mesh.nodes[mesh.boundary_edges].mean(axis=1)
    bt[np.isclose(mids[:, 1], 0.0)] = 11
    bt[np.isclose(mids[:, 0], 1.0)] = 12
    bt[np.isclose(mids[:, 1], 1.0)] = 13
    bt[np.isclose(mids[:, 0], 0.0)] = 14
    return Mesh(mesh.nodes, mesh.triangles, mesh.boundary_edges, bt, mesh.triangle_tags, names)


def quasi_uniform_square(s: float, iters: int = 400) -> Mesh:
    """Force-equilibrium smoothing of a hex lattice (Persson-Strang style).

    Boundary nodes sit at spacing ``s`` and stay fixed; interior bars relax
    towards a common length.  The result has near-uniform edges like a
    frontal Gmsh mesh, with the corner hypotenuse ``s * sqrt(2)`` as the
    longest edge on fine levels.
    """
    nb = max(2, round(1.0 / s))
    t = np.linspace(0.0, 1.0, nb + 1)
    z = np.zeros_like(t)
    bnd = np.concatenate([np.c_[t, z], np.c_[t, z + 1], np.c_[z, t], np.c_[z + 1, t]])
    bnd = np.unique(np.round(bnd, 14), axis=0)
    dy = s * math.sqrt(3) / 2
    pts = []
    for j, y in enumerate(np.arange(dy / 2, 1, dy)):
        off = (j % 2) * s / 2
        pts.extend((x, y) for x in np.arange(off + s / 4, 1, s))
    pts = np.array(pts)
    d = np.minimum.reduce([pts[:, 0], 1 - pts[:, 0], pts[:, 1], 1 - pts[:, 1]])
    P = np.vstack([bnd, pts[d > 0.5 * s]])
    nf = len(bnd)
    for it in range(iters):
        if it % 5 == 0:
            tri = Delaunay(P).simplices
            e = np.unique(np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1), axis=0)
        v = P[e[:, 0]] - P[e[:, 1]]
        L = np.hypot(v[:, 0], v[:, 1])
        L0 = 1.2 * math.sqrt((L**2).sum() / len(L))
        F = np.maximum(L0 - L, 0.0)
        fv = (F / L)[:, None] * v
        tot = np.zeros_like(P)
        np.add.at(tot, e[:, 0], fv)
        np.add.at(tot, e[:, 1], -fv)
        tot[:nf] = 0.0
        P = P + 0.2 * tot
        P[nf:] = np.clip(P[nf:], 0.2 * s, 1 - 0.2 * s)
        if np.abs(0.2 * tot).max() < 1e-4 * s:
            break
    tri = Delaunay(P).simplices
    mesh = Mesh.from_arrays(P, tri)
    keep = mesh.areas > 1e-10 * s * s
    return _tag_sides(Mesh.from_arrays(P, tri[keep]), {k: v for k, v in NAMES.items() if k > 10})


def square_mesh(h: float) -> Mesh:
    """Quasi-uniform unit-square mesh whose longest edge is close to ``h``."""
    s = h / math.sqrt(2.0)
    best = None
    for _ in range(30):
        m = quasi_uniform_square(s)
        if best is None or abs(m.h - h) < abs(best.h - h):
            best = m
        if abs(m.h - h) <= 0.01 * h:
            break
        s *= (h / m.h) ** 0.7
    return best


def morph1(n: int, centreline: bool = False) -> Mesh:
    g = Pslg()
    unit_square(g, n, xbreaks=(0.375, 0.625), ybreaks=(0.5,) if centreline else ())
    g.line((0.375, 0.0), (0.375, 1.0), n)
    g.line((0.625, 0.0), (0.625, 1.0), n)
    if centreline:
        # nodes along y = 1/2 so profiles can be read off without interpolation
        xs = _side_points(n, (0.375, 0.625))
        g.polyline([(x, 0.5) for x in xs])
    g.regions = [(0.5, 0.5, INCLUSION), (0.1, 0.5, MATRIX), (0.9, 0.5, MATRIX)]
    return build(g, area_for(1.0 / n))


def morph2(n: int) -> Mesh:
    g = Pslg()
    unit_square(g, n)
    r = math.sqrt(1.0 / (4.0 * math.pi))
    k = 8 * max(4, math.ceil(2 * math.pi * r * n / 8))
    th = 2 * math.pi * np.arange(k) / k
    # polygon with the circle's area, so the fraction stays exactly 0.25
    rp = r * math.sqrt(math.pi / (0.5 * k * math.sin(2 * math.pi / k)))
    g.polyline([(0.5 + rp * math.cos(t), 0.5 + rp * math.sin(t)) for t in th], closed=True)
    g.regions = [(0.5, 0.5, INCLUSION), (0.05, 0.05, MATRIX)]
    return build(g, area_for(1.0 / n))


def morph3(n: int) -> Mesh:
    g = Pslg()
    unit_square(g, n, xbreaks=(0.25, 0.5, 0.75), ybreaks=(0.5, 0.75))
    q = n // 4
    # L-shaped outline: [1/2,3/4]x[0,1/2] joined to [1/4,3/4]x[1/2,3/4]
    g.line((0.5, 0.0), (0.5, 0.5), 2 * q)
    g.line((0.75, 0.0), (0.75, 0.75), 3 * q)
    g.line((0.25, 0.5), (0.5, 0.5), q)
    g.line((0.25, 0.5), (0.25, 0.75), q)
    g.line((0.25, 0.75), (0.75, 0.75), 2 * q)
    g.regions = [(0.6, 0.3, INCLUSION), (0.4, 0.6, INCLUSION), (0.1, 0.1, MATRIX)]
    return build(g, area_for(1.0 / n))


def wood_cell(n: int, lumen: float = 0.6) -> Mesh:
    """Square lumen (tag 1) centred in a square solid wall (tag 2)."""
    g = Pslg()
    a, b = 0.5 - lumen / 2, 0.5 + lumen / 2
    unit_square(g, n, xbreaks=(a, b), ybreaks=(a, b))
    m = max(2, round(lumen * n))
    g.line((a, a), (b, a), m)
    g.line((b, a), (b, b), m)
    g.line((b, b), (a, b), m)
    g.line((a, b), (a, a), m)
    g.regions = [(0.5, 0.5, INCLUSION), (0.02, 0.02, MATRIX)]
    return build(g, area_for(1.0 / n))


def main(outdir: str = "meshes") -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    # longest-edge targets of the convergence sequence
    targets = {"square_h0": 0.2617, "square_h1": 0.15176, "square_h2": 0.084435, "square_h3": 0.041624, "square_h4": 0.021733}
    for name, h in targets.items():
        m = square_mesh(h)
        write_msh(m, out / f"{name}.msh")
        print(name, m.n_nodes, "nodes, h =", round(m.h, 4))
    for label, fn, sizes in (
        ("morph1", morph1, {"coarse": 8, "default": 16, "fine": 32}),
        ("morph2", morph2, {"coarse": 8, "default": 16, "fine": 32}),
        ("morph3", morph3, {"coarse": 8, "default": 16, "fine": 32}),
        ("wood", wood_cell, {"default": 20}),
    ):
        for tag, n in sizes.items():
            m = fn(n)
            write_msh(m, out / f"{label}_{tag}.msh")
            print(f"{label}_{tag}", m.n_nodes, "nodes, h =", round(m.h, 4))
    # layered cross-validation mesh: h close to 0.185 with a nodal centreline
    m = morph1(6, centreline=True)
    write_msh(m, out / "morph1_centreline.msh")
    print("morph1_centreline", m.n_nodes, "nodes, h =", round(m.h, 4))


if __name__ == "__main__":
    main(*sys.argv[1:])
