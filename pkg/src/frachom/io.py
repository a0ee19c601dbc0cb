"""Structured outputs and scenario configs.

Every CSV starts with two comment lines, ``# schema: <name>/<version>`` and
``# config: <json>``, followed by a header row.  VTK output is legacy ASCII.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .errors import ConfigError
from .meshkit import Mesh

__all__ = ["load_config", "write_csv", "read_csv", "write_json", "write_vtk"]


def load_config(path: str | Path | None) -> dict:
    """Read a YAML (or JSON, a YAML subset) scenario file into a dict."""
    if path is None:
        return {}
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping, got {type(data).__name__}")
    return data


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: str | Path, schema: str, header: Sequence[str], rows: Iterable[Sequence[Any]], config: dict | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write(f"# config: {json.dumps(config or {}, sort_keys=True, default=str)}\n")
        wr = csv.writer(fh)
        wr.writerow(list(header))
        for row in rows:
            wr.writerow([_cell(v) for v in row])
    return p


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of :func:`write_csv`: (meta, header, rows as strings)."""
    meta: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val) if key == "config" else val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def write_json(path: str | Path, data: dict) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return p


def _json_default(o: Any):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    return str(o)


def write_vtk(path: str | Path, mesh: Mesh, point_data: dict[str, np.ndarray], title: str = "frachom") -> Path:
    """Legacy ASCII unstructured grid with scalar point fields."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    n, nt = mesh.n_nodes, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{x:.12g} {y:.12g} 0" for x, y in mesh.nodes]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    if point_data:
        out.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            v = np.asarray(values, dtype=float)
            if v.shape != (n,):
                raise ValueError(f"field {name!r} has shape {v.shape}, expected ({n},)")
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{x:.12g}" for x in v]
    p.write_text("\n".join(out) + "\n", encoding="ascii")
    return p
