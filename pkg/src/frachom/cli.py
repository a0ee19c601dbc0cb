"""Command-line front end.

    frachom convergence --mesh a.msh --mesh b.msh --gamma1 0.5
    frachom layered --config layered.yaml --out runs/layered
    frachom homogenize --mesh meshes/morph2_fine.msh --morphology circle --ratio 10
    frachom wood --config wood.yaml

Every subcommand reads an optional YAML config, applies flag overrides on
top, writes CSV/JSON (and optionally VTK) into ``--out`` and, with
``--check``, compares results against the config's ``expect`` block.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .assembly import MediumSpec
from .drivers import convergence_study, layered_run, steady_centreline
from .errors import ConfigError, FrachomError, MeshParseError, SolverError
from .homogenize import CellProblemSpec, WoodScenarioConfig, run_cell_problem, wood_cell_run
from .io import load_config, write_csv, write_json, write_vtk
from .meshkit import Mesh, MorphologySpec, parse_msh

log = logging.getLogger("frachom")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_ACCEPTANCE = 5

TABLE2_PAIRS = [(g1, g2) for g1 in (0.2, 0.5, 0.8) for g2 in (0.2, 0.5, 0.8, 1.0)]


class AcceptanceFailure(FrachomError):
    """A ``--check`` comparison did not hold."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, multi_mesh: bool = False) -> None:
    p.add_argument("--config", type=Path, help="YAML scenario file")
    if multi_mesh:
        p.add_argument("--mesh", type=Path, action="append", help="MSH file (repeat for a sequence)")
    else:
        p.add_argument("--mesh", type=Path, help="MSH file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--tau", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--ratio", type=float, help="D_b1 / D_b2 with D_b2 = 1")
    p.add_argument("--alpha1", type=float, help="memory order of phase 1, gamma1 = 1 - alpha1")
    p.add_argument("--morphology", choices=("rect", "circle", "lshape", "tagged"))
    p.add_argument("--interface", choices=("rl", "classical"))
    p.add_argument("--steady-tol", type=float)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--vtk", action="store_true", help="also write legacy VTK fields")
    p.add_argument("--check", action="store_true", help="exit non-zero if the expect block fails")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frachom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"frachom {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("convergence", help="manufactured-solution error table"), multi_mesh=True)
    _common(sub.add_parser("layered", help="strip cell against the three-layer oracle"))
    _common(sub.add_parser("homogenize", help="effective tensor of a binary unit cell"))
    _common(sub.add_parser("wood", help="linearised wood cell tensor"))
    return parser


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _section(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config)
    block = cfg.get(args.command, cfg)
    if not isinstance(block, dict):
        raise ConfigError(f"config section {args.command!r} must be a mapping")
    block = dict(block)
    base = args.config.parent if args.config else Path.cwd()
    block["_base"] = base
    if "alpha1" in block:
        block["gamma1"] = 1.0 - _num(block, "alpha1", lo=0.0, hi=1.0)
    if args.tau is not None:
        block["tau"] = args.tau
    if args.gamma1 is not None:
        block["gamma1"] = args.gamma1
    if args.gamma2 is not None:
        block["gamma2"] = args.gamma2
    if args.alpha1 is not None:
        block["gamma1"] = 1.0 - args.alpha1
    if args.ratio is not None:
        block["ratio"] = args.ratio
    if args.morphology is not None:
        block["morphology"] = args.morphology
    if args.interface is not None:
        block["interface"] = args.interface
    if args.steady_tol is not None:
        block["steady_tol"] = args.steady_tol
    if args.max_steps is not None:
        block["max_steps"] = args.max_steps
    if args.mesh:
        block["mesh"] = [str(m) for m in args.mesh] if isinstance(args.mesh, list) else str(args.mesh)
    return block


def _num(block: dict, key: str, default: Any = None, lo: float | None = None, hi: float | None = None) -> Any:
    v = block.get(key, default)
    if v is None:
        if default is None:
            raise ConfigError(f"missing required setting {key!r}")
        return default
    try:
        v = float(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a number, got {v!r}") from exc
    if (lo is not None and v < lo) or (hi is not None and v > hi) or not math.isfinite(v):
        raise ConfigError(f"{key}={v} outside [{lo}, {hi}]")
    return v


def _gamma(block: dict, key: str, default: float = 1.0) -> float:
    g = _num(block, key, default)
    if not 0.0 < g <= 1.0:
        raise ConfigError(f"{key}={g} must lie in (0, 1]")
    return g


def _path(block: dict, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() or p.exists() else block["_base"] / p


def _mesh(block: dict, key: str = "mesh") -> tuple[str, Mesh]:
    v = block.get(key)
    if v is None:
        raise ConfigError(f"no mesh given (use --mesh or '{key}:' in the config)")
    if isinstance(v, list):
        if len(v) != 1:
            raise ConfigError("this command takes a single mesh")
        v = v[0]
    p = _path(block, str(v))
    return str(v), parse_msh(p)


def _grid_controls(block: dict, tau_default: float, t_default: float) -> tuple[float, float]:
    tau = _num(block, "tau", tau_default, lo=1e-300)
    t_final = _num(block, "t_final", t_default, lo=0.0)
    if "max_steps" in block:
        steps = int(block["max_steps"])
        if steps < 1:
            raise ConfigError("max_steps must be at least 1")
        t_final = min(t_final, tau * steps)
    if t_final < tau:
        raise ConfigError(f"t_final={t_final} is shorter than one step tau={tau}")
    return tau, t_final


def _echo(block: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in block.items() if not k.startswith("_")}


class _Checks:
    def __init__(self):
        self.lines: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str) -> None:
        self.lines.append((name, bool(ok), detail))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.lines)

    def report(self) -> list[dict]:
        for name, ok, detail in self.lines:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return [{"name": n, "pass": ok, "detail": d} for n, ok, d in self.lines]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_convergence(block: dict, out: Path, vtk: bool = False) -> tuple[dict, _Checks]:
    gamma = _gamma(block, "gamma1", block.get("gamma", 0.5))
    m = int(block.get("m", 3 if gamma <= 0.5 else 2))
    tau, t_final = _grid_controls(block, 1e-3, 1.0)
    names = block.get("mesh") or block.get("meshes")
    if not names:
        raise ConfigError("convergence needs a mesh sequence (repeat --mesh or 'meshes:' list)")
    if isinstance(names, str):
        names = [names]
    meshes = [(str(n), parse_msh(_path(block, str(n)))) for n in names]
    variants = [("corrected", m)]
    if block.get("uncorrected", True) and m != 0:
        variants.append(("uncorrected", 0))
    rows = []
    for label, mm in variants:
        for r in convergence_study(meshes, gamma, mm, tau, t_final):
            rows.append({"variant": label, **r})
    if len({round(r["h"], 12) for r in rows if r["variant"] == "corrected"}) < len(meshes):
        log.warning("mesh sequence repeats a resolution; affected orders are undefined")
    cfg = _echo(block)
    header = ["variant", "mesh", "h", "nodes", "gamma", "m", "error_l2", "order_l2", "error_max", "order_max"]
    write_csv(out / "convergence.csv", "frachom-convergence/1", header, ([r[k] for k in header] for r in rows), cfg)
    checks = _Checks()
    exp = block.get("expect") or {}
    corr = [r for r in rows if r["variant"] == "corrected"]
    if "error" in exp:
        rel = float(exp.get("rel_tol", 0.25))
        e = corr[-1]["error_l2"]
        checks.add("corrected error", abs(e - exp["error"]) <= rel * exp["error"], f"{e:.4e} vs {exp['error']:.4e} +/-{rel:.0%}")
    if "order" in exp:
        lo, hi = exp["order"]
        o = corr[-1]["order_l2"]
        checks.add("corrected order", lo <= o <= hi, f"{o:.2f} in [{lo}, {hi}]")
    if "error_uncorrected" in exp:
        rel = float(exp.get("rel_tol", 0.25))
        unc = [r for r in rows if r["variant"] == "uncorrected"]
        e = unc[-1]["error_l2"] if unc else math.nan
        ref = exp["error_uncorrected"]
        checks.add("uncorrected error", abs(e - ref) <= rel * ref, f"{e:.4e} vs {ref:.4e} +/-{rel:.0%}")
    return {"rows": rows, "config": cfg}, checks


def _pairs(block: dict) -> list[tuple[float, float]]:
    if "gamma1" in block or "gamma2" in block:
        return [(_gamma(block, "gamma1"), _gamma(block, "gamma2"))]
    raw = block.get("pairs", TABLE2_PAIRS)
    try:
        pairs = [(float(a), float(b)) for a, b in raw]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pairs must be a list of [gamma1, gamma2], got {raw!r}") from exc
    for a, b in pairs:
        if not (0 < a <= 1 and 0 < b <= 1):
            raise ConfigError(f"pair {(a, b)} has an index outside (0, 1]")
    return pairs


def cmd_layered(block: dict, out: Path, vtk: bool = False) -> tuple[dict, _Checks]:
    name, mesh = _mesh(block)
    d1 = _num(block, "ratio", block.get("d1", 10.0), lo=1e-300)
    d2 = _num(block, "d2", 1.0, lo=1e-300)
    u0 = _num(block, "u0", 1.0)
    q0 = _num(block, "q0", 1.0)
    interface = block.get("interface", "rl")
    cfg = _echo(block)
    checks = _Checks()
    exp = block.get("expect") or {}
    if interface == "classical":
        tau, t_final = _grid_controls(block, 1e4, 1e8)
        tol = _num(block, "steady_tol", 1e-12)
        ref_x, ref_u, _ = steady_centreline(mesh, 1.0, 1.0, "rl", d1, d2, u0, q0, tau=1e-3, t_final=50.0, steady_tol=tol)
        rows, prof = [], []
        for g1, g2 in _pairs({**block, "pairs": block.get("pairs", [[0.1, 1.0], [0.5, 1.0]])}):
            x, u, reason = steady_centreline(mesh, g1, g2, "classical", d1, d2, u0, q0, tau=tau, t_final=t_final, steady_tol=tol)
            gap = float(np.abs(u - ref_u).max() / np.abs(ref_u).max())
            rows.append({"gamma1": g1, "gamma2": g2, "relative_gap_to_classical": gap, "reason": reason})
            prof += [(xi, g1, g2, ui, ri) for xi, ui, ri in zip(x, u, ref_u)]
            if "relative_gap" in exp:
                checks.add(f"classical-flux null ({g1}, {g2})", gap <= exp["relative_gap"], f"{gap:.3e} <= {exp['relative_gap']:.1e}")
        header = ["gamma1", "gamma2", "relative_gap_to_classical", "reason"]
        write_csv(out / "layered_classical.csv", "frachom-layered-null/1", header, ([r[k] for k in header] for r in rows), cfg)
        write_csv(out / "profiles.csv", "frachom-profile/1", ["x", "gamma1", "gamma2", "fvm", "classical"], prof, cfg)
        return {"rows": rows, "config": cfg}, checks
    tau, t_final = _grid_controls(block, 1e-3, 1.0)
    slip = block.get("slip", "discrete")
    m = block.get("m", 0 if slip == "discrete" else None)
    rows, prof = [], []
    for g1, g2 in _pairs(block):
        run = layered_run(mesh, g1, g2, d1, d2, u0, q0, tau, t_final, slip, m, int(block.get("n_modes", 200)))
        rows.append(run.row())
        prof += [(xi, g1, g2, f, o) for xi, f, o in zip(run.x, run.fvm, run.oracle)]
        tag = f"g1_{g1:g}_g2_{g2:g}"
        write_csv(out / f"trace_{tag}.csv", "frachom-trace/1", ["time", "mean", "change"], run.trace, {**cfg, "gamma1": g1, "gamma2": g2})
        log.info("pair (%g, %g): centreline gap %.3e, all-node gap %.3e", g1, g2, run.gap_centre, run.gap_all)
    header = ["gamma1", "gamma2", "gap_centreline", "gap_all_nodes", "mean_drift", "oracle_mean"]
    write_csv(out / "layered.csv", "frachom-layered/1", header, ([r[k] for k in header] for r in rows), cfg)
    write_csv(out / "profiles.csv", "frachom-profile/1", ["x", "gamma1", "gamma2", "fvm", "oracle"], prof, cfg)
    if "max_gap" in exp:
        worst = max(r["gap_centreline"] for r in rows)
        checks.add("centreline gap", worst <= exp["max_gap"], f"max {worst:.3e} <= {exp['max_gap']:.1e}")
    if "mass_drift" in exp:
        worst = max(r["mean_drift"] for r in rows)
        checks.add("mass balance", worst <= exp["mass_drift"], f"max drift {worst:.2e} <= {exp['mass_drift']:.0e}")
    return {"rows": rows, "config": cfg, "mesh": name}, checks


def _tensor_checks(checks: _Checks, final: np.ndarray, exp: dict) -> None:
    rel = float(exp.get("rel_tol", 1e-2))
    for key, (i, j) in (("D_bx", (0, 0)), ("D_bxy", (0, 1)), ("D_byx", (1, 0)), ("D_by", (1, 1))):
        if key in exp:
            ref = float(exp[key])
            v = float(final[i, j])
            err = abs(v - ref) / abs(ref)
            checks.add(key, err <= rel, f"{v:.5g} vs {ref:.5g}, rel {err:.2e} <= {rel:.0e}")


def cmd_homogenize(block: dict, out: Path, vtk: bool = False) -> tuple[dict, _Checks]:
    name, mesh = _mesh(block)
    kind = block.get("morphology", "rect")
    if kind == "tagged":
        morph = MorphologySpec.tagged(block.get("inclusion_tags", [1]))
    else:
        morph = MorphologySpec.named(str(kind))
    d2 = _num(block, "d2", 1.0, lo=1e-300)
    d1 = _num(block, "ratio", 10.0, lo=1e-300) * d2
    g1 = _gamma(block, "gamma1", 1.0)
    g2 = _gamma(block, "gamma2", 1.0)
    interface = block.get("interface", "rl")
    classical = g1 == 1.0 and g2 == 1.0
    tau, t_final = _grid_controls(block, 1e-3 if classical else 1.0, 5.0 if classical else 1e4)
    steady_tol = block.get("steady_tol", 1e-8 if classical else None)
    spec = CellProblemSpec(
        mesh,
        morph,
        MediumSpec.isotropic(d1, d2, g1, g2, interface),
        tuple(block.get("directions", ("x", "y"))),
        _num(block, "u0", 1.0),
        tau,
        t_final,
        None if steady_tol is None else float(steady_tol),
        int(block.get("window", 10)),
        block.get("slip"),
        block.get("m"),
        require_steady=bool(block.get("require_steady", False)),
    )
    series = run_cell_problem(spec)
    series.config.update(_echo(block))
    series.write_csv(out / "tensor.csv")
    if vtk:
        for d, u in series.fields.items():
            write_vtk(out / f"phi_{d}.vtk", mesh, {f"phi_{d}": u}, title=f"cell solution {d}")
    checks = _Checks()
    exp = block.get("expect") or {}
    _tensor_checks(checks, series.final, exp)
    if exp.get("within_bounds"):
        k1, k2 = series.bounds
        diag = np.diag(series.final)
        checks.add("bounds", bool(np.all((diag >= k1 - 1e-3) & (diag <= k2 + 1e-3))), f"diag {diag} in [{k1:.4g}, {k2:.4g}]")
    return series.summary(), checks


def cmd_wood(block: dict, out: Path, vtk: bool = False) -> tuple[dict, _Checks]:
    name, mesh = _mesh(block)
    constants = block.get("constants")
    if not isinstance(constants, dict):
        raise ConfigError("wood needs a 'constants:' mapping (rho_s, D_b, D_v, rho_g, omega_v, domega_dX, drho_v_dX)")
    gamma = _gamma(block, "gamma2", block.get("gamma_solid", 1.0))
    classical = gamma == 1.0
    tau, t_final = _grid_controls(block, 1e-3 if classical else 1.0, 5.0 if classical else 1e4)
    spec = WoodScenarioConfig(
        mesh,
        constants,
        tuple(block.get("lumen_tags", (1,))),
        gamma,
        tuple(block.get("gradients", (1.0, 1.0))),
        tau,
        t_final,
        block.get("steady_tol", 1e-8 if classical else None),
        int(block.get("window", 10)),
        _num(block, "u0", 0.0),
    )
    series = wood_cell_run(spec)
    series.config.update(_echo(block))
    series.write_csv(out / "tensor.csv")
    if vtk:
        for d, u in series.fields.items():
            write_vtk(out / f"moisture_{d}.vtk", mesh, {f"X_{d}": u}, title=f"wood cell {d}")
    checks = _Checks()
    exp = block.get("expect") or {}
    diag = np.diag(series.final)
    series_bound, parallel_bound = series.bounds
    if exp.get("within_bounds"):
        checks.add("within series/parallel", bool(np.all((diag >= series_bound) & (diag <= parallel_bound))), f"diag {diag}")
    if exp.get("below_series"):
        checks.add("below series", bool(np.all(diag < series_bound)), f"diag {diag} < {series_bound:.4g}")
    return series.summary(), checks


COMMANDS = {"convergence": cmd_convergence, "layered": cmd_layered, "homogenize": cmd_homogenize, "wood": cmd_wood}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        block = _section(args)
        args.out.mkdir(parents=True, exist_ok=True)
        summary, checks = COMMANDS[args.command](block, args.out, args.vtk)
        summary = {"command": args.command, "version": __version__, **summary}
        if checks.lines:
            summary["checks"] = checks.report()
        write_json(args.out / "summary.json", summary)
        if args.check and not checks.ok:
            raise AcceptanceFailure("one or more checks failed")
    except AcceptanceFailure as exc:
        print(f"frachom: acceptance: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (MeshParseError, OSError) as exc:
        print(f"frachom: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"frachom: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FrachomError as exc:
        print(f"frachom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
