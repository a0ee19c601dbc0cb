import numpy as np
import pytest

from frachom.assembly import MediumSpec
from frachom.errors import ConfigError, DomainError, IncompleteInputError
from frachom.homogenize import (
    CellProblemSpec,
    WoodScenarioConfig,
    bounds,
    cell_initial,
    cell_system,
    effective_tensor,
    limit_tensor,
    output_schedule,
    run_cell_problem,
    tensor_column,
    wood_cell_run,
)
from frachom.io import read_csv
from frachom.meshkit import Mesh, MorphologySpec, tag_regions
from frachom.stepper import TimeGrid

WOOD = {"rho_s": 1.0, "D_b": 1.0, "D_v": 4.0, "rho_g": 1.0, "omega_v": 0.2, "domega_dX": 1.0, "drho_v_dX": 0.05}


def test_bounds_values_and_domain():
    k1, k2 = bounds(0.25, 10.0, 1.0)
    assert k1 == pytest.approx(1 / (0.025 + 0.75))
    assert k2 == pytest.approx(3.25)
    assert bounds(0.3, 2.0, 2.0) == pytest.approx((2.0, 2.0))
    with pytest.raises(DomainError):
        bounds(1.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        bounds(0.5, 0.0, 1.0)


@pytest.mark.parametrize("name, morph", [("morph2_default.msh", MorphologySpec.circle()), ("morph3_coarse.msh", MorphologySpec.lshape())])
def test_uniform_cell_identity(load_mesh, name, morph):
    mesh, cv = load_mesh(name)
    tags = tag_regions(mesh, morph)
    med = MediumSpec.isotropic(3.0, 3.0, 0.6, 0.6)
    np.testing.assert_allclose(limit_tensor(cv, tags, med), 3.0 * np.eye(2), atol=1e-8)
    # the initial cell field is already the steady state
    fields = {d: cell_system(cv, tags, med, d) for d in ("x", "y")}
    col = {d: s.expand(cell_initial(s, d)) for d, s in fields.items()}
    np.testing.assert_allclose(effective_tensor(cv, tags, med, col), 3.0 * np.eye(2), atol=1e-8)


def test_uniform_cell_run_stays_put(load_mesh):
    mesh, _ = load_mesh("morph2_coarse.msh")
    spec = CellProblemSpec(mesh, MorphologySpec.circle(), MediumSpec.isotropic(2.0, 2.0, 0.5, 0.5), tau=0.1, t_final=1.0)
    series = run_cell_problem(spec)
    np.testing.assert_allclose(series.final, 2.0 * np.eye(2), atol=1e-8)


def test_strip_cell_limit_is_series_and_parallel(load_mesh):
    mesh, cv = load_mesh("morph1_default.msh")
    tags = tag_regions(mesh, MorphologySpec.rect())
    d = limit_tensor(cv, tags, MediumSpec.isotropic(10.0, 1.0))
    k1, k2 = bounds(tags.eps1, 10.0, 1.0)
    np.testing.assert_allclose(np.diag(d), [k1, k2], rtol=1e-10)
    assert abs(d[0, 1]) < 1e-10 and abs(d[1, 0]) < 1e-10


def test_fractional_limit_across_strip_takes_fractional_phase_value(load_mesh):
    # across the strip the long-time tensor carries the diffusivity of the fractional phase
    mesh, cv = load_mesh("morph1_default.msh")
    tags = tag_regions(mesh, MorphologySpec.rect())
    assert limit_tensor(cv, tags, MediumSpec.isotropic(10.0, 1.0, 0.1, 1.0))[0, 0] == pytest.approx(10.0, rel=1e-8)
    assert limit_tensor(cv, tags, MediumSpec.isotropic(10.0, 1.0, 1.0, 0.1))[0, 0] == pytest.approx(1.0, rel=1e-8)


def test_classical_run_matches_limit(load_mesh):
    mesh, cv = load_mesh("morph2_coarse.msh")
    med = MediumSpec.isotropic(10.0, 1.0)
    spec = CellProblemSpec(mesh, MorphologySpec.circle(), med, tau=1e-3, t_final=3.0)
    series = run_cell_problem(spec, cv)
    assert series.steady
    ref = limit_tensor(cv, tag_regions(mesh, MorphologySpec.circle()), med)
    np.testing.assert_allclose(series.final, ref, rtol=1e-5, atol=1e-6)
    assert series.symmetry_gap() < 1
    k1, k2 = series.bounds
    assert np.all((np.diag(series.final) > k1) & (np.diag(series.final) < k2))
    assert np.all(np.diff(series.times) > 0)


def test_series_outputs(tmp_path, load_mesh):
    mesh, _ = load_mesh("morph1_coarse.msh")
    spec = CellProblemSpec(mesh, MorphologySpec.rect(), MediumSpec.isotropic(10.0, 1.0, 0.5, 1.0), tau=0.5, t_final=20.0)
    series = run_cell_problem(spec)
    series.write_csv(tmp_path / "t.csv")
    meta, header, rows = read_csv(tmp_path / "t.csv")
    assert meta["schema"] == "frachom-tensor/1"
    assert meta["config"]["slip"] == "discrete"
    assert header == ["time", "D_bx", "D_bxy", "D_byx", "D_by", "K1", "K2"]
    assert float(rows[-1][0]) == pytest.approx(20.0)
    s = series.summary()
    assert s["D_bx"] == pytest.approx(series.final[0, 0])
    half = series.scaled(2.0)
    np.testing.assert_allclose(half.final, series.final / 2)


def test_single_direction_leaves_other_column_empty(load_mesh):
    mesh, _ = load_mesh("morph1_coarse.msh")
    spec = CellProblemSpec(mesh, MorphologySpec.rect(), MediumSpec.isotropic(10.0, 1.0), ("y",), tau=1e-2, t_final=0.1)
    series = run_cell_problem(spec)
    assert np.all(series.final[:, 0] == 0)
    assert "x" not in series.fields


def test_missing_field_rejected(load_mesh):
    mesh, cv = load_mesh("morph1_coarse.msh")
    tags = tag_regions(mesh, MorphologySpec.rect())
    with pytest.raises(IncompleteInputError):
        effective_tensor(cv, tags, MediumSpec.isotropic(1.0, 1.0), {"x": np.zeros(mesh.n_nodes)})


def test_tensor_column_of_linear_field(load_mesh):
    mesh, cv = load_mesh("morph2_coarse.msh")
    tags = tag_regions(mesh, MorphologySpec.circle())
    med = MediumSpec.isotropic(4.0, 4.0)
    col = tensor_column(cv, tags, med, 2 * mesh.nodes[:, 0] - mesh.nodes[:, 1])
    np.testing.assert_allclose(col, [8.0, -4.0], atol=1e-12)


def test_spec_validation(load_mesh):
    mesh, _ = load_mesh("morph1_coarse.msh")
    base = dict(mesh=mesh, morphology=MorphologySpec.rect(), medium=MediumSpec.isotropic(1.0, 2.0))
    with pytest.raises(ConfigError):
        CellProblemSpec(**{**base, "medium": MediumSpec.isotropic(1.0, 2.0, 0.5, 1.0, "classical")}).validate()
    with pytest.raises(ConfigError):
        CellProblemSpec(**base, directions=("z",)).validate()
    with pytest.raises(ConfigError):
        CellProblemSpec(**base, tau=1.0, t_final=0.5).validate()
    shifted = Mesh.from_arrays(mesh.nodes * 2.0, mesh.triangles)
    with pytest.raises(ConfigError):
        CellProblemSpec(**{**base, "mesh": shifted}).validate()


def test_output_schedule():
    s = output_schedule(TimeGrid(1.0, 10000), per_decade=5)
    assert s[0] == 1 and s[-1] == 10000
    assert np.all(np.diff(s) > 0)
    assert len(s) <= 25
    assert list(output_schedule(TimeGrid(1.0, 1))) == [1]


def test_wood_missing_constants_listed(load_mesh):
    mesh, _ = load_mesh("wood_default.msh")
    cfg = WoodScenarioConfig(mesh, {k: v for k, v in WOOD.items() if k not in ("D_v", "rho_g")})
    assert cfg.missing() == ["D_v", "rho_g"]
    with pytest.raises(ConfigError, match="D_v, rho_g"):
        wood_cell_run(cfg)
    with pytest.raises(ConfigError):
        WoodScenarioConfig(mesh, {**WOOD, "omega_v": 1.0}).coefficients()


def test_wood_without_lumen_is_solid_identity(load_mesh):
    mesh, _ = load_mesh("wood_default.msh")
    cfg = WoodScenarioConfig(mesh, WOOD, lumen_tags=(99,), tau=0.1, t_final=0.5)
    series = wood_cell_run(cfg)
    np.testing.assert_allclose(series.final, np.eye(2) * 1.0 / 4.0, atol=1e-8)


def test_wood_matched_coefficients_give_ratio_identity(load_mesh):
    mesh, _ = load_mesh("wood_default.msh")
    # lumen conductance rho_g D_v domega/(1 - omega) equals rho_s D_b = 2
    consts = {**WOOD, "rho_s": 2.0, "rho_g": 0.4, "domega_dX": 1.0}
    cfg = WoodScenarioConfig(mesh, consts, tau=0.1, t_final=0.5)
    coef = cfg.coefficients()
    assert coef["k_lumen"] == pytest.approx(coef["k_solid"])
    np.testing.assert_allclose(wood_cell_run(cfg).final, np.eye(2) * 2.0 / 4.0, atol=1e-8)
