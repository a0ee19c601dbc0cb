import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, special

from frachom.errors import DomainError, SpecError
from frachom.fracops import mittag_leffler
from frachom.layered import (
    LayeredSpec,
    cf_poles_residues,
    eigenbasis,
    evaluate,
    invert_laplace,
    mass_balance,
    solve,
    tail_check,
    write_profile_csv,
)

TIMES = np.logspace(-2, 6, 9)

LIBRARY = {
    "step": (lambda s: 1 / s, lambda t: 1.0),
    "ramp": (lambda s: s**-2, lambda t: t),
    "inverse sqrt": (lambda s: s**-0.5, lambda t: 1 / math.sqrt(math.pi * t)),
    "mittag-leffler": (lambda s: s**-0.5 / (s**0.5 + 1), lambda t: mittag_leffler(0.5, 1.0, -math.sqrt(t))),
    "scaled erfc": (lambda s: 1 / (s**0.5 * (s**0.5 + 1)), lambda t: special.erfcx(math.sqrt(t))),
}


@pytest.mark.parametrize("name", sorted(LIBRARY))
def test_cf_inversion_library(name):
    f_hat, f = LIBRARY[name]
    for t in TIMES:
        assert invert_laplace(f_hat, t) == pytest.approx(f(t), rel=1e-8)


def test_cf_poles_cached_and_in_left_half_plane():
    z, c = cf_poles_residues()
    assert len(z) == 7
    assert cf_poles_residues() is cf_poles_residues()
    assert np.all(z.imag >= 0)
    with pytest.raises(DomainError):
        invert_laplace(lambda s: 1 / s, 0.0)


def test_eigenfunctions_orthonormal():
    spec = LayeredSpec.binary(1.0, 10.0, 0.5, 0.8, n_modes=12)
    for (lam, phi), (a, b) in zip(eigenbasis(spec), zip(spec.breakpoints[:-1], spec.breakpoints[1:])):
        x, w = np.polynomial.legendre.leggauss(80)
        xx = 0.5 * (b - a) * x + 0.5 * (a + b)
        v = phi(xx)
        gram = (v * (0.5 * (b - a) * w)[:, None]).T @ v
        np.testing.assert_allclose(gram, np.eye(len(lam)), atol=1e-12)


PAIRS = [(0.2, 0.5), (0.5, 1.0), (1.0, 0.8), (1.0, 1.0)]


@pytest.mark.parametrize("g_out, g_in", PAIRS)
def test_jump_condition(g_out, g_in):
    spec = LayeredSpec.binary(1.0, 10.0, g_out, g_in, q0=0.7)
    for t in (0.01, 1.0, 100.0):
        v = solve(spec, [0.0, 1.0], t).values
        assert v[1] - v[0] == pytest.approx(0.7, abs=1e-8)


@pytest.mark.parametrize("g_out, g_in", PAIRS)
def test_interface_continuity(g_out, g_in):
    spec = LayeredSpec.binary(1.0, 10.0, g_out, g_in)
    for x in spec.breakpoints[1:3]:
        left = solve(spec, [x], 0.5, np.array([0 if x < 0.5 else 1])).values[0]
        right = solve(spec, [x], 0.5, np.array([1 if x < 0.5 else 2])).values[0]
        assert abs(left - right) < 1e-4


@pytest.mark.parametrize("g_out, g_in", PAIRS)
def test_mean_conservation(g_out, g_in):
    spec = LayeredSpec.binary(1.0, 10.0, g_out, g_in, u0=1.0)
    for t in (0.0, 0.1, 10.0, 1e4):
        assert mass_balance(spec, t) == pytest.approx(1.0, rel=1e-9)
    half = LayeredSpec.binary(1.0, 10.0, g_out, g_in, u0=0.5)
    assert mass_balance(half, 3.0) == pytest.approx(0.5, rel=1e-9)


def test_mean_of_nonuniform_initial_data():
    init = (lambda x: 1 + x, 2.0, lambda x: np.cos(x))
    spec = LayeredSpec((0.0, 0.375, 0.625, 1.0), (1.0, 10.0, 1.0), (0.6, 0.9, 0.6), 1.0, init)
    ref = integrate.quad(lambda x: 1 + x, 0, 0.375)[0] + 2.0 * 0.25 + integrate.quad(math.cos, 0.625, 1.0)[0]
    for t in (0.0, 0.3, 30.0):
        assert mass_balance(spec, t) == pytest.approx(ref, rel=1e-9)


def test_real_valued_and_tail_converged():
    spec = LayeredSpec.binary(1.0, 10.0, 0.5, 0.5)
    sol = solve(spec, np.linspace(0, 1, 9), 1.0)
    assert sol.imag_ratio < 1e-10
    assert tail_check(spec, np.linspace(0.05, 0.95, 7), 1.0) < 1e-8


def test_homogeneous_classical_relaxes_to_linear_profile():
    spec = LayeredSpec.binary(1.0, 1.0, 1.0, 1.0, q0=1.0, u0=1.0)
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(solve(spec, x, 20.0).values, x + 0.5, atol=1e-8)


def _finite_volume_reference(spec, t, n=1600, steps=4000):
    # classical three-layer ring with the jump, cell-centred FV and CN in time
    h = 1.0 / n
    xc = (np.arange(n) + 0.5) * h
    d = np.where((xc > 0.375) & (xc < 0.625), spec.diffusivity[1], spec.diffusivity[0])
    df = 2 * d * np.roll(d, -1) / (d + np.roll(d, -1))  # face i+1/2
    q0 = spec.q0
    main = -(df + np.roll(df, 1)) / h**2
    A = sp.diags([main, df[:-1] / h**2, np.roll(df, 1)[1:] / h**2], [0, 1, -1], format="lil")
    A[n - 1, 0] = df[-1] / h**2
    A[0, n - 1] = df[-1] / h**2
    A = A.tocsc()
    b = np.zeros(n)
    b[n - 1] = df[-1] * q0 / h**2
    b[0] = -df[-1] * q0 / h**2
    dt = t / steps
    eye = sp.identity(n, format="csc")
    lu = spla.splu(eye - 0.5 * dt * A)
    u = np.ones(n)
    for _ in range(steps):
        u = lu.solve(u + 0.5 * dt * (A @ u) + dt * b)
    return xc, u


def test_classical_case_against_independent_finite_volumes():
    spec = LayeredSpec.binary(10.0, 1.0, 1.0, 1.0)
    xc, u = _finite_volume_reference(spec, 0.05)
    pick = np.arange(40, 1600, 160)
    ref = solve(spec, xc[pick], 0.05).values
    np.testing.assert_allclose(ref, u[pick], atol=2e-5)


def test_evaluate_scalar_and_csv(tmp_path):
    spec = LayeredSpec.binary(1.0, 10.0, 0.5, 0.5)
    v = evaluate(spec, 0.5, 1.0)
    assert isinstance(v, float)
    write_profile_csv([solve(spec, [0.1, 0.5], 1.0)], tmp_path / "p.csv", {"t": 1})
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("# schema:") and lines[2] == "x,t,value,layer"
    assert lines[3].split(",")[3] == "1" and lines[4].split(",")[3] == "2"


@pytest.mark.parametrize(
    "spec",
    [
        LayeredSpec(breakpoints=(0.0, 0.5, 0.4, 1.0)),
        LayeredSpec(diffusivity=(1.0, 0.0, 1.0)),
        LayeredSpec(gamma=(1.0, 1.2, 1.0)),
        LayeredSpec(n_modes=0),
    ],
)
def test_invalid_specs(spec):
    with pytest.raises(SpecError):
        solve(spec, [0.5], 1.0)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        solve(LayeredSpec(), [0.5], -1.0)
    with pytest.raises(DomainError):
        mass_balance(LayeredSpec(), -1.0)
