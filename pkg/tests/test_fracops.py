import math

import numpy as np
import pytest
from scipy import special

from frachom.errors import DomainError
from frachom.fracops import (
    WeightTable,
    cn_wsgl_weights,
    correction_weights_first_derivative,
    correction_weights_fractional,
    default_correction_count,
    gl_weights,
    mittag_leffler,
    rl_derivative_power,
    wsgl_weights,
)


@pytest.mark.parametrize("alpha", [0.0, 0.2, 0.5, 0.9, 1.0, 1.5])
def test_gl_weights_match_binomials(alpha):
    g = gl_weights(alpha, 30)
    k = np.arange(31)
    ref = (-1.0) ** k * special.binom(alpha, k)
    np.testing.assert_allclose(g, ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.8])
def test_gl_generating_function(alpha):
    # sum_k g_k z^k = (1 - z)^alpha
    z = 0.37
    g = gl_weights(alpha, 400)
    assert np.polyval(g[::-1], z) == pytest.approx((1 - z) ** alpha, rel=1e-13)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.9])
def test_partial_sums_are_discrete_derivative_of_one(alpha):
    # sum_{k<=n} g_k = Gamma(n + 1 - alpha) / (Gamma(1 - alpha) n!), i.e. the GL derivative of 1
    n = np.arange(0, 2000)
    g = gl_weights(alpha, n[-1])
    ref = np.exp(special.gammaln(n + 1 - alpha) - special.gammaln(1 - alpha) - special.gammaln(n + 1))
    np.testing.assert_allclose(np.cumsum(g), ref, rtol=1e-10)
    assert cn_wsgl_weights(alpha, 3)[0] == pytest.approx((1 + alpha / 2) / 2)


def test_integer_order_weights_have_finite_support():
    assert np.allclose(gl_weights(1.0, 5), [1, -1, 0, 0, 0, 0])
    assert np.allclose(gl_weights(0.0, 4), [1, 0, 0, 0, 0])
    assert np.allclose(cn_wsgl_weights(0.0, 3), [0.5, 0.5, 0, 0])


def test_wsgl_second_order_on_smooth_function():
    alpha = 0.6
    t = 1.0
    errs = []
    for n in (40, 80, 160):
        tau = t / n
        w = wsgl_weights(alpha, n)
        v = (np.arange(n + 1) * tau) ** 3
        approx = tau**-alpha * (w @ v[::-1])
        errs.append(abs(approx - rl_derivative_power(alpha, 3, t)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9)


@pytest.mark.parametrize("alpha, m", [(0.5, 3), (0.2, 2), (0.5, 1)])
def test_corrections_make_operator_exact_on_powers(alpha, m):
    gamma = 1 - alpha
    sigma = gamma * np.arange(1, m + 1)
    for n in (1, 2, 7, 50):
        d = cn_wsgl_weights(alpha, n)
        e = correction_weights_fractional(alpha, sigma, n)
        for s in sigma:
            v = np.arange(max(n, m) + 1, dtype=float) ** s
            lhs = d[: n + 1] @ v[n::-1] + e @ v[1 : m + 1]
            assert lhs == pytest.approx(rl_derivative_power(alpha, s, n - 0.5), rel=1e-10)


def test_first_derivative_corrections_exact_on_powers():
    sigma = [0.5, 1.0, 1.5]
    for n in (1, 4, 30):
        p = correction_weights_first_derivative(sigma, n)
        for s in sigma:
            v = np.arange(max(n, 3) + 1, dtype=float) ** s
            lhs = v[n] - v[n - 1] + p @ v[1:4]
            assert lhs == pytest.approx(s * (n - 0.5) ** (s - 1), rel=1e-10)


def test_weight_table_rows_agree_with_direct_solves():
    tab = WeightTable.build(0.5, 40, [0.5, 1.0, 1.5])
    assert tab.m == 3
    np.testing.assert_allclose(tab.E[17], correction_weights_fractional(0.5, [0.5, 1.0, 1.5], 17), rtol=1e-12)
    np.testing.assert_allclose(tab.P[9], correction_weights_first_derivative([0.5, 1.0, 1.5], 9), rtol=1e-12)
    assert not tab.d_avg.flags.writeable
    assert np.all(tab.E[0] == 0)


def test_weight_table_csv(tmp_path):
    tab = WeightTable.build(0.3, 5, [0.7])
    tab.dump_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "k,g,omega,D,E_1,P_1"
    assert len(lines) == 7


@pytest.mark.parametrize(
    "bad",
    [
        lambda: gl_weights(-0.1, 3),
        lambda: gl_weights(2.0, 3),
        lambda: WeightTable.build(0.5, 0),
        lambda: correction_weights_fractional(0.5, [1.0, 0.5], 3),
        lambda: correction_weights_fractional(0.5, [0.5], 0),
        lambda: default_correction_count(0.0),
        lambda: mittag_leffler(0.0, 1.0, 1.0),
        lambda: mittag_leffler(0.5, 1.0, 1j),
    ],
)
def test_domain_errors(bad):
    with pytest.raises(DomainError):
        bad()


def test_default_correction_count():
    assert default_correction_count(0.5) == 3
    assert default_correction_count(0.8) == 2
    assert default_correction_count(1.0) == 1
    assert default_correction_count(0.1, cap=3) == 3


@pytest.mark.parametrize("z", [-50.0, -3.0, -0.5, 0.0, 0.7, 4.0])
def test_ml_exponential(z):
    assert mittag_leffler(1.0, 1.0, z) == pytest.approx(math.exp(z), rel=1e-14)


@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 2.5, 6.0, 20.0, 100.0])
def test_ml_half_is_scaled_erfc(x):
    # E_{1/2}(-x) = exp(x^2) erfc(x)
    assert mittag_leffler(0.5, 1.0, -x) == pytest.approx(special.erfcx(x), rel=1e-11)


@pytest.mark.parametrize("x", [0.1, 1.0, 3.0])
def test_ml_known_closed_forms(x):
    # E_{1,2}(z) = (e^z - 1)/z and E_{2}(-x^2) = cos x
    assert mittag_leffler(1.0, 2.0, -x) == pytest.approx(math.expm1(-x) / -x, rel=1e-12)
    assert mittag_leffler(2.0, 1.0, -(x**2)) == pytest.approx(math.cos(x), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_ml_asymptotic_tail(alpha):
    # E_alpha(-x) ~ sum_k (-1)^(k+1) x^-k / Gamma(1 - alpha k) for large x
    x = 1e5
    ref = sum((-1) ** (k + 1) * x**-k / special.gamma(1 - alpha * k) for k in (1, 2, 3))
    assert mittag_leffler(alpha, 1.0, -x) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("eps", [1e-4, 1e-8, 1e-12, 2.0**-53])
@pytest.mark.parametrize("beta", [1.0, 0.9, 0.5])
def test_ml_index_just_below_one(eps, beta):
    # the integrand peaks sharply near s = x here; compare with the extended-precision series
    import mpmath as mp

    alpha = 1.0 - eps
    for x in (1.5, 5.0, 50.0):
        with mp.workdps(60):
            ref = float(mp.nsum(lambda k: (-x) ** k * mp.rgamma(alpha * k + beta), [0, mp.inf]))
        assert mittag_leffler(alpha, beta, -x) == pytest.approx(ref, rel=1e-9)


def test_ml_vectorised_and_monotone():
    x = np.linspace(0, 30, 61)
    v = mittag_leffler(0.7, 1.0, -x)
    assert v.shape == x.shape
    assert v[0] == 1.0
    assert np.all(np.diff(v) < 0) and np.all(v > 0)


def test_ml_positive_overflow_is_inf():
    assert mittag_leffler(0.5, 1.0, 1e4) == math.inf
