import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from nvtheta import (
    Constants,
    Dip,
    FitError,
    LineShape,
    add_noise,
    detect_dips,
    fit_dips,
    fit_linear,
    fit_lorentzian,
    fit_quadratic,
    sensitivity_table,
    synthesize,
)
from nvtheta.fitting import DipGuess, lorentzian_jacobian, lorentzian_model

LS = LineShape()


def one_dip(center=2.5, depth=0.12, n=2001, lo=2.4, hi=2.6):
    return synthesize([Dip(center, depth, "x")], LS, lo, hi, n)


def test_model_matches_oracle():
    f = np.linspace(2.4, 2.6, 101)
    np.testing.assert_allclose(
        lorentzian_model(f, [2.5, 0.01, 0.1, 1.2]), oracles.lorentzian(f, 2.5, 0.01, 0.1, 1.2), rtol=1e-14
    )


@given(
    st.floats(-0.05, 0.05), st.floats(0.002, 0.05), st.floats(0.01, 0.5),
    st.floats(0.5, 2.0), st.floats(-0.1, 0.1), st.floats(0.002, 0.05), st.floats(0.01, 0.5),
)
def test_jacobian_matches_finite_differences(c, w, d, base, c2, w2, d2):
    f = np.linspace(-0.2, 0.2, 100)
    p = np.array([c, w, d, c2, w2, d2, base])
    num = oracles.finite_difference_jacobian(lambda q: lorentzian_model(f, q), p, rel=1e-6)
    ana = lorentzian_jacobian(f, p)
    scale = np.abs(ana).max(axis=0) + 1e-12
    assert np.max(np.abs(num - ana) / scale) < 1e-6


def test_detect_single():
    g = detect_dips(one_dip())
    assert len(g) == 1
    assert g[0].center == pytest.approx(2.5, abs=1e-4)
    assert g[0].depth == pytest.approx(0.12, rel=0.05)
    assert g[0].width == pytest.approx(0.010, rel=0.1)


def test_detect_two_sorted():
    s = synthesize([Dip(2.55, 0.1, "b"), Dip(2.45, 0.1, "a")], LS, 2.4, 2.6, 2001)
    g = detect_dips(s)
    assert [round(x.center, 3) for x in g] == [2.45, 2.55]


def test_detect_threshold():
    s = one_dip(depth=0.02)
    assert detect_dips(s, 0.03) == []
    assert len(detect_dips(s, 0.01)) == 1


def test_detect_flat():
    assert detect_dips(synthesize([], LS, 2.4, 2.6, 101)) == []
    with pytest.raises(ValueError):
        detect_dips(one_dip(), 0.0)


def test_noiseless_fit_exact():
    s = one_dip(center=2.5003, depth=0.12)
    r = fit_lorentzian(s, DipGuess(2.501, 0.12, 0.012))
    assert r.converged, r.message
    assert r.center == pytest.approx(2.5003, abs=1e-8)
    assert r.width == pytest.approx(0.010, rel=1e-8)
    assert r.depth == pytest.approx(0.12, rel=1e-8)
    assert r.baseline == pytest.approx(1.0, abs=1e-10)
    assert r.residual_rms < 1e-10


def _center_errors(n, seeds, sigma=0.005):
    clean = one_dip(n=n)
    errs = []
    for seed in seeds:
        s = add_noise(clean, sigma, seed)
        g = detect_dips(s)
        r = fit_dips(s, g)
        assert len(r) == 1 and r[0].converged
        errs.append(r[0].center - 2.5)
    return np.array(errs)


def test_noisy_center_precision():
    errs = _center_errors(2000, range(100))
    assert np.percentile(np.abs(errs), 95) < 0.5e-3


def test_precision_scales_with_samples():
    e1 = _center_errors(1000, range(200, 400)).std()
    e2 = _center_errors(2000, range(200, 400)).std()
    assert e2 / e1 == pytest.approx(1 / np.sqrt(2), rel=0.2)


def test_far_guess_flagged():
    s = one_dip(n=8001, lo=2.2, hi=3.2)
    r = fit_lorentzian(s, DipGuess(2.5 + 50 * 0.01, 0.12, 0.01))
    assert not r.converged
    assert r.message


def test_guess_outside_spectrum():
    with pytest.raises(ValueError):
        fit_lorentzian(one_dip(), DipGuess(3.0, 0.1, 0.01))


def test_window_too_small():
    s = one_dip(n=21)
    with pytest.raises(FitError):
        fit_lorentzian(s, DipGuess(2.5, 0.1, 0.01), window=0.2)


def test_fit_dips_joint_and_separated():
    dips = [Dip(2.50, 0.1, "a"), Dip(2.52, 0.08, "b"), Dip(2.70, 0.1, "c")]
    s = synthesize(dips, LS, 2.4, 2.8, 4001)
    r = fit_dips(s, detect_dips(s))
    # tails of the other group are not modelled, hence the loose tolerance
    np.testing.assert_allclose([x.center for x in r], [2.5, 2.52, 2.7], atol=1e-5)
    assert all(x.converged for x in r)
    only_first = fit_dips(s, detect_dips(s), max_groups=1)
    assert len(only_first) == 2


def test_overlapping_dips_joint_fit():
    s = synthesize([Dip(2.500, 0.1, "a"), Dip(2.512, 0.1, "b")], LS, 2.4, 2.6, 4001)
    g = [DipGuess(2.499, 0.1, 0.01), DipGuess(2.513, 0.1, 0.01)]
    r = fit_dips(s, g)
    np.testing.assert_allclose([x.center for x in r], [2.500, 2.512], atol=1e-8)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_linear_exact(a, b):
    x = np.linspace(0, 10, 11)
    r = fit_linear(x, a + b * x)
    assert r.slope == pytest.approx(b, abs=1e-9)
    assert r.y_intercept == pytest.approx(a, abs=1e-9)
    if abs(b) > 1e-3:
        assert r.x_intercept == pytest.approx(-a / b, rel=1e-7, abs=1e-9)


def test_linear_intercepts():
    # a ramp with the f_minus slope crosses zero at b_zfs
    x = np.linspace(0, 80, 9)
    r = fit_linear(x, 2.87 * (1 - x / 102.5))
    assert r.x_intercept == pytest.approx(102.5, rel=1e-12)
    assert r.y_intercept == pytest.approx(2.87, rel=1e-12)
    assert r.r_squared == pytest.approx(1.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_quadratic_exact(a, b, c):
    x = np.linspace(-0.2, 0.2, 21)
    r = fit_quadratic(x, a + b * x + c * x**2)
    assert r.c0 == pytest.approx(a, abs=1e-9)
    assert r.c1 == pytest.approx(b, abs=1e-8)
    assert r.c2 == pytest.approx(c, abs=1e-7)


def test_quadratic_symmetric_has_no_linear_term():
    x = np.linspace(-0.15, 0.15, 31)
    r = fit_quadratic(x, 2.0 + 0.46 * x**2 + 0.1 * x**4)
    assert abs(r.c1) < 1e-12
    assert r.stderr[2] > 0
    assert r(0.0) == pytest.approx(r.c0)


def test_quadratic_vertex():
    x = np.linspace(-1, 1, 11)
    assert fit_quadratic(x, (x - 0.3) ** 2).vertex == pytest.approx(0.3)


def test_degenerate_inputs():
    with pytest.raises(FitError):
        fit_linear([1.0, 1.0], [1.0, 2.0])
    with pytest.raises(FitError):
        fit_quadratic([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_linear([1.0, 2.0], [1.0])


def test_sensitivity_table():
    c = Constants.from_b_zfs(102.5)
    rows = sensitivity_table(c, [20.0, 80.0, 102.5], [0.46, 9.6, 50.0])
    assert rows[0].analytic == pytest.approx(0.4614718614718615)
    assert rows[0].naive == pytest.approx(0.28)
    assert rows[1].ratio == pytest.approx(9.6 / 1.12)
    assert rows[2].singular and np.isnan(rows[2].analytic)
    assert sensitivity_table(c, [], []) == []
    with pytest.raises(ValueError):
        sensitivity_table(c, [1.0], [])


def test_sensitivity_table_zero_field():
    r = sensitivity_table(Constants(), [0.0], [0.0])[0]
    assert np.isnan(r.ratio)
    assert not r.singular
