import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from nvtheta import (
    Constants,
    FieldVector,
    PhysicsDomainError,
    build_hamiltonian_planar,
    build_hamiltonian_vector,
    eigendecompose,
    planar_eigensystem,
    spin_operators,
    transition_frequencies,
)
from nvtheta.spin_model import nv_frame

fields = st.floats(0.0, 150.0)
angles = st.floats(-np.pi, np.pi)
strains = st.floats(0.0, 0.05)


# -- constants and operators -------------------------------------------------


def test_default_b_zfs_near_102_5(constants):
    assert abs(constants.b_zfs - 102.5) / 102.5 < 0.01
    assert constants.b_zfs == constants.delta / constants.gyromagnetic


def test_gyromagnetic_about_28_ghz_per_tesla(constants):
    assert constants.gyromagnetic * 1e3 == pytest.approx(28.0, rel=0.002)


def test_from_b_zfs_roundtrip():
    assert Constants.from_b_zfs(102.5).b_zfs == pytest.approx(102.5, rel=1e-14)


@pytest.mark.parametrize("kw", [{"delta": 0}, {"delta": -1}, {"g_factor": 0}, {"delta": np.nan}])
def test_constants_reject_bad_values(kw):
    with pytest.raises(PhysicsDomainError):
        Constants(**kw)


def test_spin_operators_match_ladder_construction():
    sx, sy, sz = spin_operators()
    ox, oy, oz = oracles.ladder_spin1()
    np.testing.assert_allclose(sx, ox, atol=1e-15)
    np.testing.assert_allclose(sy, oy, atol=1e-15)
    np.testing.assert_allclose(sz, oz, atol=1e-15)


def test_spin_algebra():
    sx, sy, sz = spin_operators()
    np.testing.assert_array_equal(sz, np.diag([1, 0, -1]))
    for a, b, c in ((sx, sy, sz), (sy, sz, sx), (sz, sx, sy)):
        np.testing.assert_allclose(a @ b - b @ a, 1j * c, atol=1e-15)
    np.testing.assert_allclose(sx @ sx + sy @ sy + sz @ sz, 2 * np.eye(3), atol=1e-15)
    for m in (sx, sy, sz):
        np.testing.assert_array_equal(m, m.conj().T)


def test_field_vector_magnitude():
    assert FieldVector(3.0, 4.0, 12.0).magnitude == 13.0


# -- Hamiltonian construction -------------------------------------------------


def test_zero_field_matrix(constants):
    h = build_hamiltonian_planar(constants, 0.0, 0.0, 1.234)
    np.testing.assert_allclose(h.matrix, constants.delta * np.diag([1, 0, 1]), atol=1e-15)


def test_aligned_20mT_diagonal(rounded_constants):
    h = build_hamiltonian_planar(rounded_constants, 0.0, 20.0, 0.0)
    d = np.real(np.diag(h.matrix))
    gb = 2.87 / 102.5 * 20
    np.testing.assert_allclose(d, [2.87 + gb, 0.0, 2.87 - gb], atol=1e-12)
    np.testing.assert_allclose(np.round(d, 2), [3.43, 0.0, 2.31])
    assert np.count_nonzero(h.matrix - np.diag(np.diag(h.matrix))) == 0


def test_perpendicular_off_diagonal(rounded_constants):
    h = build_hamiltonian_planar(rounded_constants, 0.0, 20.0, np.pi / 2)
    expected = 2.87 / 102.5 * 20 / np.sqrt(2)
    for i, j in ((0, 1), (1, 0), (1, 2), (2, 1)):
        assert abs(h.matrix[i, j]) == pytest.approx(expected, rel=1e-12)
    assert round(expected, 3) == 0.396


@given(fields, angles, strains)
def test_planar_matches_oracle_matrix(b, theta, e):
    c = Constants()
    h = build_hamiltonian_planar(c, e, b, theta)
    ref = oracles.planar_hamiltonian(c.delta, c.gyromagnetic, b, theta, e)
    np.testing.assert_allclose(h.matrix, ref, atol=1e-12)


@given(fields, angles, strains)
def test_hermitian_and_trace(b, theta, e):
    c = Constants()
    m = build_hamiltonian_planar(c, e, b, theta).matrix
    assert np.abs(m - m.conj().T).max() <= 1e-12 * max(1.0, np.abs(m).max())
    assert np.trace(m).real == pytest.approx(2 * c.delta, abs=1e-12)


@pytest.mark.parametrize(
    "args",
    [(-1.0, 20.0, 0.0), (0.0, -1.0, 0.0), (0.0, np.nan, 0.0), (0.0, 20.0, np.inf)],
)
def test_planar_rejects_bad_input(constants, args):
    with pytest.raises(PhysicsDomainError):
        build_hamiltonian_planar(constants, *args)


@pytest.mark.parametrize("axis", [(0, 0, 0), (0, 0, 2), (1, 1, 0)])
def test_vector_rejects_bad_axis(constants, axis):
    with pytest.raises(PhysicsDomainError):
        build_hamiltonian_vector(constants, 0.0, FieldVector(0, 0, 20), axis)


def test_nv_frame_is_right_handed():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.normal(size=3)
        f = nv_frame(a / np.linalg.norm(a))
        np.testing.assert_allclose(f @ f.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(f) == pytest.approx(1.0, abs=1e-12)
    for z in ((0, 0, 1), (0, 0, -1), (0.1, 0, np.sqrt(0.99))):
        f = nv_frame(np.array(z, dtype=float))
        assert np.linalg.det(f) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "field, theta",
    [((0, 0, 20), 0.0), ((20, 0, 0), np.pi / 2), ((0, 20, 0), np.pi / 2), ((0, 0, -20), np.pi)],
)
def test_vector_matches_planar(constants, field, theta):
    hv = build_hamiltonian_vector(constants, 0.0, FieldVector(*field), (0.0, 0.0, 1.0))
    hp = build_hamiltonian_planar(constants, 0.0, 20.0, theta)
    np.testing.assert_allclose(
        np.linalg.eigvalsh(hv.matrix), np.linalg.eigvalsh(hp.matrix), rtol=1e-10, atol=1e-12
    )
    assert hv.theta == pytest.approx(theta)


def test_vector_along_111(rounded_constants):
    n = np.ones(3) / np.sqrt(3)
    h = build_hamiltonian_vector(rounded_constants, 0.0, FieldVector.from_array(20 * n), n)
    vals = np.linalg.eigvalsh(h.matrix)
    np.testing.assert_allclose(vals, [0.0, 2.87 * (1 - 20 / 102.5), 2.87 * (1 + 20 / 102.5)], atol=1e-12)


@given(st.integers(0, 2**32 - 1), fields, st.floats(0, np.pi))
def test_rotational_invariance(seed, b, theta):
    c = Constants()
    rng = np.random.default_rng(seed)
    r = oracles.random_rotation(rng)
    axis = r @ np.array([0.0, 0.0, 1.0])
    # field at angle theta from the axis, random azimuth about it
    psi = rng.uniform(0, 2 * np.pi)
    local = b * np.array([np.sin(theta) * np.cos(psi), np.sin(theta) * np.sin(psi), np.cos(theta)])
    hv = build_hamiltonian_vector(c, 0.0, FieldVector.from_array(r @ local), axis)
    hp = build_hamiltonian_planar(c, 0.0, b, theta)
    np.testing.assert_allclose(
        np.linalg.eigvalsh(hv.matrix), np.linalg.eigvalsh(hp.matrix), atol=1e-9 * max(1.0, b)
    )


@given(fields, st.floats(0, np.pi), strains)
def test_theta_parity(b, theta, e):
    c = Constants()
    a = np.linalg.eigvalsh(build_hamiltonian_planar(c, e, b, theta).matrix)
    z = np.linalg.eigvalsh(build_hamiltonian_planar(c, e, b, -theta).matrix)
    np.testing.assert_allclose(a, z, atol=1e-12)


# -- eigendecomposition -----------------------------------------------------


def test_eigen_oracle_on_random_hermitian_matrices():
    rng = np.random.default_rng(2024)
    c = Constants()
    from nvtheta.spin_model import HamiltonianMatrix

    worst = 0.0
    for _ in range(1000):
        scale = 10 ** rng.uniform(-2, 2)
        a = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))) * scale
        m = (a + a.conj().T) / 2
        es = eigendecompose(HamiltonianMatrix(m, c, 0.0, 20.0, 0.0))
        ref = oracles.charpoly_eigenvalues(m)
        norm = np.abs(ref).max()
        worst = max(worst, np.abs(es.values - ref).max() / norm)
    assert worst < 1e-9


def test_eigen_oracle_60mT_0_3rad(constants):
    es = planar_eigensystem(constants, 60.0, 0.3)
    ref = oracles.charpoly_eigenvalues(
        oracles.planar_hamiltonian(constants.delta, constants.gyromagnetic, 60.0, 0.3)
    )
    np.testing.assert_allclose(es.values, ref, rtol=1e-10, atol=1e-12)


@given(fields, angles, strains)
def test_eigensystem_invariants(b, theta, e):
    c = Constants()
    h = build_hamiltonian_planar(c, e, b, theta)
    es = eigendecompose(h)
    v = es.vectors
    np.testing.assert_allclose(v.conj().T @ v, np.eye(3), atol=1e-10)
    hn = np.linalg.norm(h.matrix, 2)
    for k in range(3):
        assert np.linalg.norm(h.matrix @ v[:, k] - es.values[k] * v[:, k]) <= 1e-9 * hn
    assert sorted(es.labels) == [-1, 0, 1]
    assert es.values.sum() == pytest.approx(2 * c.delta, abs=1e-10)


@pytest.mark.parametrize("b", [0.5, 10.0, 50.0, 90.0, 102.0])
def test_aligned_labels_match_basis_states(constants, b):
    es = planar_eigensystem(constants, b, 0.0)
    for lab, idx in ((1, 0), (0, 1), (-1, 2)):
        assert abs(es.vector(lab)[idx]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("b", [5.0, 20.0, 60.0, 95.0])
def test_near_axis_labels_have_dominant_overlap(constants, b):
    es = planar_eigensystem(constants, b, 0.05)
    for lab, idx in ((1, 0), (0, 1), (-1, 2)):
        assert abs(es.vector(lab)[idx]) ** 2 > 0.5


def test_zero_field_degenerate(constants):
    es = planar_eigensystem(constants, 0.0, 0.0)
    np.testing.assert_allclose(sorted(es.values), [0.0, 2.87, 2.87], atol=1e-12)
    assert es.degenerate
    assert set(es.labels) == {1, 0, -1}
    tr = transition_frequencies(es)
    assert tr.f_minus == pytest.approx(2.87) and tr.f_plus == pytest.approx(2.87)
    assert tr.degenerate


def test_degeneracy_tolerance_configurable(constants):
    es = planar_eigensystem(constants, 1e-4, 0.0)  # splitting ~5.6 kHz
    assert not es.degenerate
    assert eigendecompose(es.hamiltonian, degeneracy_tol=1e-3).degenerate


def test_nonhermitian_rejected(constants):
    from nvtheta.spin_model import HamiltonianMatrix

    m = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex)
    with pytest.raises(PhysicsDomainError):
        eigendecompose(HamiltonianMatrix(m, constants, 0.0, 0.0, 0.0))


# published reference values for the aligned transitions
@pytest.mark.parametrize("b, expected, tol", [(0.0, 2.87, 1e-12), (20.0, 2.310, 1e-3), (80.0, 0.630, 1e-3)])
def test_transition_spot_checks(constants, b, expected, tol):
    tr = transition_frequencies(planar_eigensystem(constants, b, 0.0))
    assert tr.f_minus == pytest.approx(expected, abs=tol)


def test_transition_frequencies_labelled():
    c = Constants()
    es = planar_eigensystem(c, 20.0, 0.2)
    tr = transition_frequencies(es)
    assert tr.f_minus == es.value(-1) - es.value(0)
    assert tr.f_plus == es.value(1) - es.value(0)
    assert 0 < tr.f_minus < tr.f_plus


def test_labels_above_b_zfs_follow_adiabatic_order(constants):
    # above the crossing |-1> lies below |0>; the monitored gap turns negative
    es = planar_eigensystem(constants, 120.0, 0.0)
    assert es.value(-1) < es.value(0)
    assert abs(es.vector(-1)[2]) == pytest.approx(1.0)
