import numpy as np
import pytest

from floqsens.opspace import (
    NumberLattice,
    PhaseGrid,
    TwoModeState,
    beam_splitter_matrix,
    build_angular_momentum,
    fock_product,
    noon_state,
    number_to_phase,
    parity_operator,
    parity_swap_expectation,
    phase_to_number,
    swap_operator,
    twin_fock_state,
)


def basis(n1, n2, n_max):
    v = np.zeros((n_max + 1) ** 2, dtype=complex)
    v[n1 * (n_max + 1) + n2] = 1
    return v


def test_jz_on_single_excitation():
    jz = build_angular_momentum("z", 3)
    assert jz.expectation(basis(1, 0, 3)).real == pytest.approx(0.5)


def test_jx_moves_photon_between_modes():
    jx = build_angular_momentum("x", 3)
    np.testing.assert_allclose(jx.apply(basis(1, 0, 3)), 0.5 * basis(0, 1, 3), atol=1e-15)


def test_jy_squared_on_balanced_fock():
    # oracle: dense Jy built independently from bosonic ladder matrices
    n_max = 4
    a = np.diag(np.sqrt(np.arange(1, n_max + 1)), 1)
    eye = np.eye(n_max + 1)
    a1, a2 = np.kron(a, eye), np.kron(eye, a)
    jy = (a1.T @ a2 - a2.T @ a1) / 2j
    v = basis(2, 2, n_max)
    dense = (v.conj() @ jy @ jy @ v).real
    ours = build_angular_momentum("y", n_max)
    w = ours.apply(v)
    assert np.vdot(w, w).real == pytest.approx(dense)
    assert dense == pytest.approx(4 * 6 / 8)


def test_su2_algebra_inside_the_truncation():
    n_max = 6
    jx, jy, jz = (build_angular_momentum(k, n_max).dense() for k in "xyz")
    comm = jx @ jy - jy @ jx
    # the commutator is exact on states away from the cutoff
    keep = [i for i in range(jx.shape[0]) if sum(divmod(i, n_max + 1)) < n_max]
    np.testing.assert_allclose(comm[np.ix_(keep, keep)], 1j * jz[np.ix_(keep, keep)], atol=1e-12)


def test_unknown_axis_rejected():
    with pytest.raises(ValueError):
        build_angular_momentum("w", 3)


def test_constant_phase_amplitude_maps_to_origin():
    m = 16
    lat = phase_to_number(np.ones((m, m)) / m)
    p = np.abs(lat.amplitudes) ** 2
    assert p[m // 2, m // 2] == pytest.approx(1.0)


def test_single_fourier_mode_sign():
    m = 16
    g = PhaseGrid(m)
    p1, _ = g.mesh()
    lat = phase_to_number(np.exp(1j * p1) / m)
    i1, i2 = np.unravel_index(np.argmax(np.abs(lat.amplitudes)), (m, m))
    assert (i1 - m // 2, i2 - m // 2) == (-1, 0)


def test_phase_number_round_trip(rng):
    m = 32
    amp = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    amp /= np.linalg.norm(amp)
    lat = phase_to_number(amp, (40, 40))
    np.testing.assert_allclose(number_to_phase(lat), amp, atol=1e-12)
    back = phase_to_number(number_to_phase(NumberLattice(lat.amplitudes, (40, 40))), (40, 40))
    np.testing.assert_allclose(back.amplitudes, lat.amplitudes, atol=1e-12)
    assert np.linalg.norm(lat.amplitudes) == pytest.approx(1.0)


def test_phase_grid_must_be_power_of_two():
    with pytest.raises(ValueError):
        PhaseGrid(48)


def test_noon_parity_at_eighth_turn():
    assert abs(parity_swap_expectation(noon_state(4), np.pi / 8)) < 1e-12


@pytest.mark.parametrize("n", [0, 3, 7])
def test_balanced_fock_parity_is_one(n):
    vals = parity_swap_expectation(fock_product(n, n), np.linspace(0, np.pi, 7))
    np.testing.assert_allclose(vals, 1.0, atol=1e-14)


def test_unbalanced_single_photon_parity_vanishes():
    assert parity_swap_expectation(fock_product(1, 0), 0.0) == 0


def test_swap_expectation_matches_dense_operator(rng):
    n_max = 5
    v = rng.normal(size=(n_max + 1) ** 2) + 1j * rng.normal(size=(n_max + 1) ** 2)
    v /= np.linalg.norm(v)
    st = TwoModeState.from_dense(v, n_max)
    jz = build_angular_momentum("z", n_max).dense()
    s = swap_operator(n_max).dense()
    theta = 0.37
    w, vec = np.linalg.eigh(jz)
    rot = (vec * np.exp(2j * theta * w)) @ vec.conj().T
    assert parity_swap_expectation(st, theta) == pytest.approx(v.conj() @ rot @ s @ v, abs=1e-12)


def test_unnormalised_state_rejected():
    with pytest.raises(ValueError):
        parity_swap_expectation(TwoModeState(np.ones((2, 2))), 0.0)


def test_mode_parity_operator_is_diagonal_sign():
    d = parity_operator(2).dense().diagonal().real
    np.testing.assert_array_equal(d, [1, -1, 1] * 3)


def test_beam_splitter_is_unitary():
    u = beam_splitter_matrix(6)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(6 + 1), atol=1e-12)


def test_twin_fock_jz_variance():
    st = twin_fock_state(4)
    mo = st.moments()
    assert mo["jz"] == pytest.approx(0.0, abs=1e-12)
    assert 4 * mo["jz2"] == pytest.approx(4**2 / 2 + 4)


def test_window_embedding_round_trip():
    st = TwoModeState(np.array([[0.6, 0.0], [0.0, 0.8]]), (3, 1))
    sym = st.symmetric_window()
    assert sym.origin[0] == sym.origin[1]
    assert sym.norm() == pytest.approx(1.0)
    v = st.to_dense(5)
    assert np.vdot(v, v).real == pytest.approx(1.0)
    with pytest.raises(ValueError):
        st.to_dense(3)
