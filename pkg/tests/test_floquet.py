import numpy as np
import pytest
from scipy.linalg import expm

from floqsens.floquet import (
    MODEL_ANCHORS,
    CommensurabilityError,
    TwoToneModel,
    circular_closed_form,
    energy_transfer_trace,
    fold,
    grid_propagators,
    model_library,
    power_operator,
    propagate,
    propagate_batch,
    quasienergies,
    qubit_power_states,
)
from floqsens.opspace import SIGMA_X, SIGMA_Y, SIGMA_Z, PhaseGrid

GALLERY = sorted(MODEL_ANCHORS)


def test_static_model_propagator():
    h0 = np.array([[0.3, 0.1], [0.1, -0.2]], dtype=complex)
    z = np.zeros((2, 2), dtype=complex)
    model = TwoToneModel(h0, z, z, z, z, 1.0, 1.0)
    np.testing.assert_allclose(propagate(model, (0.4, 1.1), model.t_com, 500), expm(-1j * h0 * model.t_com), atol=1e-12)


def test_zeeman_propagator_equals_integrated_phase():
    model = model_library("zeeman", {"omega2": 2.0, "B2": 0.7})
    phases = (0.3, 1.2)
    t = model.t_com
    # H(t) = -S_z [B0 + B1 cos(w1 t + p1) + B2 cos(w2 t + p2)], integrate the scalar exactly
    p = model.params
    integral = p["B0"] * t + p["B1"] / p["omega1"] * (np.sin(p["omega1"] * t + phases[0]) - np.sin(phases[0]))
    integral += p["B2"] / p["omega2"] * (np.sin(p["omega2"] * t + phases[1]) - np.sin(phases[1]))
    exact = expm(1j * integral * SIGMA_Z / 2)
    assert np.max(np.abs(propagate(model, phases, t, 2000) - exact)) < 1e-9


def test_circular_eigenphases_at_equal_phases():
    model = model_library("circular", {"omega0": 1.0, "omega": 0.25, "A": 0.125})
    u = propagate(model, (0.0, 0.0), model.t_com, 4000)
    eps = np.sort(fold(-np.angle(np.linalg.eigvals(u)) / model.t_com, model.omega_com))
    np.testing.assert_allclose(eps, [-0.075694, 0.075694], atol=2e-6)
    np.testing.assert_allclose(circular_closed_form(1.0, 0.25, 0.125, 0.0), [0.575694, -0.325694], atol=1e-6)


def test_incommensurate_frequencies_rejected():
    with pytest.raises(CommensurabilityError):
        model_library("zeeman", {"omega1": 1.0, "omega2": np.sqrt(2)}).commensurability


def test_zeeman_bands_are_flat(spectra):
    sp = spectra("zeeman", 16)
    drift = fold(sp.energies - sp.energies[:1, :1], sp.model.omega_com)
    assert np.abs(drift).max() < 1e-9
    assert np.abs(power_operator(sp, 1)).max() < 1e-7


def test_circular_bands_match_closed_form(spectra):
    sp = spectra("circular", 32)
    p1, p2 = sp.grid.mesh()
    exact = fold(circular_closed_form(1.0, 0.25, 0.125, p1 - p2), sp.model.omega_com)
    assert np.abs(np.sort(sp.energies, -1) - np.sort(exact, -1)).max() < 1e-6


def test_polarization_bands_are_exchange_symmetric(spectra):
    e = np.sort(spectra("polarization", 32).energies, -1)
    assert np.abs(e - e.transpose(1, 0, 2)).max() < 1e-8


def test_circular_power_eigenvalues_against_band_slope():
    # analytic slope of the closed-form band at dphi = 0.6 pi
    a, w0, w = 0.125, 1.0, 0.25
    dphi = 0.6 * np.pi
    root = np.sqrt((w0 - w) ** 2 + 16 * a**2 * np.cos(dphi / 2) ** 2)
    slope = 2 * a**2 * np.sin(dphi) / root
    model = model_library("circular")
    grid = PhaseGrid(64)
    sp = quasienergies(model, grid, 2000)
    i, j = grid.index_of(dphi), 0
    vals = np.sort(np.linalg.eigvalsh(sp.power_matrices(1)[i, j]))
    exact = np.sort([slope, -slope])
    np.testing.assert_allclose(vals, exact, atol=2e-3)
    assert abs(slope - 0.0369) < 1e-3


@pytest.mark.parametrize("name", GALLERY)
def test_energy_conservation_and_trace(name, spectra):
    sp = spectra(name, 32)
    assert not sp.ambiguous.any()
    m = sp.model
    p1, p2 = sp.power_matrices(1), sp.power_matrices(2)
    assert np.abs(m.omega1 * p1 + m.omega2 * p2).max() < 1e-7
    assert np.abs(np.trace(p1, axis1=-2, axis2=-1)).max() < 1e-8


def test_shift_construction_matches_direct_integration():
    model = model_library("specific")
    grid = PhaseGrid(8)
    p1, p2 = grid.mesh()
    direct = propagate_batch(model, p1, p2, model.t_com, 2000)
    np.testing.assert_allclose(grid_propagators(model, grid, 2000), direct, atol=1e-12)


def test_snapshots_are_intermediate_propagators():
    model = model_library("circular")
    full, snaps = propagate_batch(model, 0.2, 0.5, model.t_com, 400, snapshots=4)
    half = propagate_batch(model, 0.2, 0.5, model.t_com / 2, 400)
    np.testing.assert_allclose(snaps[2], half, atol=1e-12)
    np.testing.assert_allclose(snaps[0], np.eye(2), atol=1e-15)


def test_spectrum_csv(tmp_path, spectra):
    sp = spectra("zeeman", 16)
    path = tmp_path / "bands.csv"
    sp.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "phi1,phi2,band,eps_folded,deps_dphi1,deps_dphi2"
    assert len(lines) == 1 + 16 * 16 * 2
    body = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.abs(body[:, 4:]).max() < 1e-7


def test_zeeman_transfer_has_no_drift():
    model = model_library("zeeman")
    tr = energy_transfer_trace(model, (0.3, 0.1), np.array([1, 1]) / np.sqrt(2), 10 * model.t_com, 500)
    _, p = tr.stroboscopic(1)
    assert abs(p[-1]) < 1e-3


def test_circular_transfer_reverses_with_ancilla():
    model = model_library("circular")
    grid = PhaseGrid(64)
    sp = quasienergies(model, grid, 1000)
    i = grid.index_of(0.6 * np.pi)
    up, down = qubit_power_states(sp.power_matrices(1)[i, 0])
    horizon = 30 * model.t_com
    a = energy_transfer_trace(model, (grid.axis[i], 0.0), up, horizon, 500).stroboscopic(1)[1][-1]
    b = energy_transfer_trace(model, (grid.axis[i], 0.0), down, horizon, 500).stroboscopic(1)[1][-1]
    assert a > 0 > b
    assert a == pytest.approx(-b, rel=0.1)


def test_polarization_transfer_for_sigma_x_eigenstates():
    model = model_library("polarization")
    horizon = 30 * model.t_com
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    a = energy_transfer_trace(model, (0.0, 1.0), plus, horizon, 500).stroboscopic(2)[1][-1]
    b = energy_transfer_trace(model, (0.0, 1.0), minus, horizon, 500).stroboscopic(2)[1][-1]
    assert np.sign(a) == -np.sign(b)
    assert min(abs(a), abs(b)) > 1e-3


def test_gallery_couplings():
    c = model_library("circular", {"omega0": 1.0, "omega": 0.25, "A": 0.125})
    np.testing.assert_array_equal(c.h1_even, 0.125 * SIGMA_X)
    np.testing.assert_array_equal(c.h1_odd, 0.125 * SIGMA_Y)
    np.testing.assert_array_equal(c.h2_even, 0.125 * SIGMA_X)
    p = model_library("polarization")
    np.testing.assert_array_equal(p.h2_odd, -p.params["A"] * SIGMA_Y)
    np.testing.assert_array_equal(p.h0, 0.5 * SIGMA_X)
    z = model_library("zeeman")
    np.testing.assert_array_equal(z.h1_even, -z.params["B1"] * SIGMA_Z / 2)
    assert not z.h1_odd.any()


def test_unknown_model_suggests_name():
    with pytest.raises(KeyError, match="polarization"):
        model_library("polarisation")


def test_unknown_parameter_rejected():
    with pytest.raises(ValueError):
        model_library("circular", {"B0": 1.0})


def test_coarse_qutrit_grid_flags_ambiguous_tracking(spectra):
    assert spectra("qutrit", 16).ambiguous.any()
