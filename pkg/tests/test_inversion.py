import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimerqpt.config import load_config
from dimerqpt.exciton import diagonalize, homodimer
from dimerqpt.inversion import (
    ProtocolError,
    build_systems,
    dipole_strengths,
    extract_angle,
    fit_peaks,
    invert_chi,
    kappa,
    quadratic_coefficients,
    run_protocol,
    stacked_system,
    system_rhs,
)
from dimerqpt.process import propagate_chi, porphyrin_model, unitary_chi
from dimerqpt.runner import simulate
from dimerqpt.spectroscopy import (
    CONFIGS,
    DephasingSet,
    PeakAmplitudeSet,
    Spectrum2D,
    assemble_spectrum,
    peak_amplitudes_general,
    uniform_axis,
)
from dimerqpt.units import wavenumber_to_angular

from conftest import random_chi

GAMMA = 0.0134
C = np.full((3, 2), -1j)


def amplitudes(chi, eig):
    return {
        n: peak_amplitudes_general(chi, eig, C, CONFIGS[n]) for n in ("zzzz", "zzxx")
    }


# linear systems


def test_matrix_entries_at_right_angle():
    lhs, rhs = build_systems(np.pi / 2)
    assert lhs.M[0, 0] == pytest.approx(2 / 5)
    assert np.allclose(np.abs(lhs.M), np.abs(rhs.M))
    assert lhs.norm_factor == pytest.approx(-1.0)


def test_coupling_strength_at_65():
    a, b = dipole_strengths(np.radians(65.0))
    half = np.radians(32.5)
    assert a * b == pytest.approx(4 * np.cos(half) ** 2 * np.sin(half) ** 2, rel=1e-14)
    assert a * b == pytest.approx(np.sin(np.radians(65.0)) ** 2, rel=1e-14)
    assert a * b == pytest.approx(0.8214, abs=1e-4)
    a2, b2 = dipole_strengths(np.radians(65.0), d=2.0)
    assert a2 * b2 == pytest.approx(16 * a * b)


def test_kappa_values():
    assert kappa(np.pi / 2) == pytest.approx(3.9, abs=0.2)
    assert kappa(np.radians(65.0)) == pytest.approx(9.84, abs=0.01)
    for phi in np.linspace(0.1, 1.5, 8):
        assert kappa(phi) == pytest.approx(kappa(np.pi - phi), rel=1e-9)
    phis = np.linspace(0.05, np.pi - 0.05, 201)
    k = [kappa(p) for p in phis]
    assert phis[int(np.argmin(k))] == pytest.approx(np.pi / 2, abs=0.02)


def test_degenerate_angles_rejected():
    for phi in (0.0, np.pi):
        with pytest.raises(ValueError):
            stacked_system(phi)
    with pytest.raises(ValueError):
        build_systems(1.0, C=1.0 + 0.5j)


@settings(max_examples=20, deadline=None)
@given(phi=st.floats(0.2, np.pi - 0.2), seed=st.integers(0, 10000))
def test_exact_amplitudes_invert(phi, seed):
    """Any trace-preserving Hermitian chi is recovered from its own amplitudes."""
    rng = np.random.default_rng(seed)
    eig = diagonalize(homodimer(16633.0, 175.0, phi))
    chi = random_chi(rng, 2)
    v = chi.values.copy()
    # make it trace preserving and Hermitian on the columns the data can see
    for c, d in ((1, 1), (2, 2)):
        v[:, 0, 0, c, d] = 1 - v[:, 1, 1, c, d] - v[:, 2, 2, c, d]
    v[:, 2, 1, 2, 1] = np.conj(v[:, 1, 2, 1, 2])
    v[:, 1, 2, 2, 1] = np.conj(v[:, 2, 1, 1, 2])
    for c, d in ((1, 1), (2, 2)):
        v[:, :, :, c, d] = v[:, :, :, c, d].real
    chi = chi.with_values(v)
    rec = invert_chi(amplitudes(chi, eig), phi)
    for lb in ("aaaa", "bbaa", "bbbb", "aabb", "abab", "baab", "ggaa", "ggbb"):
        assert np.allclose(rec.chi[lb], chi[lb], atol=1e-9 * max(1.0, rec.kappa))
    assert rec.agreement < 1e-9


def test_lstsq_matches_system(porphyrin_chi, porphyrin_eigen):
    phi = porphyrin_eigen.phi
    amps = amplitudes(porphyrin_chi, porphyrin_eigen)
    y = system_rhs(amps)
    sys = stacked_system(phi)
    x = np.column_stack([
        porphyrin_chi["aaaa"].real, porphyrin_chi["bbaa"].real,
        porphyrin_chi["bbbb"].real, porphyrin_chi["aabb"].real,
        porphyrin_chi["abab"].real, porphyrin_chi["baab"].real,
        porphyrin_chi["abab"].imag, porphyrin_chi["baab"].imag,
    ])
    assert np.allclose(x @ sys.M.T, y, atol=1e-13)


def test_ridge_and_threshold(porphyrin_chi, porphyrin_eigen):
    amps = amplitudes(porphyrin_chi, porphyrin_eigen)
    rec = invert_chi(amps, porphyrin_eigen.phi, ridge=1e-8, kappa_threshold=5.0)
    assert rec.low_confidence
    assert np.allclose(rec.chi_lstsq["aaaa"], porphyrin_chi["aaaa"], atol=1e-6)


# angle


def test_common_root_porphyrin(porphyrin_chi, porphyrin_eigen):
    ang = extract_angle(amplitudes(porphyrin_chi, porphyrin_eigen))
    assert np.degrees(ang.phi) == pytest.approx(65.0, abs=1e-9)
    assert ang.xi == pytest.approx(np.tan(np.radians(32.5)) ** 2)
    assert ang.xi == pytest.approx(0.4059, abs=1e-4)
    assert ang.spread < 1e-4
    assert not ang.failed_times


def test_frozen_populations_give_reference_roots(porphyrin_eigen):
    """With populations frozen (unitary chi) the two quadratics have the
    root pairs {0.4059, 1} and {-0.4059, 0.4059}."""
    chi = unitary_chi(porphyrin_eigen, [5.0, 20.0])
    ang = extract_angle(amplitudes(chi, porphyrin_eigen))
    for r1, r2 in zip(ang.roots_first, ang.roots_second):
        assert np.allclose(np.sort(r1.real), [0.40586, 1.0], atol=1e-4)
        assert np.allclose(np.sort(r2.real), [-0.40586, 0.40586], atol=1e-4)


def test_right_angle_gives_unit_root():
    eig = diagonalize(homodimer(16633.0, 175.0, np.pi / 2))
    chi = propagate_chi(porphyrin_model(), eig, [23.75, 47.5, 95.0])
    ang = extract_angle(amplitudes(chi, eig))
    assert ang.xi == pytest.approx(1.0, abs=1e-9)
    assert np.degrees(ang.phi) == pytest.approx(90.0, abs=1e-7)


def test_quadratic_coefficient_shape(porphyrin_chi, porphyrin_eigen):
    coef = quadratic_coefficients(amplitudes(porphyrin_chi, porphyrin_eigen))
    assert coef.shape == (len(porphyrin_chi), 2, 3)


def test_no_common_root_aborts():
    T = np.array([1.0])
    S = np.zeros((1, 2, 2), complex)
    S[0] = [[1.0, 0.0], [0.0, 1.0]]
    amps = {"zzzz": PeakAmplitudeSet(T, S, "zzzz"), "zzxx": PeakAmplitudeSet(T, -S, "zzxx")}
    with pytest.raises(ProtocolError) as err:
        extract_angle(amps)
    assert err.value.stage == 2


# peak fitting


def _grid():
    return uniform_axis(16633.0, 1050.0, 5.0)


def test_fit_zero_grid():
    ax = _grid()
    spec = Spectrum2D(ax, ax, np.zeros((ax.size, ax.size)), 10.0, "zzzz")
    hint = {"omega_alpha_g": 16458.0, "omega_beta_g": 16808.0, "gamma": GAMMA}
    res = fit_peaks(spec, init_hint=hint)
    assert np.all(res.S == 0) and res.residual_norm == 0.0
    assert (res.omega_alpha_g, res.omega_beta_g) == (16458.0, 16808.0)
    assert "empty" in res.flags


def test_fit_single_cross_peak(porphyrin_eigen):
    ax = _grid()
    S = np.zeros((1, 2, 2), complex)
    S[0, 0, 1] = 0.3 - 0.7j
    spec = assemble_spectrum(PeakAmplitudeSet([10.0], S), DephasingSet.uniform(GAMMA), ax, ax,
                             porphyrin_eigen)
    hint = {"omega_alpha_g": 16450.0, "omega_beta_g": 16800.0, "gamma": 0.012}
    res = fit_peaks(spec, init_hint=hint)
    assert abs(res.S[0, 1] - S[0, 0, 1]) / abs(S[0, 0, 1]) < 1e-6
    for m, n in ((0, 0), (1, 0), (1, 1)):
        assert abs(res.S[m, n]) < 1e-8


def test_fit_recovers_porphyrin(porphyrin_chi, porphyrin_eigen):
    ax = _grid()
    amps = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, C, CONFIGS["zzzz"])
    spec = assemble_spectrum(amps, DephasingSet.uniform(GAMMA), ax, ax, porphyrin_eigen, k=3)
    res = fit_peaks(spec)
    assert res.converged and not res.flags
    assert res.omega_alpha_g == pytest.approx(16458.0, abs=1e-4)
    assert res.omega_beta_g == pytest.approx(16808.0, abs=1e-4)
    assert res.gamma == pytest.approx(GAMMA, rel=1e-7)
    assert np.max(np.abs(res.S - amps.S[3])) < 1e-6 * np.max(np.abs(amps.S[3]))


def test_fit_flags_coincident_lines():
    ax = _grid()
    S = np.ones((1, 2, 2), complex)
    spec = assemble_spectrum(PeakAmplitudeSet([10.0], S), DephasingSet.uniform(GAMMA), ax, ax,
                             centers=(16630.0, 16640.0))
    with pytest.warns(UserWarning):
        res = fit_peaks(spec, init_hint={"omega_alpha_g": 16600.0, "omega_beta_g": 16660.0})
    assert "degenerate" in res.flags


# full protocol


def test_protocol_needs_both_configurations():
    with pytest.raises(ProtocolError) as err:
        run_protocol({})
    assert err.value.stage == 1
    ax = _grid()
    spec = Spectrum2D(ax, ax, np.ones((ax.size, ax.size)), 10.0, "zzzz")
    with pytest.raises(ProtocolError):
        run_protocol({"zzzz": [spec]})


def test_protocol_unitary_limit():
    cfg = load_config(text="[bath]\nmodel = unitary\n[grid]\nomega_spacing = 5\n")
    sim = simulate(cfg)
    rep = run_protocol(sim.spectra)
    chi = rep.reconstruction.chi
    w = float(wavenumber_to_angular(sim.eigen.omega_alpha_beta))
    assert np.allclose(chi["abab"], np.exp(-1j * w * chi.times), atol=1e-6)
    assert np.allclose(chi["aaaa"], 1.0, atol=1e-6)
    assert np.allclose(chi["bbbb"], 1.0, atol=1e-6)


def test_protocol_ground_elements_vanish():
    cfg = load_config(text="[grid]\nomega_spacing = 5\n")
    rep = run_protocol(simulate(cfg).spectra)
    assert np.max(np.abs(rep.reconstruction.chi["ggaa"])) < 1e-5
    assert np.max(np.abs(rep.reconstruction.chi["ggbb"])) < 1e-5
    assert rep.phi_deg == pytest.approx(65.0, abs=0.1)


def test_protocol_with_noise():
    cfg = load_config(text="[noise]\nlevel = 0.01\nseed = 11\n")
    sim = simulate(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = run_protocol(sim.spectra)
    assert rep.phi_deg == pytest.approx(65.0, abs=1.0)
    for lb in ("aaaa", "bbaa", "bbbb", "aabb"):
        ref, got = sim.chi[lb].real, rep.reconstruction.chi[lb].real
        assert np.max(np.abs(got - ref) / np.abs(ref)) < 0.05, lb
