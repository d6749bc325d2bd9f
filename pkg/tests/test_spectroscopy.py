import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimerqpt.exciton import diagonalize, homodimer
from dimerqpt.process import ProcessMatrix, RedfieldModel, propagate_chi, unitary_chi
from dimerqpt.spectroscopy import (
    CONFIGS,
    COHERENCE_POPULATION,
    DephasingSet,
    PeakAmplitudeSet,
    PolarizationConfig,
    PulseSequence,
    Spectrum2D,
    amplitude_weights,
    assemble_spectrum,
    coherence_propagator,
    isotropic_average,
    pathways,
    peak_amplitudes_general,
    peak_amplitudes_homodimer,
    polarization_time_domain,
    porphyrin_axis,
    uniform_axis,
)
from dimerqpt.units import fwhm_to_sigma, wavenumber_to_angular

from conftest import random_chi

ZZZZ, ZZXX = CONFIGS["zzzz"], CONFIGS["zzxx"]
GAMMA = 0.0134


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def test_isotropic_identical_dipoles():
    mu = np.array([0.3, -1.2, 0.5])
    assert isotropic_average(mu, mu, mu, mu, ZZZZ) == pytest.approx(np.linalg.norm(mu) ** 4 / 5)


def test_isotropic_perpendicular_pairs():
    a, c = np.array([2.0, 0, 0]), np.array([0, 1.5, 0])
    assert isotropic_average(a, a, c, c, ZZZZ) == pytest.approx(4.0 * 2.25 / 15)


def test_isotropic_three_parallel_one_perpendicular():
    a, c = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    for cfg in (ZZZZ, ZZXX):
        for combo in ((a, a, a, c), (a, a, c, a), (a, c, a, a), (c, a, a, a)):
            assert abs(isotropic_average(*combo, cfg)) < 1e-15


def test_isotropic_matches_random_orientations():
    rng = np.random.default_rng(0)
    mus = [rng.normal(size=3) for _ in range(4)]
    # Monte Carlo over uniformly random rotations
    q = rng.normal(size=(40000, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.stack(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    ).transpose(2, 0, 1)
    for cfg in (ZZZZ, ZZXX):
        rot = [R @ m for m in mus]
        prod = np.ones(len(R))
        for r, e in zip(rot, cfg.vectors):
            prod *= r @ e
        assert prod.mean() == pytest.approx(isotropic_average(*mus, cfg), abs=0.03)


def test_polarization_validation():
    with pytest.raises(ValueError):
        PolarizationConfig([1, 1, 0], [0, 0, 1], [0, 0, 1], [0, 0, 1])


def test_coherence_propagator_values(porphyrin_eigen):
    deph = DephasingSet.uniform(GAMMA)
    assert coherence_propagator("ag", 0.0, deph, porphyrin_eigen) == 1.0
    assert abs(coherence_propagator("ag", 50.0, deph, porphyrin_eigen)) == pytest.approx(
        np.exp(-0.67), rel=1e-12
    )
    assert abs(coherence_propagator("ag", 50.0, DephasingSet.uniform(0.0), porphyrin_eigen)) == (
        pytest.approx(1.0)
    )
    vals = coherence_propagator("ga", np.array([-5.0, -0.1, 3.0]), deph, porphyrin_eigen)
    assert vals[0] == 0 and vals[1] == 0 and vals[2] != 0
    with pytest.raises(ValueError):
        coherence_propagator("ab", 1.0, deph, porphyrin_eigen)


def test_dephasing_validation():
    with pytest.raises(ValueError):
        DephasingSet({"ag": 0.1})
    with pytest.raises(ValueError):
        DephasingSet.uniform(-1.0)


def test_vanishing_theorem_weights():
    rng = np.random.default_rng(3)
    for phi in (0.2, 1.0, np.pi / 2, 2.5):
        eig = diagonalize(homodimer(16633.0, 175.0, phi))
        for cfg in (ZZZZ, ZZXX):
            C = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
            table = amplitude_weights(pathways(eig, cfg, C))
            for row in table.values():
                for lb in COHERENCE_POPULATION:
                    assert abs(row.get(lb, 0.0)) < 1e-14


def test_heterodimer_breaks_vanishing():
    from dimerqpt.exciton import SiteDimer

    site = homodimer(16633.0, 175.0, 1.1)
    eig = diagonalize(SiteDimer(16500.0, 16800.0, 175.0, site.d_A, site.d_B))
    table = amplitude_weights(pathways(eig, ZZZZ, np.full((3, 2), -1j)))
    worst = max(abs(row.get(lb, 0.0)) for row in table.values() for lb in COHERENCE_POPULATION)
    assert worst > 1e-3


@settings(max_examples=25, deadline=None)
@given(phi=st.floats(0.05, np.pi - 0.05), seed=st.integers(0, 10000))
def test_general_matches_closed_form(phi, seed):
    rng = np.random.default_rng(seed)
    eig = diagonalize(homodimer(16633.0, 175.0, phi))
    chi = random_chi(rng, 2)
    for name in ("zzzz", "zzxx"):
        gen = peak_amplitudes_general(chi, eig, np.full((3, 2), -1j), CONFIGS[name]).S
        ref = peak_amplitudes_homodimer(chi, eig, name).S
        assert np.allclose(gen, ref, rtol=1e-12, atol=1e-13 * np.abs(ref).max())


def test_closed_form_needs_homodimer():
    from dimerqpt.exciton import SiteDimer

    site = homodimer(16633.0, 175.0, 1.1)
    eig = diagonalize(SiteDimer(16500.0, 16800.0, 175.0, site.d_A, site.d_B))
    with pytest.raises(ValueError):
        peak_amplitudes_homodimer(ProcessMatrix.identity([1.0]), eig, "zzzz")


def test_imaginary_cross_peak_ratio(porphyrin_chi, porphyrin_eigen):
    z = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, np.full((3, 2), -1j), ZZZZ)
    x = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, np.full((3, 2), -1j), ZZXX)
    assert np.allclose(z["ab"].imag, -2 * x["ab"].imag, atol=1e-14)


def test_unitary_diagonals_static(porphyrin_eigen):
    T = np.linspace(10, 200, 12)
    amps = peak_amplitudes_general(unitary_chi(porphyrin_eigen, T), porphyrin_eigen,
                                   np.full((3, 2), -1j), ZZXX)
    assert np.ptp(np.abs(amps["aa"])) < 1e-14
    assert np.ptp(np.abs(amps["bb"])) < 1e-14
    # the cross peak carries exp(+i w_ab T) through the beta-alpha coherence
    w = float(wavenumber_to_angular(porphyrin_eigen.omega_alpha_beta))
    D = np.diff(amps["ab"])
    assert np.allclose(np.angle(D[1:] / D[:-1]), w * np.diff(T)[1:], atol=1e-10)


def test_far_detuned_pulses_give_nothing(porphyrin_chi, porphyrin_eigen):
    pulses = PulseSequence((16546.0, 16546.0, 30000.0), fwhm_to_sigma(20.0), mode="gaussian")
    amps = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, pulses, ZZZZ)
    ref = PulseSequence((16546.0,) * 3, fwhm_to_sigma(20.0), mode="gaussian")
    big = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, ref, ZZZZ)
    assert np.max(np.abs(amps.S)) < 1e-12 * np.max(np.abs(big.S))


def test_pulse_sequence_modes(porphyrin_eigen):
    eq = PulseSequence((16546.0,) * 3, 8.49)
    assert np.all(eq.coefficients(porphyrin_eigen) == -1j)
    g = PulseSequence((16546.0,) * 3, 8.49, mode="gaussian").coefficients(porphyrin_eigen)
    assert np.allclose(g.real, 0)
    assert abs(g[0, 0]) > abs(g[0, 1])
    with pytest.raises(ValueError):
        PulseSequence((1.0, 2.0), 8.49)
    with pytest.raises(ValueError):
        PulseSequence((1.0, 2.0, 3.0), 8.49, mode="square")


def test_peak_set_csv(tmp_path, porphyrin_chi, porphyrin_eigen):
    amps = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, np.full((3, 2), -1j), ZZZZ)
    amps.to_csv(tmp_path / "p.csv")
    back = PeakAmplitudeSet.from_csv(tmp_path / "p.csv", "zzzz")
    assert np.array_equal(back.S, amps.S)
    assert np.array_equal((amps + amps).S, amps.scaled(2).S)
    with pytest.raises(ValueError):
        PeakAmplitudeSet([1.0], np.zeros((2, 2, 2)))


def test_spectrum_center_value(porphyrin_eigen):
    S = np.zeros((1, 2, 2), complex)
    S[0, 0, 1] = 1.0
    peaks = PeakAmplitudeSet([10.0], S)
    e = porphyrin_eigen
    ax = [e.omega_alpha_g, e.omega_beta_g]
    spec = assemble_spectrum(peaks, DephasingSet.uniform(GAMMA), ax, ax, e)
    assert spec.values[0, 1] == pytest.approx(1j / GAMMA**2, rel=1e-12)


def test_zero_amplitudes_zero_grid(porphyrin_eigen):
    ax = uniform_axis(16633.0, 100.0, 5.0)
    spec = assemble_spectrum(PeakAmplitudeSet([1.0], np.zeros((1, 2, 2))),
                             DephasingSet.uniform(GAMMA), ax, ax, centers=(16600.0, 16650.0))
    assert not np.any(spec.values)


def test_axis_warning(porphyrin_eigen):
    ax = uniform_axis(16000.0, 100.0, 5.0)
    with pytest.warns(UserWarning):
        assemble_spectrum(PeakAmplitudeSet([1.0], np.ones((1, 2, 2))),
                          DephasingSet.uniform(GAMMA), ax, ax, porphyrin_eigen)


def test_porphyrin_axis():
    ax = porphyrin_axis()
    assert ax.size == 1051
    assert ax[-1] - ax[0] == pytest.approx(1050.0)
    assert np.allclose(np.diff(ax), 1.0)


def test_spectrum_files_round_trip(tmp_path, porphyrin_chi, porphyrin_eigen):
    amps = peak_amplitudes_general(porphyrin_chi, porphyrin_eigen, np.full((3, 2), -1j), ZZXX)
    ax = uniform_axis(16633.0, 500.0, 10.0)
    spec = assemble_spectrum(amps, DephasingSet.uniform(GAMMA), ax, ax, porphyrin_eigen, k=2)
    spec.meta = {"noise_level": 0.0}
    spec.to_files(str(tmp_path / "s"), digits=17)
    back = Spectrum2D.from_files(str(tmp_path / "s"))
    assert back.T == spec.T and back.config == "zzxx"
    assert np.array_equal(back.values, spec.values)
    assert np.allclose(back.omega_tau, spec.omega_tau)
    assert back.meta == {"noise_level": 0.0}


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum2D([1.0, 2.0], [1.0, 2.0], np.zeros((3, 2)), 1.0)
    with pytest.raises(ValueError):
        Spectrum2D([1.0, 2.0, 4.0], [1.0, 2.0], np.zeros((3, 2)), 1.0)


def test_time_domain_causal_and_single_branch(porphyrin_eigen):
    chi = propagate_chi(RedfieldModel.unitary(-350.0), porphyrin_eigen, [30.0])
    deph = DephasingSet.uniform(GAMMA)
    tau = np.array([-2.0, 0.0, 5.0, 10.0, 20.0])
    t = np.array([-1.0, 0.0, 7.0])
    C = np.full((3, 2), -1j)
    P = polarization_time_domain(chi, porphyrin_eigen, C, ZZZZ, tau, t, deph)[0]
    assert not np.any(P[0]) and not np.any(P[:, 0])
    # first pulse resonant with alpha only: the tau dependence is G_ga alone
    C[0, 1] = 0.0
    P = polarization_time_domain(chi, porphyrin_eigen, C, ZZZZ, tau[1:], t[1:], deph)[0]
    g = coherence_propagator("ga", tau[1:], deph, porphyrin_eigen)
    ratio = P / g[:, None]
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
