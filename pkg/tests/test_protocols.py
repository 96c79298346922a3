import math

import numpy as np
import pytest

from scenarios import IDEAL, OMEGA, IMPERFECT, PI_COUPLINGS, PULSE, T_D, UNITS, kHz, quasi_cw_transmissions, us
from sslsim.analytic import phase_beta, transmission_pair
from sslsim.calibration import fit_oscillation_time
from sslsim.errors import FlatLandscape, InvalidParams
from sslsim.model import CouplingSet, MediumParams
from sslsim.protocols import (QubitAmplitudes, SimConfig, interferometer_delta_scan, interferometer_time_scan,
                              scan_delta, scan_theta, theta_couplings, tune_theta, two_color_storage)
from sslsim.results import ScanResult

IDEAL_CFG = SimConfig(IDEAL, PI_COUPLINGS, PULSE)
IMPERFECT_CFG = SimConfig(IMPERFECT, PI_COUPLINGS, PULSE)
SYM_DELTAS = np.arange(-10, 11) * 0.005


@pytest.fixture(scope="module")
def imperfect_scan():
    return scan_delta(IMPERFECT_CFG, SYM_DELTAS)


@pytest.fixture(scope="module")
def ideal_scan():
    return scan_delta(IDEAL_CFG, SYM_DELTAS)


def test_qubit_amplitudes():
    q = QubitAmplitudes.from_ratio(1.5)
    assert abs(q.a) ** 2 / abs(q.b) ** 2 == pytest.approx(1.5)
    with pytest.raises(InvalidParams):
        QubitAmplitudes(1.0, 0.1)
    QubitAmplitudes(1 / math.sqrt(2), 1j / math.sqrt(2))


def test_scan_result_invariants():
    with pytest.raises(InvalidParams):
        ScanResult("delta", [0.0, 0.0], [1, 1], [0, 0])
    s = ScanResult("delta", [0.0, kHz(31.25)], [1, 0.5], [0, 0.5])
    label, si = s.axis_SI(UNITS)
    assert label == "kHz" and si[1] == pytest.approx(31.25)


def test_scan_delta_on_resonance(imperfect_scan):
    i = int(np.argmin(np.abs(imperfect_scan.axis)))
    assert imperfect_scan.axis[i] == 0.0
    # frequency-domain oracle (tests/oracles.py) at delta = 0 for the imperfect medium
    assert imperfect_scan.T_A[i] == pytest.approx(0.7765621, abs=2e-5)
    assert imperfect_scan.T_B[i] == pytest.approx(0.00369629, abs=2e-5)
    assert np.all(imperfect_scan.T_A + imperfect_scan.T_B <= 1 + 1e-6)
    assert imperfect_scan.meta["protocol"] == "scan_delta" and imperfect_scan.meta["dk_L"] == 0.6


def test_scan_delta_imperfect_curve_family(imperfect_scan):
    ta, tb = imperfect_scan.T_A, imperfect_scan.T_B
    asym_a = np.max(np.abs(ta - ta[::-1]))
    asym_b = np.max(np.abs(tb - tb[::-1]))
    assert asym_a > 1e-2
    assert asym_b < 1e-3 * asym_a
    # the dips of T_A do not reach zero
    inner = (np.abs(imperfect_scan.axis) > 0) & (np.abs(imperfect_scan.axis) < 0.04)
    assert np.min(ta[inner]) > 0.01


def test_scan_delta_alternation(ideal_scan):
    ax = ideal_scan.axis
    ta, tb = ideal_scan.T_A, ideal_scan.T_B
    step = ax[1] - ax[0]
    mins = [i for i in range(1, ax.size - 1) if ta[i] < ta[i - 1] and ta[i] < ta[i + 1]]
    maxs = [i for i in range(1, ax.size - 1) if tb[i] > tb[i - 1] and tb[i] > tb[i + 1]]
    assert len(mins) >= 2 and len(mins) == len(maxs)
    for i, j in zip(mins, maxs):
        assert abs(ax[i] - ax[j]) <= step + 1e-12


def test_ideal_quasi_cw_matches_large_beta_law():
    for d in np.linspace(-0.03, 0.03, 7):
        T, _ = quasi_cw_transmissions(d)
        ref = transmission_pair(phase_beta(20, OMEGA, d).phi_approx, 20)
        assert np.max(np.abs(T - ref)) < 1e-2, d


def test_scan_errors_are_annotated():
    with pytest.raises(InvalidParams, match=r"delta=5"):
        scan_delta(IDEAL_CFG, [0.0, 5.0], threads=1)


def test_scan_is_thread_count_independent():
    ds = [-0.02, 0.0, 0.01, 0.03]
    a = scan_delta(IDEAL_CFG, ds, threads=1)
    b = scan_delta(IDEAL_CFG, ds, threads=4)
    assert np.array_equal(a.T_A, b.T_A) and np.array_equal(a.T_B, b.T_B)


def test_theta_couplings_keep_magnitudes():
    c = theta_couplings(CouplingSet.from_polar((0.5, 0.4, 0.3, 0.2), (0, 0, 0, 0)), 1.0)
    assert np.allclose(c.magnitudes, (0.5, 0.4, 0.3, 0.2))


def test_scan_theta_null_and_contrast_growth():
    res = scan_theta(IDEAL_CFG, [0.0, math.pi / 3, 2 * math.pi / 3, math.pi], 0.01)
    contrast = np.abs(res.T_A - res.T_B)
    assert np.all(np.diff(contrast) > 0)
    null = scan_theta(IDEAL_CFG, [math.pi], 0.0)
    assert null.T_B[0] < 1e-4


def test_tune_theta_ideal_and_imperfect():
    for cfg in (IDEAL_CFG, IMPERFECT_CFG):
        res = tune_theta(cfg, n_coarse=16)
        assert abs(res.theta - math.pi) < 1e-3
        assert res.coarse is not None and res.coarse.axis.size == 16


def test_tune_theta_from_perturbed_start():
    # oracle: dense grid scan of the same landscape around the minimum
    dense = scan_theta(IDEAL_CFG, np.linspace(math.pi - 0.05, math.pi + 0.05, 11), 0.0)
    grid_min = dense.axis[int(np.argmin(dense.T_B))]
    res = tune_theta(IDEAL_CFG, theta0=2.5)
    assert abs(res.theta - math.pi) < 1e-3
    assert abs(res.theta - grid_min) <= 0.005 + 1e-12


def test_tune_theta_flat_landscape():
    with pytest.raises(FlatLandscape):
        tune_theta(SimConfig(MediumParams(0.0), PI_COUPLINGS, PULSE), n_coarse=6)


def test_interferometer_delta_scan_period(fig3a_scan):
    fit = fig3a_scan.fit
    assert fit is not None and fit.converged
    assert UNITS.freq_to_kHz(fit.params["period"]) == pytest.approx(31.25, rel=0.01)
    i = int(np.argmin(np.abs(fig3a_scan.axis)))
    assert fig3a_scan.axis[i] == 0.0
    assert fig3a_scan.T_B[i] < 1e-6 * fig3a_scan.T_A[i]
    assert fig3a_scan.meta["detune_on"] is True


def test_interferometer_amplitude_constant_over_cycles():
    m = MediumParams(20.0, 3e-4, 3e-4)
    cfg = SimConfig(m, PI_COUPLINGS, PULSE)
    t_s = 500.0
    # storage-only rotation: extremes at delta * t_s = k pi / 2, three full cycles
    deltas = np.arange(7) * (math.pi / 2) / t_s
    res = interferometer_delta_scan(t_s, deltas, cfg, detune_on=False, fit=False)
    peaks = np.where(np.arange(7) % 2 == 0, res.T_A, res.T_B)
    # closed form: rotation of (rho1, rho2) is unitary, decay common to both
    assert np.ptp(peaks) < 1e-6 * peaks.max()
    assert np.allclose(res.T_A + res.T_B, peaks[0], rtol=1e-6)


def test_interferometer_time_scan_period(time_scans):
    fits = {f: fit_oscillation_time(s) for f, s in time_scans.items()}
    assert UNITS.time_to_us(fits[10.0].params["T_s"]) == pytest.approx(UNITS.time_to_us(math.pi / kHz(10.0)),
                                                                       abs=0.3)
    assert fits[20.0].params["T_s"] == pytest.approx(fits[10.0].params["T_s"] / 2, rel=0.01)


def test_period_law_across_detunings(time_scans):
    scans = dict(time_scans)
    cfg = SimConfig(MediumParams(20.0, 1.745e-4, 1.745e-4), PI_COUPLINGS, PULSE)
    scans[5.0] = interferometer_time_scan(kHz(5.0), us(np.linspace(5.0, 205.0, 41)), cfg, fit=False)
    for f, s in scans.items():
        fit = fit_oscillation_time(s)
        d = kHz(f)
        assert abs(fit.params["T_s"] * d - math.pi) <= max(3 * fit.sigma["T_s"] * d, 1e-3 * math.pi), f


def test_two_color_quarter_turn_and_balanced_input():
    t_s = 600.0
    res = two_color_storage(QubitAmplitudes(1.0, 0.0), t_s, (math.pi / 2) / t_s, IDEAL_CFG)
    assert res.energies.E_A < 1e-3 * res.energies.E_B
    bal = two_color_storage(QubitAmplitudes(1 / math.sqrt(2), 1 / math.sqrt(2)), t_s, 0.0, IDEAL_CFG)
    assert bal.energy_ratio == pytest.approx(1.0, abs=1e-9)


def test_two_color_rotator_composition():
    q = QubitAmplitudes.from_ratio(0.84, phase=0.3)
    d1, d2 = 0.002, -0.0007
    t1, t2 = 300.0, 200.0
    split = two_color_storage(q, [t1, t2], [d1, d2], IDEAL_CFG)
    # one interval with the same total rotation angle
    joint = two_color_storage(q, t1 + t2, (d1 * t1 + d2 * t2) / (t1 + t2), IDEAL_CFG)
    assert np.max(np.abs(np.subtract(split.amplitudes, joint.amplitudes))) < 1e-6


def test_two_color_ratio_is_held_with_equal_dephasing():
    m = MediumParams(20.0, 1.745e-4, 1.745e-4)
    cfg = SimConfig(m, PI_COUPLINGS, PULSE)
    q = QubitAmplitudes.from_ratio(0.55)
    r3 = two_color_storage(q, us(3.0), 0.0, cfg).energy_ratio
    r33 = two_color_storage(q, us(33.0), 0.0, cfg).energy_ratio
    assert r33 / r3 == pytest.approx(1.0, abs=1e-6)
    assert r3 == pytest.approx(0.55, rel=2e-2)


def test_slow_delay_of_fixture():
    assert T_D == pytest.approx(38.4467512, rel=1e-8)
