import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from oracles import couplings as oracle_couplings, cw_rotation, local_matrix
from sslsim.analytic import (coupled_lambda_map, cw_transfer_approx, cw_transfer_exact, degenerate_decomposition,
                             eit_peak_transmission, group_delay, normal_mode_inverse, normal_mode_transform,
                             phase_beta, storage_phase, symmetric_input, transmission_pair)
from sslsim.errors import InvalidParams, NotApplicable
from sslsim.model import (CANONICAL_PI_PHASES, CouplingSet, MediumParams, ProbePair, UnitSystem, generator,
                          relative_phase)

# frozen from tests/oracles.py (susceptibility + matrix exponential, no package code)
ORACLE_T_AT_001 = (0.83471266, 0.13619936)
DELTA_QUARTER_TURN = 0.041917549042591755  # phi_exact = pi/2 at alpha=20, Omega=0.51
DELTA_HALF_TURN = 0.09191770378045484  # phi_exact = pi


def test_exact_transfer_reference_point():
    pb = phase_beta(20, 0.51, 0.01)
    assert pb.beta == pytest.approx(26.01)
    assert pb.phi_exact == pytest.approx(0.3839, abs=5e-5)
    assert pb.loss_exponent == pytest.approx(0.01476, abs=5e-6)
    T = cw_transfer_exact(20, 0.51, 0.01).transmissions((1, 0))
    assert T == pytest.approx(ORACLE_T_AT_001, abs=1e-7)
    assert T[0] == pytest.approx(0.8347, abs=5e-5) and T[1] == pytest.approx(0.1362, abs=5e-5)


def test_exact_transfer_limits_and_quarter_turn():
    assert np.array_equal(cw_transfer_exact(20, 0.51, 0.0).m, np.eye(2))
    assert cw_transfer_exact(20, 0.51, 0.0).transmissions() == (1.0, 0.0)
    ta, tb = cw_transfer_exact(20, 0.51, DELTA_QUARTER_TURN).transmissions()
    assert ta < 1e-25
    assert tb == pytest.approx(cw_rotation(20, 0.51, DELTA_QUARTER_TURN)[1], rel=1e-9)
    for bad in [(0, 0.5, 0.01), (20, 0, 0.01), (-1, 0.5, 0.01)]:
        with pytest.raises(InvalidParams):
            cw_transfer_exact(*bad)


@pytest.mark.parametrize("delta", [-0.03, -0.01, 0.002, 0.02, 0.06])
def test_exact_transfer_matches_oracle(delta):
    T = cw_transfer_exact(20, 0.51, delta).transmissions()
    assert T == pytest.approx(tuple(cw_rotation(20, 0.51, delta)), rel=1e-9, abs=1e-15)


def test_approx_transfer_examples():
    pb = phase_beta(20, 0.51, 0.01)
    assert pb.phi_approx == pytest.approx(0.38447, abs=5e-6)
    ta = cw_transfer_approx(20, 0.51, 0.01).transmissions()[0]
    assert ta == pytest.approx(0.8343, abs=5e-5)
    assert abs(ta / cw_transfer_exact(20, 0.51, 0.01).transmissions()[0] - 1) < 5e-3
    assert np.allclose(cw_transfer_approx(20, 0.51, 0.0).m, np.eye(2))
    # beam splitter point: phi = pi/4 with negligible loss
    alpha = 1e12
    delta = (math.pi / 4) * 2 * 0.51**2 / alpha
    T = cw_transfer_approx(alpha, 0.51, delta).transmissions((0, 1))
    assert T == pytest.approx((0.5, 0.5), abs=1e-9)


@pytest.mark.parametrize("beta", [10, 26, 100])
def test_exact_approaches_approx(beta):
    omega, alpha = 0.51, 20
    pb = phase_beta(alpha, omega, omega**2 / beta)
    assert abs(pb.phi_exact / pb.phi_approx - 1) < 1 / beta**2


def test_transmission_pair_examples():
    assert transmission_pair(0, 20) == (1.0, 0.0)
    ta, tb = transmission_pair(math.pi / 2, 250)
    assert ta < 1e-32
    assert tb == pytest.approx(math.exp(-math.pi**2 / 250))
    assert tb == pytest.approx(0.9613, abs=5e-5)
    ta, tb = transmission_pair(math.pi, 20)
    assert ta == pytest.approx(math.exp(-4 * math.pi**2 / 20)) and ta == pytest.approx(0.139, abs=5e-4)
    assert tb < 1e-30
    # the exact transfer matrix at the matching rotation also leaves channel B empty
    assert phase_beta(20, 0.51, DELTA_HALF_TURN).phi_exact == pytest.approx(math.pi, abs=1e-12)
    assert cw_transfer_exact(20, 0.51, DELTA_HALF_TURN).transmissions()[1] < 1e-25


@settings(max_examples=80, deadline=None)
@given(st.floats(-6, 6), st.floats(0.1, 500))
def test_transmission_pair_sum_is_envelope(phi, alpha):
    ta, tb = transmission_pair(phi, alpha)
    assert ta + tb == pytest.approx(math.exp(-4 * phi**2 / alpha), rel=1e-12, abs=1e-300)


def test_storage_phase_examples():
    u = UnitSystem()
    assert storage_phase(500.0, 38.0, 0.0) == 0.0
    # energy oscillation period in delta is pi / (t_s + t_d)
    period = math.pi / u.time_from_us(16.0)
    assert u.freq_to_kHz(period) == pytest.approx(31.25, rel=1e-12)
    assert abs(u.freq_to_kHz(period) / 30.8 - 1) < 0.015
    delta = math.pi / u.time_from_us(49.9)
    assert u.freq_to_kHz(delta) == pytest.approx(10.02, abs=5e-3)
    with pytest.raises(InvalidParams):
        storage_phase(-1.0, 0.0, 0.01)


def test_eit_peak_transmission():
    assert eit_peak_transmission(20, 0.51, 0.0) == 1.0
    phi = 20 * 0.02 / (2 * 0.51**2)
    assert phi == pytest.approx(0.769, abs=5e-4)
    # independent re-derivation: exp(-4 alpha delta^2 / (2 Omega^2)^2) = exp(-4 phi^2 / alpha)
    ref = math.exp(-alpha_delta_form(20, 0.51, 0.02))
    assert eit_peak_transmission(20, 0.51, 0.02) == pytest.approx(ref, rel=1e-14)
    assert eit_peak_transmission(20, 0.51, 0.02) == pytest.approx(0.888, abs=5e-4)
    for d in np.linspace(-0.05, 0.05, 11):
        p = phase_beta(20, 0.51, d).phi_approx
        assert eit_peak_transmission(20, 0.51, d) == pytest.approx(sum(transmission_pair(p, 20)), rel=1e-12)


def alpha_delta_form(alpha, omega, delta):
    return alpha * delta**2 / omega**4


def test_group_delay():
    assert group_delay(20, 0.51) == pytest.approx(38.446751, rel=1e-7)


def test_transfer_rotation_structure():
    for d in np.linspace(-0.08, 0.08, 17):
        m = cw_transfer_exact(20, 0.51, d).m
        s2 = abs(np.linalg.det(m))
        assert np.allclose(m.T @ m, s2 * np.eye(2), atol=1e-14)
        assert s2 <= 1 + 1e-15
        assert np.allclose(m.imag, 0)


@pytest.mark.parametrize("phases", [(math.pi, 0, 0, 0), (0, math.pi, 0, 0), (0.3, 1.1, -0.4, 0.4 - math.pi),
                                    (math.pi / 2, 0, 0, math.pi / 2)])
def test_exact_transfer_other_pi_phase_sets(phases):
    c = CouplingSet.from_polar(0.51, phases)
    assert abs(abs(relative_phase(c)) - math.pi) < 1e-9
    W = oracle_couplings(0.51, phases)
    A = local_matrix(W, 0.013)
    src = np.zeros((4, 2), complex)
    src[0, 0] = src[1, 1] = 0.5j
    K = np.linalg.solve(-A, src)[:2, :2]
    ref = expm(1j * 20 / 2 * K)
    assert np.allclose(cw_transfer_exact(20, 0.51, 0.013, phases).m, ref, atol=1e-12)


def test_exact_transfer_rejects_other_theta():
    with pytest.raises(NotApplicable):
        cw_transfer_exact(20, 0.51, 0.01, phases=(0, 0, 0, 0))


def test_normal_modes():
    a, b = normal_mode_transform(ProbePair(1.0, 0.0))
    assert a == pytest.approx(1 / math.sqrt(2)) and b == pytest.approx(1j / math.sqrt(2))
    rng = np.random.default_rng(3)
    e = rng.normal(size=(2, 50)) + 1j * rng.normal(size=(2, 50))
    a, b = normal_mode_transform(ProbePair(e[0], e[1]))
    assert np.allclose(np.abs(a) ** 2 + np.abs(b) ** 2, np.sum(np.abs(e) ** 2, 0), rtol=1e-14)
    back = normal_mode_inverse(a, b).as_array()
    assert np.max(np.abs(back - e)) < 1e-14


def test_coupled_lambda_map_structure():
    c = CouplingSet.from_polar(0.51, CANONICAL_PI_PHASES)
    pic = coupled_lambda_map(c, 0.0)
    assert pic.effective_omega == pytest.approx(math.sqrt(2) * 0.51)
    assert np.all(pic.detuning_coupling == 0)
    pic = coupled_lambda_map(c, 0.01)
    assert np.allclose(pic.detuning_coupling, [[0, 0.01j], [0.01j, 0]])
    V = pic.ground_transform
    assert np.allclose(V.conj().T @ V, np.eye(2), atol=1e-15)
    assert np.allclose(np.abs(pic.optical_coupling), math.sqrt(2) * 0.51 * np.eye(2))
    with pytest.raises(NotApplicable):
        coupled_lambda_map(CouplingSet.from_polar(0.51, (0, 0, 0, 0)), 0.01)


@pytest.mark.parametrize("theta", [math.pi, 0.0])
@pytest.mark.parametrize("delta", [0.0, 0.02])
def test_lambda_pictures_are_similarity_transforms(theta, delta):
    c = CouplingSet.with_theta(0.51, theta)
    m = MediumParams(20.0, 1e-3, 3.7e-3)
    pic = (coupled_lambda_map if theta else degenerate_decomposition)(c, delta, m)
    S = pic.state_transform()
    G = generator(c, delta, m)
    assert np.allclose(S @ G @ S.conj().T, pic.generator(), atol=1e-14)
    assert np.allclose(S.conj().T @ S, np.eye(4), atol=1e-15)


def test_degenerate_decomposition_dark_state():
    c = CouplingSet.from_polar(0.51, (0, 0, 0, 0))
    pic = degenerate_decomposition(c, 0.0)
    G = pic.generator()
    # rho2' neither couples to light nor to rho1' at delta = 0
    assert np.all(G[3, :3] == 0) and np.all(G[:3, 3] == 0)
    assert np.allclose(np.abs(pic.optical_coupling[:, 0]), math.sqrt(2) * 0.51)
    e = symmetric_input(pic, 1.0)
    assert abs(e.epsA) ** 2 + abs(e.epsB) ** 2 == pytest.approx(1.0)
    with pytest.raises(NotApplicable):
        degenerate_decomposition(CouplingSet.from_polar(0.51, CANONICAL_PI_PHASES), 0.01)
