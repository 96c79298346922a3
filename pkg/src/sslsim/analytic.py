"""Closed-form continuous-wave results and basis changes for the double-tripod scheme.

These are used as oracles for the numerical solver.  All formulas assume
symmetric coupling magnitudes ``omega``; the CW transfer matrices assume no
phase mismatch and no ground-state dephasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, NotApplicable
from .model import (CANONICAL_PI_PHASES, CouplingSet, MediumParams, ProbePair,
                    relative_phase, wrap_angle)

SQRT_HALF = 1 / math.sqrt(2)
_U = SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=complex)
_NORMAL = SQRT_HALF * np.array([[1, 1j], [1j, 1]])


@dataclass(frozen=True)
class PhaseBeta:
    beta: float
    phi_exact: float
    phi_approx: float
    loss_exponent: float


@dataclass(frozen=True)
class TransferMatrix:
    """Maps (epsA, epsB) at the entrance face to the exit face."""

    m: np.ndarray

    def apply(self, eps_in):
        return self.m @ np.asarray(eps_in, dtype=complex)

    def transmissions(self, eps_in=(1.0, 0.0)):
        eps_in = np.asarray(eps_in, dtype=complex)
        out = self.apply(eps_in)
        p = np.abs(out) ** 2 / np.sum(np.abs(eps_in) ** 2)
        return float(p[0]), float(p[1])

    @property
    def det(self):
        return complex(np.linalg.det(self.m))


def _check(alpha, omega):
    if not alpha > 0:
        raise InvalidParams(f"alpha must be > 0, got {alpha}")
    if not omega > 0:
        raise InvalidParams(f"omega must be > 0, got {omega}")


def phase_beta(alpha: float, omega: float, delta: float) -> PhaseBeta:
    _check(alpha, omega)
    phi_approx = alpha * delta / (2 * omega**2)
    if delta == 0:
        return PhaseBeta(math.inf, 0.0, 0.0, 0.0)
    beta = omega**2 / delta
    return PhaseBeta(beta=beta,
                     phi_exact=(alpha / 2) * beta / (1 + beta**2),
                     phi_approx=phi_approx,
                     loss_exponent=(alpha / 2) / (1 + beta**2))


def _rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _gauge_factor(phases) -> complex:
    """Unit factor u with T = diag(1,u)^-1 T_canonical diag(1,u) for a theta=pi phase set."""
    c = CouplingSet.from_polar(1.0, phases)
    if abs(wrap_angle(relative_phase(c) - math.pi)) > 1e-9:
        raise NotApplicable("closed-form transfer matrix needs relative phase pi")
    W = c.matrix
    # off-diagonal of I - W D^-1 W^H / 2 at delta = 1 divided by -beta (beta = 1)
    Dinv = np.array([1 / 1j, 1 / -1j])
    m01 = -0.5 * np.sum(W[0] * Dinv * W[1].conj())
    return complex(m01 / -1.0)


def cw_transfer_exact(alpha: float, omega: float, delta: float,
                      phases=CANONICAL_PI_PHASES) -> TransferMatrix:
    """Exact steady-state transfer matrix: loss exp(-L) times rotation by phi_exact."""
    pb = phase_beta(alpha, omega, delta)
    if delta == 0:
        return TransferMatrix(np.eye(2, dtype=complex))
    m = math.exp(-pb.loss_exponent) * _rotation(pb.phi_exact)
    return TransferMatrix(_regauge(m, phases))


def cw_transfer_approx(alpha: float, omega: float, delta: float,
                       phases=CANONICAL_PI_PHASES) -> TransferMatrix:
    """Large-beta form: loss exp(-2 phi^2/alpha), rotation by phi = alpha delta / (2 Omega^2)."""
    pb = phase_beta(alpha, omega, delta)
    phi = pb.phi_approx
    m = math.exp(-2 * phi**2 / alpha) * _rotation(phi)
    return TransferMatrix(_regauge(m, phases))


def _regauge(m, phases):
    u = _gauge_factor(phases)
    if abs(u - 1) < 1e-15:
        return m
    out = m.copy()
    out[0, 1] *= u
    out[1, 0] /= u
    return out


def transmission_pair(phi: float, alpha: float):
    """(T_A, T_B) for input on channel A after rotation phi with EIT loss."""
    if not alpha > 0:
        raise InvalidParams(f"alpha must be > 0, got {alpha}")
    env = math.exp(-4 * phi**2 / alpha)
    return env * math.cos(phi) ** 2, env * math.sin(phi) ** 2


def storage_phase(t_s, t_d, delta, phi0=0.0):
    """Rotation angle accumulated over storage plus slow-light delay."""
    if np.any(np.asarray(t_s) < 0) or np.any(np.asarray(t_d) < 0):
        raise InvalidParams("storage time and delay must be non-negative")
    return (t_s + t_d) * delta + phi0


def group_delay(alpha: float, omega: float) -> float:
    """Slow-light delay alpha / (2 Omega^2) of the double-tripod (effective Rabi sqrt(2) Omega)."""
    _check(alpha, omega)
    return alpha / (2 * omega**2)


def eit_peak_transmission(alpha: float, omega: float, delta: float) -> float:
    _check(alpha, omega)
    return math.exp(-4 * alpha * delta**2 / (math.sqrt(2) * omega) ** 4)


def normal_mode_transform(probe: ProbePair):
    """(eps_a, eps_b) = [[1, i], [i, 1]] / sqrt(2) applied to (epsA, epsB)."""
    a = _NORMAL @ probe.as_array().reshape(2, -1)
    shape = np.shape(np.broadcast_arrays(probe.epsA, probe.epsB)[0])
    return a[0].reshape(shape), a[1].reshape(shape)


def normal_mode_inverse(eps_a, eps_b) -> ProbePair:
    v = np.stack(np.broadcast_arrays(np.asarray(eps_a, dtype=complex), np.asarray(eps_b, dtype=complex)))
    shape = v.shape[1:]
    out = _NORMAL.conj().T @ v.reshape(2, -1)
    return ProbePair(out[0].reshape(shape), out[1].reshape(shape))


@dataclass(frozen=True)
class LambdaPicture:
    """The double-tripod rewritten in ground coherences rho' = V rho.

    ``optical_coupling`` is W V^-1 (rows A, B; columns rho1', rho2'),
    ``ground_block`` the 2x2 evolution of (rho1', rho2'), and
    ``ground_transform`` the unitary V = U diag(phases of W's A row).
    """

    effective_omega: float
    optical_coupling: np.ndarray
    ground_block: np.ndarray
    detuning_coupling: np.ndarray
    ground_transform: np.ndarray
    b_phase: complex

    def generator(self) -> np.ndarray:
        G = np.zeros((4, 4), dtype=complex)
        G[0, 0] = G[1, 1] = -0.5
        G[:2, 2:] = 0.5j * self.optical_coupling
        G[2:, :2] = 0.5j * self.optical_coupling.conj().T
        G[2:, 2:] = self.ground_block
        return G

    def state_transform(self) -> np.ndarray:
        S = np.eye(4, dtype=complex)
        S[2:, 2:] = self.ground_transform
        return S


def _lambda_picture(c: CouplingSet, delta: float, m: MediumParams | None, want_theta: float,
                    optical_shape) -> LambdaPicture:
    if not c.symmetric:
        raise NotApplicable("equal coupling magnitudes required")
    th = relative_phase(c)
    if abs(wrap_angle(th - want_theta)) > 1e-9:
        raise NotApplicable(f"relative phase {th:.6g} != {want_theta:.6g}")
    m = m or MediumParams(alpha=1.0)
    omega = float(c.magnitudes[0])
    x = np.array(c.omega[:2]) / omega
    y = np.array(c.omega[2:]) / omega
    eta_phase = y[0] / x[0]
    V = _U @ np.diag(x)
    gbar = 0.5 * (m.gamma1 + m.gamma2)
    off = 1j * delta - 0.5 * (m.gamma1 - m.gamma2)
    ground = np.array([[-gbar, off], [off, -gbar]], dtype=complex)
    coupling = math.sqrt(2) * omega * np.diag([1, eta_phase]) @ optical_shape
    return LambdaPicture(effective_omega=math.sqrt(2) * omega,
                         optical_coupling=coupling,
                         ground_block=ground,
                         detuning_coupling=np.array([[0, 1j * delta], [1j * delta, 0]]),
                         ground_transform=V,
                         b_phase=complex(eta_phase))


def coupled_lambda_map(c: CouplingSet, delta: float, m: MediumParams | None = None) -> LambdaPicture:
    """theta = pi: two Lambda systems with Rabi sqrt(2) Omega, coupled only through delta (and gamma1 - gamma2)."""
    return _lambda_picture(c, delta, m, math.pi, np.eye(2))


def degenerate_decomposition(c: CouplingSet, delta: float, m: MediumParams | None = None) -> LambdaPicture:
    """theta = 0: both probes couple to rho1' only; rho2' is reached through delta alone."""
    pic = _lambda_picture(c, delta, m, 0.0, np.array([[1, 0], [1, 0]], dtype=complex))
    return pic


def symmetric_input(pic: LambdaPicture, eps) -> ProbePair:
    """Probe pair that drives only the bright combination of a degenerate picture."""
    return ProbePair(eps * SQRT_HALF, pic.b_phase * eps * SQRT_HALF)
