"""Domain types and the local equations of motion for the double-tripod medium.

Everything is dimensionless: time in units of 1/Gamma (excited-state decay),
Rabi frequencies and detunings in units of Gamma, position in units of the
medium length.  The atomic state at one position is the four coherences
``(rhoA, rhoB, rho1, rho2)``; the equations are linear (weak probe), so one
4x4 generator per coupling configuration describes the local dynamics:

    d/dt rho = G @ rho + (i/2) * (epsA, epsB, 0, 0)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidParams, ScheduleGap, SingularRegime, ZeroCoupling

GAMMA_SI_DEFAULT = 2 * math.pi * 6e6  # rad/s

# phases (A1, A2, B1, B2) that put the scheme at theta = pi
CANONICAL_PI_PHASES = (math.pi / 2, 0.0, 0.0, math.pi / 2)


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - x) % (2 * math.pi)


@dataclass(frozen=True)
class UnitSystem:
    gamma_SI: float = GAMMA_SI_DEFAULT
    length_L: float = 1.0

    def __post_init__(self):
        if not (self.gamma_SI > 0 and math.isfinite(self.gamma_SI)):
            raise InvalidParams(f"gamma_SI must be positive and finite, got {self.gamma_SI}")

    # time
    def time_from_us(self, t_us):
        return t_us * 1e-6 * self.gamma_SI

    def time_to_us(self, t):
        return t / self.gamma_SI * 1e6

    # angular frequencies quoted as 2*pi x f
    def freq_from_kHz(self, f_kHz):
        return 2 * math.pi * f_kHz * 1e3 / self.gamma_SI

    def freq_to_kHz(self, w):
        return w * self.gamma_SI / (2 * math.pi * 1e3)

    def freq_from_MHz(self, f_MHz):
        return 2 * math.pi * f_MHz * 1e6 / self.gamma_SI

    def freq_to_MHz(self, w):
        return w * self.gamma_SI / (2 * math.pi * 1e6)


@dataclass(frozen=True)
class MediumParams:
    """Optical density, ground-coherence dephasing rates and phase mismatch.

    ``dk_L`` enters the probe equations as ``+i dk/2`` for channel A and
    ``-i dk/2`` for channel B.
    """

    alpha: float
    gamma1: float = 0.0
    gamma2: float = 0.0
    dk_L: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "gamma1", "gamma2", "dk_L"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParams(f"{name} must be finite, got {v}")
        if self.alpha < 0:
            raise InvalidParams(f"alpha must be >= 0, got {self.alpha}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidParams("dephasing rates must be >= 0")

    def replace(self, **kw) -> "MediumParams":
        d = dict(alpha=self.alpha, gamma1=self.gamma1, gamma2=self.gamma2, dk_L=self.dk_L)
        d.update(kw)
        return MediumParams(**d)


@dataclass(frozen=True)
class CouplingSet:
    """Complex coupling Rabi frequencies in the order (A1, A2, B1, B2)."""

    omega: tuple

    def __post_init__(self):
        om = tuple(complex(w) for w in self.omega)
        if len(om) != 4:
            raise InvalidParams("a coupling set needs exactly four Rabi frequencies")
        if not all(math.isfinite(w.real) and math.isfinite(w.imag) for w in om):
            raise InvalidParams("coupling Rabi frequencies must be finite")
        object.__setattr__(self, "omega", om)

    @classmethod
    def from_polar(cls, magnitudes, phases) -> "CouplingSet":
        if np.isscalar(magnitudes):
            magnitudes = (magnitudes,) * 4
        return cls(tuple(m * np.exp(1j * p) for m, p in zip(magnitudes, phases)))

    @classmethod
    def with_theta(cls, omega, theta) -> "CouplingSet":
        """Equal magnitudes; phases (theta - pi/2, 0, 0, pi/2) give relative phase theta."""
        return cls.from_polar(omega, (theta - math.pi / 2, 0.0, 0.0, math.pi / 2))

    @classmethod
    def off(cls) -> "CouplingSet":
        return cls((0, 0, 0, 0))

    @property
    def magnitudes(self):
        return np.abs(np.array(self.omega))

    @property
    def phases(self):
        return np.angle(np.array(self.omega))

    @property
    def symmetric(self) -> bool:
        m = self.magnitudes
        return bool(m[0] > 0 and np.allclose(m, m[0], rtol=1e-12, atol=0))

    @property
    def is_off(self) -> bool:
        return not any(self.omega)

    @property
    def matrix(self):
        """2x2 coupling matrix W: rows (A, B) excited states, columns ground coherences (1, 2)."""
        a1, a2, b1, b2 = self.omega
        return np.array([[a1, a2], [b1, b2]], dtype=complex)


def relative_phase(c: CouplingSet) -> float:
    """theta = (th_A1 - th_A2) - (th_B1 - th_B2), wrapped to (-pi, pi]."""
    if np.any(c.magnitudes == 0):
        raise ZeroCoupling("relative phase needs all four couplings nonzero")
    a1, a2, b1, b2 = c.omega
    # product form avoids summing four independently wrapped angles
    return wrap_angle(float(np.angle(a1 * np.conj(a2) * np.conj(b1) * b2)))


def generator(c: CouplingSet, delta: float, m: MediumParams) -> np.ndarray:
    """Local 4x4 matrix G acting on (rhoA, rhoB, rho1, rho2)."""
    W = c.matrix
    G = np.zeros((4, 4), dtype=complex)
    G[0, 0] = G[1, 1] = -0.5
    G[:2, 2:] = 0.5j * W
    G[2:, :2] = 0.5j * W.conj().T
    G[2, 2] = 1j * delta - m.gamma1
    G[3, 3] = -1j * delta - m.gamma2
    return G


@dataclass(frozen=True)
class AtomicState:
    rhoA: np.ndarray | complex = 0j
    rhoB: np.ndarray | complex = 0j
    rho1: np.ndarray | complex = 0j
    rho2: np.ndarray | complex = 0j

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in
                                               (self.rhoA, self.rhoB, self.rho1, self.rho2))))

    @classmethod
    def from_array(cls, arr) -> "AtomicState":
        arr = np.asarray(arr, dtype=complex)
        return cls(arr[0], arr[1], arr[2], arr[3])

    @classmethod
    def zeros(cls, n: int) -> "AtomicState":
        return cls.from_array(np.zeros((4, n), dtype=complex))


@dataclass(frozen=True)
class ProbePair:
    epsA: np.ndarray | complex = 0j
    epsB: np.ndarray | complex = 0j

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(np.asarray(self.epsA, dtype=complex),
                                            np.asarray(self.epsB, dtype=complex)))


def rhs(state: AtomicState, probe: ProbePair, c: CouplingSet, delta: float,
        m: MediumParams) -> AtomicState:
    """Time derivative of the four coherences (linear in state and probe)."""
    G = generator(c, delta, m)
    x = state.as_array()
    e = probe.as_array()
    shape = np.broadcast_shapes(x.shape[1:], e.shape[1:])
    x = np.broadcast_to(x, (4,) + shape).reshape(4, -1)
    e = np.broadcast_to(e, (2,) + shape).reshape(2, -1)
    dx = G @ x
    dx[:2] += 0.5j * e
    return AtomicState.from_array(dx.reshape((4,) + shape))


def steady_coherences(probe: ProbePair, c: CouplingSet, delta: float,
                      m: MediumParams | None = None) -> AtomicState:
    """Adiabatic (long-time) coherences for a constant probe.

    For symmetric couplings at theta = pi this reduces to
    ``(rhoA, rhoB) = i * M^-1 (epsA, epsB)`` with ``M = [[1, -beta], [beta, 1]]``
    and ``beta = Omega^2 / delta`` (for the canonical phase choice).
    """
    if delta == 0:
        raise SingularRegime("steady state is undefined at delta = 0; integrate the dynamics instead")
    m = m or MediumParams(alpha=1.0)
    G = generator(c, delta, m)
    e = probe.as_array()
    shape = e.shape[1:]
    src = np.zeros((4,) + (int(np.prod(shape, dtype=int)),), dtype=complex)
    src[:2] = 0.5j * e.reshape(2, -1)
    if np.linalg.cond(G) > 1e14:
        raise SingularRegime("local generator is singular for these couplings")
    x = -np.linalg.solve(G, src)
    return AtomicState.from_array(x.reshape((4,) + shape))


class Segment(NamedTuple):
    t_start: float
    t_end: float
    couplings: CouplingSet
    delta: float = 0.0


@dataclass(frozen=True)
class CouplingSchedule:
    """Piecewise-constant couplings and detuning; segments must tile their span."""

    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(Segment(*s) for s in self.segments)
        if not segs:
            raise ScheduleGap("schedule has no segments")
        for s in segs:
            if not s.t_end > s.t_start:
                raise ScheduleGap(f"segment [{s.t_start}, {s.t_end}] has non-positive length")
        for a, b in zip(segs, segs[1:]):
            if abs(b.t_start - a.t_end) > 1e-9 * max(1.0, abs(a.t_end)):
                raise ScheduleGap(f"segments do not join at t={a.t_end} / {b.t_start}")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, couplings: CouplingSet, delta: float, t0: float, t1: float) -> "CouplingSchedule":
        return cls(((t0, t1, couplings, delta),))

    @property
    def span(self):
        return self.segments[0].t_start, self.segments[-1].t_end

    def covers(self, t0: float, t1: float) -> bool:
        a, b = self.span
        tol = 1e-9 * max(1.0, abs(a), abs(b))
        return abs(a - t0) <= tol and abs(b - t1) <= tol

    def switch_times(self) -> tuple:
        return tuple(s.t_start for s in self.segments[1:])


def symmetric_phases_ok(phases: Sequence[float], theta: float, tol: float = 1e-9) -> bool:
    """True when explicit phases reproduce the requested relative phase."""
    a1, a2, b1, b2 = phases
    return abs(wrap_angle((a1 - a2) - (b1 - b2) - theta)) < tol
