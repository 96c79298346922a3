"""Space-time integration of the probe/coherence system over a 1-D slab.

Method of lines in the retarded frame: the four coherences live on a uniform
z grid and are advanced with classical RK4.  Inside every RK stage the two
probe envelopes are rebuilt from the entrance values by trapezoidal
integration of the propagation equation; the phase-mismatch term is removed
exactly with an integrating factor, so only the atomic source is discretized.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm

from . import _kernel
from .errors import EmptyRecord, InvalidParams, ScheduleGap, UnstableStep, WeakProbeWarning
from .model import (AtomicState, CouplingSchedule, CouplingSet, MediumParams, ProbePair,
                    Segment, generator)

log = logging.getLogger(__name__)

UNSTABLE_LIMIT = 1e6
SETTLE_TIME = 40.0  # optical coherences decay as exp(-t/2); 40/Gamma is e^-20 per check
QUIET_INPUT = 1e-12
AUTO_SNAPSHOTS = 400


@dataclass(frozen=True)
class GridSpec:
    """Discretization.  ``snapshot_every=0`` picks a stride giving ~400 snapshots.

    With ``fast_storage`` an off segment is integrated until the optical
    coherences have decayed, after which the ground coherences are advanced
    in closed form (they no longer couple to anything).
    """

    n_z: int = 200
    dt: float = 0.05
    t_span: tuple | None = None
    snapshot_every: int = 0
    fast_storage: bool = True

    def __post_init__(self):
        if int(self.n_z) != self.n_z or self.n_z < 16:
            raise InvalidParams(f"n_z must be an integer >= 16, got {self.n_z}")
        if not (0 < self.dt <= 0.1):
            raise InvalidParams(f"dt must be in (0, 0.1], got {self.dt}")
        if self.t_span is not None:
            t0, t1 = self.t_span
            if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
                raise InvalidParams(f"bad t_span {self.t_span}")
        if self.snapshot_every < 0:
            raise InvalidParams("snapshot_every must be >= 0")

    def with_span(self, t0, t1) -> "GridSpec":
        return replace(self, t_span=(float(t0), float(t1)))


def _channel_index(channel) -> int:
    ch = str(channel).upper()
    if ch not in ("A", "B"):
        raise InvalidParams(f"channel must be 'A' or 'B', got {channel!r}")
    return 0 if ch == "A" else 1


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian probe envelope, optionally with a flat top of length ``plateau``.

    Amplitude is ``peak * exp(-4 x^2 / width_e2^2)`` where x is the distance
    from the plateau, so the intensity e^-2 full width is ``width_e2``.
    """

    peak: complex = 0.01
    center: float = 0.0
    width_e2: float = 94.0
    channel: str = "A"
    plateau: float = 0.0

    def __post_init__(self):
        if not self.width_e2 > 0:
            raise InvalidParams(f"width_e2 must be > 0, got {self.width_e2}")
        if self.plateau < 0:
            raise InvalidParams("plateau must be >= 0")
        _channel_index(self.channel)
        object.__setattr__(self, "peak", complex(self.peak))

    @property
    def index(self) -> int:
        return _channel_index(self.channel)

    @property
    def max_abs(self) -> float:
        return abs(self.peak)

    @property
    def support(self):
        """Interval outside which the intensity is below e^-18 of the peak."""
        h = self.plateau / 2 + 1.5 * self.width_e2
        return self.center - h, self.center + h

    def envelope(self, t):
        x = np.maximum(np.abs(np.asarray(t, dtype=float) - self.center) - self.plateau / 2, 0.0)
        return self.peak * np.exp(-4 * x**2 / self.width_e2**2)

    def energy(self) -> float:
        return abs(self.peak) ** 2 * (self.plateau + self.width_e2 * math.sqrt(math.pi / 8))

    def scaled(self, s) -> "PulseSpec":
        return replace(self, peak=self.peak * s)


@dataclass(frozen=True)
class SampledInput:
    """Entrance field given as samples; linear interpolation, zero outside."""

    t: np.ndarray
    values: np.ndarray
    channel: str = "A"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise InvalidParams("sampled input needs matching 1-D time and value arrays")
        if np.any(np.diff(t) <= 0):
            raise InvalidParams("sample times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        _channel_index(self.channel)

    @property
    def index(self) -> int:
        return _channel_index(self.channel)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def support(self):
        return float(self.t[0]), float(self.t[-1])

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        re = np.interp(t, self.t, self.values.real, left=0.0, right=0.0)
        im = np.interp(t, self.t, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FieldRecord:
    """Result of one propagation.

    ``t_trace``/``input_trace``/``output_trace`` are the entrance and exit
    fields (shape (n, 2), channels A and B) at every integrator step.
    ``t_grid``/``eps``/``coh`` are snapshots of the full z profiles, taken at
    trace samples ``snapshot_index``.
    """

    z_grid: np.ndarray
    t_grid: np.ndarray
    eps: np.ndarray
    coh: np.ndarray
    t_trace: np.ndarray
    input_trace: np.ndarray
    output_trace: np.ndarray
    snapshot_index: np.ndarray
    switch_times: tuple = ()

    def probe(self, k: int) -> ProbePair:
        return ProbePair(self.eps[k, 0], self.eps[k, 1])

    def state(self, k: int) -> AtomicState:
        return AtomicState.from_array(self.coh[k])


class SystemSegment(NamedTuple):
    t_start: float
    t_end: float
    generator: np.ndarray


def _entrance(inputs, t):
    e = np.zeros((t.size, 2), dtype=complex)
    for p in inputs:
        e[:, p.index] += p.envelope(t)
    return e


def _check_resolution(g, dt):
    om = np.abs(2 * g[:2, 2:])
    det = np.abs(np.imag(np.diag(g)[2:]))
    fastest = max(1.0, float(om.max()), float(det.max()))
    if dt > 0.1 / fastest * (1 + 1e-12):
        raise InvalidParams(f"dt={dt} does not resolve the fastest rate {fastest:.4g}; need dt <= {0.1 / fastest:.4g}")


def _is_off(g) -> bool:
    return not (np.any(g[:2, 2:]) or np.any(g[2:, :2]))


def propagate_system(inputs: Sequence, segments: Sequence[SystemSegment], medium: MediumParams,
                     grid: GridSpec) -> FieldRecord:
    """Integrate with explicit local generators per time segment.

    This is the engine behind :func:`propagate`; it also accepts generators
    written in a transformed ground-coherence basis.
    """
    segments = [SystemSegment(float(a), float(b), np.asarray(g, dtype=complex)) for a, b, g in segments]
    if not segments:
        raise ScheduleGap("no segments")
    for s, s2 in zip(segments, segments[1:]):
        if abs(s2.t_start - s.t_end) > 1e-9 * max(1.0, abs(s.t_end)):
            raise ScheduleGap(f"segments do not join at t={s.t_end}")
    nz = int(grid.n_z)
    z = np.linspace(0.0, 1.0, nz)
    dz = z[1] - z[0]
    ph = np.exp(0.5j * medium.dk_L * z)
    w = 0.5j * medium.alpha * 0.5 * dz
    inputs = list(inputs)
    in_max = max([p.max_abs for p in inputs], default=0.0)

    steps = [max(1, math.ceil((s.t_end - s.t_start) / grid.dt - 1e-9)) for s in segments]
    stride = grid.snapshot_every or max(1, sum(steps) // AUTO_SNAPSHOTS)

    rho = np.zeros((4, nz), dtype=complex)
    buf = np.empty((2, nz), dtype=complex)
    t_parts, in_parts, out_parts = [], [], []
    snap_t, snap_eps, snap_coh, snap_idx = [], [], [], []
    n_trace = 0

    def snapshot(t, e):
        _kernel.fields(rho, e[0], e[1], ph, w, buf)
        snap_t.append(t)
        snap_eps.append(buf.copy())
        snap_coh.append(rho.copy())
        snap_idx.append(n_trace)

    warned = False
    for seg, n in zip(segments, steps):
        g = np.ascontiguousarray(seg.generator)
        h = (seg.t_end - seg.t_start) / n
        _check_resolution(g, h)
        ts = seg.t_start + 0.5 * h * np.arange(2 * n + 1)
        ein = _entrance(inputs, ts)
        off = _is_off(g)
        if not off and not warned and in_max > 0:
            om = np.abs(2 * g[:2, 2:])
            om_min = om[om > 0].min()
            if np.abs(ein).max() > 0.1 * om_min:
                warnings.warn(f"probe amplitude {np.abs(ein).max():.3g} is not small against coupling {om_min:.3g}",
                              WeakProbeWarning, stacklevel=2)
                warned = True
        # largest remaining entrance amplitude from each half step onwards
        tail_max = np.maximum.accumulate(np.abs(ein).max(axis=1)[::-1])[::-1]
        i = 0
        while i < n:
            c = min(stride, n - i)
            tr = np.empty((c, 2), dtype=complex)
            big = _kernel.run_segment(rho, ein[2 * i: 2 * (i + c) + 1], h, g, ph, w, tr)
            if not big <= UNSTABLE_LIMIT:
                raise UnstableStep(f"state magnitude {big:.3g} at t={seg.t_start + (i + c) * h:.6g}; reduce dt")
            t_parts.append(seg.t_start + h * np.arange(i, i + c))
            in_parts.append(ein[2 * i: 2 * (i + c): 2])
            out_parts.append(tr)
            n_trace += c
            i += c
            t_now = seg.t_start + i * h
            if i < n:
                snapshot(t_now, ein[2 * i])
            if (off and grid.fast_storage and i < n and i * h >= SETTLE_TIME
                    and tail_max[2 * i] <= QUIET_INPUT * in_max):
                opt = np.abs(rho[:2]).max()
                gnd = np.abs(rho[2:]).max()
                if opt <= 1e-14 * gnd or (gnd == 0 and opt == 0):
                    # record the field where the closed-form jump starts
                    _kernel.fields(rho, ein[2 * i, 0], ein[2 * i, 1], ph, w, buf)
                    t_parts.append(np.array([t_now]))
                    in_parts.append(ein[2 * i: 2 * i + 1])
                    out_parts.append(buf[:, -1][None, :].copy())
                    n_trace += 1
                    rho[:2] = 0
                    rho[2:] = expm(g[2:, 2:] * (seg.t_end - t_now)) @ rho[2:]
                    log.debug("closed-form storage from t=%.6g to %.6g", t_now, seg.t_end)
                    break
        snapshot(seg.t_end, ein[-1])

    # closing sample at the final time
    t_end = segments[-1].t_end
    e_last = _entrance(inputs, np.array([t_end]))[0]
    _kernel.fields(rho, e_last[0], e_last[1], ph, w, buf)
    t_parts.append(np.array([t_end]))
    in_parts.append(e_last[None, :])
    out_parts.append(buf[:, -1][None, :].copy())
    # the snapshot taken at the end of the last segment coincides with this sample
    snap_idx[-1] = n_trace

    return FieldRecord(
        z_grid=_frozen(z),
        t_grid=_frozen(np.array(snap_t)),
        eps=_frozen(np.array(snap_eps)),
        coh=_frozen(np.array(snap_coh)),
        t_trace=_frozen(np.concatenate(t_parts)),
        input_trace=_frozen(np.concatenate(in_parts)),
        output_trace=_frozen(np.concatenate(out_parts)),
        snapshot_index=_frozen(np.array(snap_idx)),
        switch_times=tuple(s.t_start for s in segments[1:]),
    )


def propagate(inputs: Sequence, schedule: CouplingSchedule, medium: MediumParams,
              grid: GridSpec) -> FieldRecord:
    """Propagate probe pulses through the slab under a coupling schedule."""
    if grid.t_span is not None and not schedule.covers(*grid.t_span):
        raise ScheduleGap(f"schedule spans {schedule.span}, grid asks for {grid.t_span}")
    segs = [SystemSegment(s.t_start, s.t_end, generator(s.couplings, s.delta, medium))
            for s in schedule.segments]
    return propagate_system(inputs, segs, medium, grid)


def output_energy(rec: FieldRecord, channel, t_from: float | None = None,
                  t_to: float | None = None) -> float:
    """Exit energy of one channel over [t_from, t_to] divided by the total entrance energy."""
    k = _channel_index(channel)
    t = rec.t_trace
    if t.size < 2:
        raise EmptyRecord("record has fewer than two trace samples")
    e_in = float(np.sum([trapezoid(np.abs(rec.input_trace[:, c]) ** 2, t) for c in (0, 1)]))
    if not e_in > 0:
        raise EmptyRecord("record has no input energy")
    p = np.abs(rec.output_trace[:, k]) ** 2
    mask = np.ones(t.size, dtype=bool)
    if t_from is not None:
        mask &= t >= t_from - 1e-9
    if t_to is not None:
        mask &= t <= t_to + 1e-9
    if mask.sum() < 2:
        return 0.0
    return float(trapezoid(p[mask], t[mask]) / e_in)


def transmissions(rec: FieldRecord, **kw):
    return output_energy(rec, "A", **kw), output_energy(rec, "B", **kw)


def slow_delay(couplings: CouplingSet, medium: MediumParams) -> float:
    """Largest per-channel EIT delay alpha / sum|Omega|^2 (0 if uncoupled)."""
    W2 = np.sum(np.abs(couplings.matrix) ** 2, axis=1)
    d = [medium.alpha / x for x in W2 if x > 0]
    return max(d, default=0.0)


def auto_window(inputs: Sequence, couplings: CouplingSet, medium: MediumParams):
    """Time span covering entry of all pulses and exit of their delayed, broadened copies."""
    lo = min(p.support[0] for p in inputs)
    hi = max(p.support[1] for p in inputs)
    width = max(getattr(p, "width_e2", 0.0) for p in inputs)
    td = slow_delay(couplings, medium)
    return lo, hi + 0.5 * width + 4 * td + 50.0


def run_constant(inputs: Sequence, couplings: CouplingSet, delta: float, medium: MediumParams,
                 grid: GridSpec | None = None) -> FieldRecord:
    """Convenience: constant couplings over an automatic (or the grid's) window."""
    grid = grid or GridSpec()
    span = grid.t_span or auto_window(inputs, couplings, medium)
    sched = CouplingSchedule.constant(couplings, delta, *span)
    return propagate(inputs, sched, medium, grid.with_span(*span))


@dataclass(frozen=True)
class StorageEnergies:
    """Retrieved (after switch-on) and leaked (before switch-off) energies per channel."""

    E_A: float
    E_B: float
    leak_A: float
    leak_B: float
    t_off: float
    t_on: float

    @property
    def total(self) -> float:
        return self.E_A + self.E_B


def entry_time(inputs: Sequence, fraction: float = 0.95) -> float:
    """First time at which ``fraction`` of the total entrance energy has arrived."""
    lo = min(p.support[0] for p in inputs)
    hi = max(p.support[1] for p in inputs)
    t = np.linspace(lo, hi, 20001)
    p = np.sum(np.abs(_entrance(inputs, t)) ** 2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(t))])
    if cum[-1] <= 0:
        raise InvalidParams("inputs carry no energy")
    return float(np.interp(fraction * cum[-1], cum, t))


def store_and_retrieve(inputs, t_off: float | None, t_s, delta_store, base: CouplingSet,
                       medium: MediumParams, grid: GridSpec | None = None, *, delta_on: float = 0.0,
                       t_read: float | None = None):
    """Write, hold with couplings off, and read back.

    ``t_s`` and ``delta_store`` may be sequences of equal length, giving a
    storage interval made of consecutive sub-intervals with their own
    detuning.  ``delta_on`` is the detuning while the couplings are on.
    Returns ``(FieldRecord, StorageEnergies)``.
    """
    if not isinstance(inputs, (list, tuple)):
        inputs = [inputs]
    grid = grid or GridSpec()
    t_list = np.atleast_1d(np.asarray(t_s, dtype=float))
    d_list = np.broadcast_to(np.atleast_1d(np.asarray(delta_store, dtype=float)), t_list.shape)
    if np.any(t_list < 0):
        raise InvalidParams("storage time must be >= 0")
    if t_off is None:
        t_off = entry_time(inputs)
    t0 = min(p.support[0] for p in inputs)
    if not t_off > t0:
        raise InvalidParams("t_off must come after the start of the input")
    td = slow_delay(base, medium)
    if t_read is None:
        t_read = 4 * td + 150.0
    segs = [(t0, t_off, base, delta_on)]
    t = t_off
    for ts, ds in zip(t_list, d_list):
        if ts > 0:
            segs.append((t, t + ts, CouplingSet.off(), float(ds)))
            t += ts
    t_on = t
    segs.append((t_on, t_on + t_read, base, delta_on))
    sched = CouplingSchedule(tuple(Segment(*s) for s in segs))
    rec = propagate(inputs, sched, medium, grid.with_span(*sched.span))
    en = StorageEnergies(
        E_A=output_energy(rec, "A", t_from=t_on),
        E_B=output_energy(rec, "B", t_from=t_on),
        leak_A=output_energy(rec, "A", t_to=t_off),
        leak_B=output_energy(rec, "B", t_to=t_off),
        t_off=float(t_off), t_on=float(t_on))
    return rec, en


def retrieved_amplitudes(rec: FieldRecord, t_from: float):
    """Complex (A, B) amplitudes of the dominant temporal mode after ``t_from``.

    Normalized so that |a|^2 + |b|^2 equals the retrieved energy fraction.
    The overall phase is fixed by making the larger component real positive.
    """
    t = rec.t_trace
    mask = t >= t_from - 1e-9
    X = rec.output_trace[mask]
    tt = t[mask]
    wts = np.gradient(tt) if tt.size > 1 else np.ones(1)
    e_in = float(np.sum([trapezoid(np.abs(rec.input_trace[:, c]) ** 2, t) for c in (0, 1)]))
    if not e_in > 0:
        raise EmptyRecord("record has no input energy")
    Y = X * np.sqrt(wts / e_in)[:, None]
    _, s, vh = np.linalg.svd(Y, full_matrices=False)
    amp = s[0] * vh[0].conj()
    k = int(np.argmax(np.abs(amp)))
    if abs(amp[k]) > 0:
        amp = amp * np.exp(-1j * np.angle(amp[k]))
    return complex(amp[0]), complex(amp[1])
