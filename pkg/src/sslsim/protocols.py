"""Scripted numerical experiments: spectra, phase scans, storage and interferometry."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import calibration
from .errors import FlatLandscape, InsufficientCycles, InvalidParams, SSLError
from .model import CouplingSet, MediumParams, UnitSystem
from .results import ScanResult
from .solver import (GridSpec, PulseSpec, StorageEnergies, auto_window, retrieved_amplitudes,
                     run_constant, slow_delay, store_and_retrieve, transmissions)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Everything a protocol needs besides its own scan parameters."""

    medium: MediumParams
    couplings: CouplingSet
    pulse: PulseSpec = field(default_factory=PulseSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    delta: float = 0.0
    units: UnitSystem = field(default_factory=UnitSystem)
    threads: int | None = None

    def replace(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def snapshot(self) -> dict:
        return {"alpha": self.medium.alpha, "gamma1": self.medium.gamma1, "gamma2": self.medium.gamma2,
                "dk_L": self.medium.dk_L,
                "omega": [[w.real, w.imag] for w in self.couplings.omega],
                "pulse_width": self.pulse.width_e2, "pulse_plateau": self.pulse.plateau,
                "n_z": self.grid.n_z, "dt": self.grid.dt}


@dataclass(frozen=True)
class QubitAmplitudes:
    a: complex
    b: complex

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-12:
            raise InvalidParams(f"|a|^2 + |b|^2 = {abs(a) ** 2 + abs(b) ** 2!r}, must be 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_ratio(cls, ratio: float, phase: float = 0.0) -> "QubitAmplitudes":
        """Amplitudes with energy ratio |a|^2/|b|^2 = ratio."""
        if not ratio >= 0:
            raise InvalidParams("ratio must be >= 0")
        a = math.sqrt(ratio / (1 + ratio))
        b = math.sqrt(1 / (1 + ratio)) * complex(math.cos(phase), math.sin(phase))
        return cls(a, b)


@dataclass(frozen=True)
class TwoColorResult:
    amplitudes: tuple
    energy_ratio: float
    energies: StorageEnergies
    record: object = field(repr=False, default=None)


def _pmap(fn: Callable, items, threads: int | None, label: str):
    items = list(items)

    def call(x):
        try:
            return fn(x)
        except SSLError as e:
            raise type(e)(f"{label}={x:.6g}: {e}") from e

    n = threads if threads is not None else (os.cpu_count() or 1)
    if n <= 1 or len(items) <= 1:
        return [call(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(call, items))


def _axis(values):
    ax = np.unique(np.asarray(values, dtype=float))
    if ax.size == 0:
        raise InvalidParams("empty scan list")
    return ax


def scan_delta(config: SimConfig, deltas: Sequence[float], threads: int | None = None) -> ScanResult:
    """Energy transmissions (T_A, T_B) of the configured pulse versus two-photon detuning."""
    ax = _axis(deltas)
    span = config.grid.t_span or auto_window([config.pulse], config.couplings, config.medium)
    grid = config.grid.with_span(*span)

    def one(d):
        rec = run_constant([config.pulse], config.couplings, float(d), config.medium, grid)
        return transmissions(rec)

    res = _pmap(one, ax, threads if threads is not None else config.threads, "delta")
    T = np.array(res)
    return ScanResult("delta", ax, T[:, 0], T[:, 1], meta={"protocol": "scan_delta", **config.snapshot()})


def theta_couplings(base: CouplingSet, theta: float) -> CouplingSet:
    """Keep the magnitudes of ``base``, set phases (theta - pi/2, 0, 0, pi/2)."""
    return CouplingSet.from_polar(base.magnitudes, (theta - math.pi / 2, 0.0, 0.0, math.pi / 2))


def scan_theta(config: SimConfig, thetas: Sequence[float], delta: float,
               threads: int | None = None) -> ScanResult:
    ax = _axis(thetas)
    span = config.grid.t_span or auto_window([config.pulse], config.couplings, config.medium)
    grid = config.grid.with_span(*span)

    def one(th):
        rec = run_constant([config.pulse], theta_couplings(config.couplings, th), float(delta), config.medium, grid)
        return transmissions(rec)

    T = np.array(_pmap(one, ax, threads if threads is not None else config.threads, "theta"))
    return ScanResult("theta", ax, T[:, 0], T[:, 1],
                      meta={"protocol": "scan_theta", "delta": float(delta), **config.snapshot()})


@dataclass(frozen=True)
class ThetaTuning:
    theta: float
    T_B: float
    n_eval: int
    coarse: ScanResult | None = None


def tune_theta(config: SimConfig, theta0: float | None = None, n_coarse: int = 24,
               xtol: float = 1e-5, threads: int | None = None) -> ThetaTuning:
    """Relative phase minimizing the channel-B output at delta = 0.

    Without ``theta0`` a coarse scan over [0, 2 pi) brackets the minimum;
    with it, a downhill bracket search starts there.  Golden-section search
    then refines the bracket.
    """
    span = config.grid.t_span or auto_window([config.pulse], config.couplings, config.medium)
    grid = config.grid.with_span(*span)
    n_eval = 0

    def tb(th):
        nonlocal n_eval
        n_eval += 1
        rec = run_constant([config.pulse], theta_couplings(config.couplings, th), 0.0, config.medium, grid)
        return transmissions(rec)[1]

    coarse = None
    if theta0 is None:
        ths = 2 * math.pi * np.arange(n_coarse) / n_coarse
        vals = np.array(_pmap(tb, ths, threads if threads is not None else config.threads, "theta"))
        coarse = ScanResult("theta", ths, np.zeros_like(vals), vals, meta={"protocol": "tune_theta"})
        if np.ptp(vals) < 1e-10:
            raise FlatLandscape(f"channel-B output varies by {np.ptp(vals):.3g} over theta")
        k = int(np.argmin(vals))
        h = 2 * math.pi / n_coarse
        bracket = (ths[k] - h, ths[k], ths[k] + h)
    else:
        probe = [tb(theta0 + s) for s in (-0.3, 0.0, 0.3)]
        if np.ptp(probe) < 1e-10:
            raise FlatLandscape("channel-B output does not depend on theta near the start point")
        bracket = (theta0, theta0 + 0.1)
    res = minimize_scalar(tb, bracket=bracket, method="golden", tol=xtol)
    theta = float(res.x) % (2 * math.pi)
    return ThetaTuning(theta=theta, T_B=float(res.fun), n_eval=n_eval, coarse=coarse)


def interferometer_delta_scan(t_s: float, deltas: Sequence[float], config: SimConfig, *,
                              detune_on: bool = True, t_off: float | None = None,
                              threads: int | None = None, fit: bool = True) -> ScanResult:
    """Retrieved energies after storage time ``t_s`` versus detuning.

    With ``detune_on`` the detuning also acts while the couplings are on, so
    the rotation angle is delta * (t_s + t_d).
    """
    ax = _axis(deltas)

    def one(d):
        _, en = store_and_retrieve(config.pulse, t_off, t_s, float(d), config.couplings, config.medium,
                                   config.grid, delta_on=float(d) if detune_on else 0.0)
        return en.E_A, en.E_B

    E = np.array(_pmap(one, ax, threads if threads is not None else config.threads, "delta"))
    meta = {"protocol": "interferometer_delta_scan", "t_s": float(t_s), "detune_on": detune_on,
            "t_delay": slow_delay(config.couplings, config.medium), **config.snapshot()}
    scan = ScanResult("delta", ax, E[:, 0], E[:, 1], meta=meta)
    if fit:
        try:
            scan = replace(scan, fit=calibration.fit_oscillation_delta(scan))
        except InsufficientCycles as e:
            log.warning("no period fit: %s", e)
    return scan


def interferometer_time_scan(delta: float, ts_list: Sequence[float], config: SimConfig, *,
                             detune_on: bool = True, t_off: float | None = None,
                             threads: int | None = None, fit: bool = True) -> ScanResult:
    """Retrieved energies versus storage time at fixed detuning."""
    ax = _axis(ts_list)
    if np.any(ax < 0):
        raise InvalidParams("storage times must be >= 0")

    def one(ts):
        _, en = store_and_retrieve(config.pulse, t_off, float(ts), float(delta), config.couplings, config.medium,
                                   config.grid, delta_on=float(delta) if detune_on else 0.0)
        return en.E_A, en.E_B

    E = np.array(_pmap(one, ax, threads if threads is not None else config.threads, "t_s"))
    meta = {"protocol": "interferometer_time_scan", "delta": float(delta), "detune_on": detune_on,
            **config.snapshot()}
    scan = ScanResult("t_s", ax, E[:, 0], E[:, 1], meta=meta)
    if fit:
        try:
            scan = replace(scan, fit=calibration.fit_oscillation_time(scan))
        except InsufficientCycles as e:
            log.warning("no period fit: %s", e)
    return scan


def two_color_storage(q: QubitAmplitudes, t_s, delta_store, config: SimConfig, *,
                      t_off: float | None = None) -> TwoColorResult:
    """Store a two-frequency pulse pair with amplitudes (a, b) sharing one envelope.

    ``t_s``/``delta_store`` may be sequences to chain storage sub-intervals.
    Returns the dominant-mode retrieved amplitudes and the energy ratio E_A/E_B.
    """
    if not isinstance(q, QubitAmplitudes):
        q = QubitAmplitudes(*q)
    base = replace(config.pulse, channel="A")
    pulses = [base.scaled(q.a), replace(base.scaled(q.b), channel="B")]
    pulses = [p for p in pulses if p.peak != 0]
    if t_off is None:
        from .solver import entry_time
        t_off = entry_time([base])
    rec, en = store_and_retrieve(pulses, t_off, t_s, delta_store, config.couplings, config.medium, config.grid)
    amps = retrieved_amplitudes(rec, en.t_on)
    ratio = en.E_A / en.E_B if en.E_B > 0 else math.inf
    return TwoColorResult(amplitudes=amps, energy_ratio=ratio, energies=en, record=rec)
