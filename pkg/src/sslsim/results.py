"""Result containers shared by protocols, calibration and I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .model import UnitSystem

# how each scan axis is shown in SI units
AXIS_SI = {
    "delta": ("kHz", lambda u, x: u.freq_to_kHz(x)),
    "t_s": ("us", lambda u, x: u.time_to_us(x)),
    "theta": ("rad", lambda u, x: x),
}


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit or a bare minimization.

    ``params``/``sigma`` map parameter names to estimates and one-sigma
    uncertainties.  ``upper_limits`` holds parameters that were consistent
    with zero and are reported as a bound instead.
    """

    x: np.ndarray
    params: dict
    sigma: dict
    rss: float
    n_iter: int
    n_eval: int
    converged: bool
    degenerate: bool = False
    grad_norm: float = float("nan")
    message: str = ""
    upper_limits: dict = field(default_factory=dict)
    n_data: int = 0

    def to_json(self) -> dict:
        def clean(d):
            return {k: (None if not math.isfinite(v) else float(v)) for k, v in d.items()}
        out = {"params": clean(self.params), "sigma": clean(self.sigma), "rss": float(self.rss),
               "converged": bool(self.converged), "n_iter": int(self.n_iter), "n_eval": int(self.n_eval),
               "degenerate": bool(self.degenerate), "message": self.message}
        if self.upper_limits:
            out["upper_limits"] = clean(self.upper_limits)
        return out


@dataclass(frozen=True)
class ScanResult:
    """Per-channel transmissions (or retrieved energies) along one scan axis."""

    axis_name: str
    axis: np.ndarray
    T_A: np.ndarray
    T_B: np.ndarray
    meta: dict = field(default_factory=dict)
    fit: FitResult | None = None

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float)
        a = np.asarray(self.T_A, dtype=float)
        b = np.asarray(self.T_B, dtype=float)
        if ax.ndim != 1 or a.shape != ax.shape or b.shape != ax.shape:
            raise InvalidParams("scan columns must be 1-D and of equal length")
        if ax.size > 1 and np.any(np.diff(ax) <= 0):
            raise InvalidParams("scan axis must be strictly increasing")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidParams("scan values must be finite")
        for k, v in (("axis", ax), ("T_A", a), ("T_B", b)):
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    def axis_SI(self, units: UnitSystem | None = None):
        units = units or UnitSystem()
        label, conv = AXIS_SI.get(self.axis_name, ("", lambda u, x: x))
        return label, np.asarray(conv(units, self.axis), dtype=float)

    def scaled(self, s: float) -> "ScanResult":
        return ScanResult(self.axis_name, self.axis, self.T_A * s, self.T_B * s, dict(self.meta))

    def swapped(self) -> "ScanResult":
        return ScanResult(self.axis_name, self.axis, self.T_B, self.T_A, dict(self.meta))
