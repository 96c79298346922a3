"""Parameter recovery: simplex minimization, slow-light trace fits and oscillation fits."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize as _scipy_minimize

from .errors import (InsufficientCycles, InvalidParams, MaxIterationsWarning, Unidentifiable)
from .model import CouplingSet, MediumParams, UnitSystem
from .results import FitResult, ScanResult
from .solver import GridSpec, SampledInput, run_constant

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# bounded Nelder-Mead

@dataclass(frozen=True)
class MinimizeOptions:
    xatol: float = 1e-6
    fatol: float = 1e-10
    maxiter: int = 2000
    initial_step: Sequence[float] | None = None
    hessian: bool = True
    hess_step: float = 1e-3
    n_data: int | None = None
    names: Sequence[str] | None = None
    gtol: float | None = None


def _fold(y, lo, hi):
    """Map an unconstrained coordinate into [lo, hi] by mirror reflection."""
    if lo is None and hi is None:
        return y
    if hi is None:
        return lo + abs(y - lo)
    if lo is None:
        return hi - abs(hi - y)
    span = hi - lo
    u = (y - lo) % (2 * span)
    return lo + (u if u <= span else 2 * span - u)


def _normalize_bounds(bounds, n):
    if bounds is None:
        return [(None, None)] * n
    out = []
    for b in bounds:
        lo, hi = (None, None) if b is None else b
        lo = None if lo is None or lo == -np.inf else float(lo)
        hi = None if hi is None or hi == np.inf else float(hi)
        if lo is not None and hi is not None and not hi > lo:
            raise InvalidParams(f"inconsistent bounds {b}")
        out.append((lo, hi))
    if len(out) != n:
        raise InvalidParams("one bound pair per parameter is required")
    return out


def _hessian(f, x, h, bounds, f0):
    """Finite-difference gradient and Hessian; stencils shift inward at bounds."""
    n = x.size
    # offset direction per coordinate: +1 when a central stencil would leave the box
    side = np.zeros(n)
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and x[i] - h[i] < lo:
            side[i] = 1
        elif hi is not None and x[i] + h[i] > hi:
            side[i] = -1
    cache = {}

    def F(*steps):
        key = tuple(sorted(steps))
        if key not in cache:
            xx = x.copy()
            for i, s in steps:
                xx[i] += s * h[i]
            cache[key] = f(xx) if steps else f0
        return cache[key]

    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        if side[i] == 0:
            fp, fm = F((i, 1)), F((i, -1))
            g[i] = (fp - fm) / (2 * h[i])
            H[i, i] = (fp - 2 * f0 + fm) / h[i] ** 2
        else:
            s = side[i]
            f1, f2 = F((i, s)), F((i, 2 * s))
            g[i] = s * (-3 * f0 + 4 * f1 - f2) / (2 * h[i])
            H[i, i] = (f2 - 2 * f1 + f0) / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            if side[i] == 0 and side[j] == 0:
                v = (F((i, 1), (j, 1)) - F((i, 1), (j, -1)) - F((i, -1), (j, 1)) + F((i, -1), (j, -1)))
                H[i, j] = v / (4 * h[i] * h[j])
            else:
                si = side[i] or 1
                sj = side[j] or 1
                v = F((i, si), (j, sj)) - F((i, si)) - F((j, sj)) + f0
                H[i, j] = v / (si * sj * h[i] * h[j])
            H[j, i] = H[i, j]
    return g, H


def minimize(objective: Callable, x0, bounds=None, options: MinimizeOptions | None = None) -> FitResult:
    """Nelder-Mead simplex with mirror-reflected bounds.

    The simplex search itself is scipy's; bounds are imposed by folding the
    unconstrained coordinates back into the box, which keeps the search
    derivative-free and deterministic for fixed ``x0`` and options.
    """
    opt = options or MinimizeOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    bnds = _normalize_bounds(bounds, n)
    for v, (lo, hi) in zip(x0, bnds):
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise InvalidParams(f"x0 component {v} outside bounds ({lo}, {hi})")
    names = list(opt.names) if opt.names is not None else [f"x{i}" for i in range(n)]

    def to_x(y):
        return np.array([_fold(yi, lo, hi) for yi, (lo, hi) in zip(y, bnds)])

    seen = []
    n_eval = 0

    def fy(y):
        nonlocal n_eval
        n_eval += 1
        v = float(objective(to_x(y)))
        if not math.isfinite(v):
            return math.inf
        seen.append(v)
        return v

    f_start = float(objective(x0))
    if not math.isfinite(f_start):
        raise InvalidParams("objective is not finite at x0")

    if opt.initial_step is not None:
        step = np.broadcast_to(np.asarray(opt.initial_step, dtype=float), (n,))
    else:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    sim = np.vstack([x0] + [x0 + step[i] * np.eye(n)[i] for i in range(n)])

    res = _scipy_minimize(fy, x0, method="Nelder-Mead",
                          options=dict(xatol=opt.xatol, fatol=opt.fatol, maxiter=opt.maxiter,
                                       maxfev=max(opt.maxiter * (n + 1) * 2, 1000),
                                       initial_simplex=sim))
    x = to_x(res.x)
    fbest = float(res.fun)
    hit_cap = res.nit >= opt.maxiter or res.status in (1, 2)
    degenerate = len(seen) > n and float(np.ptp(seen)) == 0.0

    grad = np.full(n, np.nan)
    sig = np.full(n, np.nan)
    H = None
    if opt.hessian and not degenerate:
        scale = np.maximum(np.abs(x), np.abs(step))
        h = opt.hess_step * np.where(scale > 0, scale, 1.0)
        grad, H = _hessian(lambda xx: float(objective(xx)), x.copy(), h, bnds, fbest)
        # a minimum pressed against a bound may keep a gradient pointing out of the box
        for i, (lo, hi) in enumerate(bnds):
            if lo is not None and x[i] - lo <= h[i] and grad[i] > 0:
                grad[i] = 0.0
            if hi is not None and hi - x[i] <= h[i] and grad[i] < 0:
                grad[i] = 0.0
        if np.all(np.isfinite(H)):
            Hinv = np.linalg.pinv(H)
            if opt.n_data and opt.n_data > n:
                s2 = fbest / (opt.n_data - n)
                cov = 2 * s2 * Hinv
            else:
                cov = 2 * Hinv
            sig = np.sqrt(np.abs(np.diag(cov)))
    grad_norm = float(np.linalg.norm(grad)) if np.all(np.isfinite(grad)) else float("nan")

    msg = str(res.message)
    converged = bool(res.success) and not hit_cap and not degenerate
    if converged and H is not None and math.isfinite(grad_norm):
        # a point within xatol of a smooth minimum has |g| <~ |H| xatol; the
        # finite-difference gradient itself is only good to about |H| h^2
        hn = np.linalg.norm(H, 2)
        gtol = opt.gtol if opt.gtol is not None else 10 * (opt.xatol * hn + opt.fatol / opt.xatol
                                                            + hn * float(np.max(h)) ** 2)
        if grad_norm > gtol:
            converged = False
            msg = f"gradient norm {grad_norm:.3g} above tolerance {gtol:.3g}"
    if hit_cap:
        msg = "MaxIterations: " + msg
        warnings.warn(f"minimize stopped after {res.nit} iterations; returning best point", MaxIterationsWarning,
                      stacklevel=2)
    if degenerate:
        msg = "degenerate: objective constant over all evaluated points"

    return FitResult(x=x, params=dict(zip(names, map(float, x))), sigma=dict(zip(names, map(float, sig))),
                     rss=fbest, n_iter=int(res.nit), n_eval=n_eval + 1, converged=converged,
                     degenerate=degenerate, grad_norm=grad_norm, message=msg, n_data=int(opt.n_data or 0))


def _rescaled(fit: FitResult, scales: dict, rss_scale: float = 1.0, **extra) -> FitResult:
    params = {k: v * scales.get(k, 1.0) for k, v in fit.params.items()}
    sigma = {k: v * scales.get(k, 1.0) for k, v in fit.sigma.items()}
    return replace(fit, params=params, sigma=sigma, rss=fit.rss * rss_scale, **extra)


# --------------------------------------------------------------------------
# slow-light traces

@dataclass(frozen=True)
class TraceData:
    """Measured powers versus time (in units of 1/Gamma)."""

    t: np.ndarray
    P_in_A: np.ndarray
    P_out_A: np.ndarray
    P_out_B: np.ndarray | None = None
    switch_times: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 8 or np.any(np.diff(t) <= 0):
            raise InvalidParams("trace times must be a strictly increasing 1-D array (>= 8 samples)")
        object.__setattr__(self, "t", t)
        for k in ("P_in_A", "P_out_A", "P_out_B"):
            v = getattr(self, k)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            if v.shape != t.shape:
                raise InvalidParams(f"{k} length does not match the time axis")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise InvalidParams(f"{k} must be finite and non-negative")
            object.__setattr__(self, k, v)

    @property
    def uniform_step(self) -> float | None:
        d = np.diff(self.t)
        return float(d.mean()) if np.allclose(d, d.mean(), rtol=1e-9, atol=0) else None


def _moments(t, p):
    w = np.sum(p)
    c = np.sum(t * p) / w
    return c, np.sum((t - c) ** 2 * p) / w


def _forward(data: TraceData, couplings: CouplingSet, medium: MediumParams, grid: GridSpec):
    """Simulated output powers (A, B) on the data time axis, in the data's power units."""
    p_ref = float(data.P_in_A.max())
    amp0 = 1e-3
    src = SampledInput(data.t, amp0 * np.sqrt(data.P_in_A / p_ref), "A")
    step = data.uniform_step
    dt = grid.dt if step is None else step / math.ceil(step / grid.dt - 1e-9)
    g = replace(grid, dt=dt, t_span=(float(data.t[0]), float(data.t[-1])), snapshot_every=10**9)
    rec = run_constant([src], couplings, 0.0, medium, g)
    out = np.abs(rec.output_trace) ** 2 * (p_ref / amp0**2)
    pa = np.interp(data.t, rec.t_trace, out[:, 0])
    pb = np.interp(data.t, rec.t_trace, out[:, 1])
    return pa, pb


def _lambda_couplings(subsystem: int, omega_a: float, omega_b: float = 0.0) -> CouplingSet:
    if subsystem == 1:
        return CouplingSet((omega_a, 0, omega_b, 0))
    if subsystem == 2:
        return CouplingSet((0, omega_a, 0, omega_b))
    raise InvalidParams("subsystem must be 1 or 2")


def _lambda_medium(subsystem: int, alpha: float, gamma: float, dk_L: float = 0.0) -> MediumParams:
    if subsystem == 1:
        return MediumParams(alpha, gamma1=gamma, dk_L=dk_L)
    return MediumParams(alpha, gamma2=gamma, dk_L=dk_L)


def simulate_single_lambda(data: TraceData, alpha, omega, gamma, subsystem=1, grid=None):
    """Single-Lambda output power for the input trace in ``data``."""
    return _forward(data, _lambda_couplings(subsystem, omega), _lambda_medium(subsystem, alpha, gamma),
                    grid or GridSpec())[0]


def simulate_double_lambda(data: TraceData, alpha, omega_a, omega_b, gamma, dk_L, subsystem=1, grid=None):
    """Double-Lambda output powers (A, B) for the channel-A input trace in ``data``."""
    return _forward(data, _lambda_couplings(subsystem, omega_a, omega_b),
                    _lambda_medium(subsystem, alpha, gamma, dk_L), grid or GridSpec())


def single_lambda_guess(data: TraceData):
    """(alpha, omega, gamma) from delay, pulse broadening and energy loss.

    Uses a Gaussian-filter picture of the EIT window: delay tau = alpha/Omega^2
    and intensity-variance growth 2 alpha / Omega^4.
    """
    t = data.t
    c_in, v_in = _moments(t, data.P_in_A)
    c_out, v_out = _moments(t, data.P_out_A)
    tau = c_out - c_in
    e_ratio = trapezoid(data.P_out_A, t) / trapezoid(data.P_in_A, t)
    a = v_out - v_in
    if not (tau > 0 and a > 0):
        raise Unidentifiable("no delayed, broadened output pulse in the trace")
    alpha = 2 * tau**2 / a
    omega = math.sqrt(alpha / tau)
    band = math.sqrt(v_in / (v_in + a))
    gamma = max(0.0, -math.log(max(e_ratio / band, 1e-300)) / (2 * tau))
    return alpha, omega, gamma


FIT_OPTIONS = MinimizeOptions(xatol=1e-4, fatol=1e-7, maxiter=600)


def fit_single_lambda(data: TraceData, fixed: UnitSystem | None = None, *, subsystem: int = 1,
                      grid: GridSpec | None = None, x0=None, options: MinimizeOptions | None = None) -> FitResult:
    """Fit (alpha, omega, gamma) of a single-Lambda slow-light trace.

    Phase mismatch does not enter a single-Lambda output and is not fitted.
    ``gamma`` is reported as an upper limit when it is within two sigma of 0.
    """
    grid = grid or GridSpec(n_z=64, dt=0.1)
    p_out = data.P_out_A
    e_in = trapezoid(data.P_in_A, data.t)
    if trapezoid(p_out, data.t) < 1e-4 * e_in or np.ptp(p_out) <= 0:
        raise Unidentifiable("output trace is flat")
    guess = x0 if x0 is not None else single_lambda_guess(data)
    guess = (min(max(guess[0], 1.0), 400.0), min(max(guess[1], 0.05), 4.0), min(max(guess[2], 0.0), 0.04))
    scales = {"alpha": guess[0], "omega": guess[1], "gamma": 1e-3}
    p_ref = float(data.P_in_A.max())

    def rss(x):
        al, om, ga = x[0] * scales["alpha"], x[1] * scales["omega"], x[2] * scales["gamma"]
        model = simulate_single_lambda(data, al, om, ga, subsystem, grid)
        return float(np.sum(((model - p_out) / p_ref) ** 2))

    xs = np.array([1.0, 1.0, guess[2] / scales["gamma"]])
    bounds = [(0.5 / scales["alpha"], 500 / scales["alpha"]), (0.02 / scales["omega"], 5 / scales["omega"]),
              (0.0, 0.05 / scales["gamma"])]
    f0 = rss(xs)
    norm = f0 if f0 > 0 else 1.0
    opt = options or FIT_OPTIONS
    opt = replace(opt, names=("alpha", "omega", "gamma"), n_data=data.t.size,
                  initial_step=opt.initial_step or (0.05, 0.03, 0.5), fatol=opt.fatol)
    fit = minimize(lambda x: rss(x) / norm, xs, bounds, opt)
    fit = _rescaled(fit, scales, rss_scale=norm)
    ul = {}
    g, sg = fit.params["gamma"], fit.sigma["gamma"]
    if math.isfinite(sg) and g - 2 * sg <= 0:
        ul["gamma"] = g + 2 * sg
    return replace(fit, upper_limits=ul)


def fit_double_lambda(data: TraceData, known, fixed: UnitSystem | None = None, *, subsystem: int = 1,
                      grid: GridSpec | None = None, x0=None, options: MinimizeOptions | None = None) -> FitResult:
    """Fit (omega_B, dk_L) from both output traces of a double-Lambda run.

    ``known`` = (alpha, omega_A, gamma) from the single-Lambda fit.  Only the
    product dk*L is identifiable and it is what is reported; its sign is not
    (both output traces are even in dk*L), so the fit returns |dk*L|.
    """
    if data.P_out_B is None:
        raise Unidentifiable("double-Lambda fit needs the channel-B output trace")
    alpha, omega_a, gamma = known
    grid = grid or GridSpec(n_z=64, dt=0.1)
    p_ref = float(data.P_in_A.max())
    pb = data.P_out_B
    n_base = max(4, data.t.size // 20)
    floor = 3 * float(np.std(pb[:n_base])) + 1e-6 * p_ref
    if pb.max() <= floor:
        raise Unidentifiable("channel-B output is below the noise floor")

    def rss_raw(ob, dk):
        ma, mb = simulate_double_lambda(data, alpha, omega_a, ob, gamma, dk, subsystem, grid)
        return float(np.sum(((ma - data.P_out_A) / p_ref) ** 2 + ((mb - pb) / p_ref) ** 2))

    if x0 is None:
        starts = [(omega_a, dk) for dk in (0.0, 0.3, 0.6, 0.9, 1.2)]
        vals = [rss_raw(*s) for s in starts]
        x0 = starts[int(np.argmin(vals))]
    scales = {"omega_B": omega_a, "dk_L": 1.0}
    xs = np.array([x0[0] / omega_a, x0[1]])
    # outputs are even in dk*L, so only its magnitude is identifiable
    bounds = [(0.02 / omega_a, 5 / omega_a), (0.0, math.pi)]
    norm = rss_raw(*x0) or 1.0
    opt = options or FIT_OPTIONS
    opt = replace(opt, names=("omega_B", "dk_L"), n_data=2 * data.t.size,
                  initial_step=opt.initial_step or (0.03, 0.1))
    fit = minimize(lambda x: rss_raw(x[0] * omega_a, x[1]) / norm, xs, bounds, opt)
    return _rescaled(fit, scales, rss_scale=norm)


# --------------------------------------------------------------------------
# oscillation fits

def _dominant_frequency(x, contrast, k_min, k_max, n=4000):
    """Angular frequency k maximizing the least-squares fit of a*cos(kx) + b*sin(kx) + c."""
    ks = np.linspace(k_min, k_max, n)
    best = (-1.0, k_min, 0.0, 0.0)
    y = contrast - contrast.mean()
    for k in ks:
        A = np.column_stack([np.cos(k * x), np.sin(k * x), np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(A, contrast, rcond=None)
        r = contrast - A @ coef
        score = 1 - np.sum(r**2) / max(np.sum(y**2), 1e-300)
        if score > best[0]:
            best = (score, k, coef[0], coef[1])
    return best


def _contrast(scan: ScanResult):
    s = scan.T_A + scan.T_B
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(s > 0, (scan.T_A - scan.T_B) / np.where(s > 0, s, 1), 0.0)
    return c


def _wrap_half(phi):
    """Wrap into (-pi/2, pi/2] (cos^2 has period pi)."""
    return math.pi / 2 - (math.pi / 2 - phi) % math.pi


OSC_OPTIONS = MinimizeOptions(xatol=1e-8, fatol=1e-14, maxiter=4000)


def fit_oscillation_delta(scan: ScanResult, options: MinimizeOptions | None = None) -> FitResult:
    """Joint fit T_A = E0 env cos^2(phi), T_B = E0 env sin^2(phi), phi = pi delta / P + phi0.

    ``P`` is the period of the energy oscillation along the axis and
    ``env = exp(-curv * delta^2)``.
    """
    x = scan.axis
    if x.size < 6:
        raise InsufficientCycles("too few scan points")
    s = float(np.max(scan.T_A + scan.T_B))
    if not s > 0:
        raise InsufficientCycles("scan carries no signal")
    ya, yb = scan.T_A / s, scan.T_B / s
    span = float(x[-1] - x[0])
    dx = float(np.min(np.diff(x)))
    # contrast = cos(2 phi): angular frequency 2 pi / P along the axis
    score, k, a, b = _dominant_frequency(x, _contrast(scan), 2 * math.pi * 1.2 / span, math.pi / dx)
    P0 = 2 * math.pi / k
    if span < 1.5 * P0:
        raise InsufficientCycles(f"scan covers {span / P0:.2f} periods, need >= 1.5")
    phi0 = _wrap_half(0.5 * math.atan2(-b, a))
    tot = ya + yb
    e0 = float(np.max(tot))
    xs = np.array([1.0, phi0, e0, 0.0])

    def model(p):
        P, ph, E, curv = p[0] * P0, p[1], p[2], p[3] / P0**2
        phi = math.pi * x / P + ph
        env = E * np.exp(-curv * x**2)
        return env * np.cos(phi) ** 2, env * np.sin(phi) ** 2

    def rss(p):
        ma, mb = model(p)
        return float(np.sum((ma - ya) ** 2 + (mb - yb) ** 2))

    opt = replace(options or OSC_OPTIONS, names=("period", "phi0", "E0", "env_curv"), n_data=2 * x.size,
                  initial_step=(0.02, 0.05, 0.02, 0.05))
    bounds = [(0.05, 20.0), (None, None), (0.0, None), (0.0, None)]
    fit = minimize(rss, xs, bounds, opt)
    p = dict(fit.params)
    sg = dict(fit.sigma)
    p["period"] *= P0
    sg["period"] *= P0
    p["env_curv"] /= P0**2
    sg["env_curv"] /= P0**2
    p["E0"] *= s
    sg["E0"] *= s
    p["phi0"] = _wrap_half(p["phi0"])
    if p["period"] > span / 1.5:
        raise InsufficientCycles(f"fitted period {p['period']:.4g} exceeds two thirds of the scan span")
    return replace(fit, params=p, sigma=sg, rss=fit.rss * s**2)


def fit_oscillation_time(scan: ScanResult, options: MinimizeOptions | None = None) -> FitResult:
    """Joint fit T_A = E0 cos^2(pi t/T_s + phi0) e^(-t/tau), T_B with sin^2.

    Also reports ``delta_hat = pi / T_s``.
    """
    t = scan.axis
    if t.size < 6:
        raise InsufficientCycles("too few scan points")
    s = float(np.max(scan.T_A + scan.T_B))
    if not s > 0:
        raise InsufficientCycles("scan carries no signal")
    ya, yb = scan.T_A / s, scan.T_B / s
    span = float(t[-1] - t[0])
    dt = float(np.min(np.diff(t)))
    score, k, a, b = _dominant_frequency(t, _contrast(scan), 2 * math.pi * 0.8 / span, math.pi / dt)
    T0 = 2 * math.pi / k
    if span < T0:
        raise InsufficientCycles(f"scan covers {span / T0:.2f} periods, need >= 1")
    phi0 = _wrap_half(0.5 * math.atan2(-b, a))
    tot = ya + yb
    good = tot > 0
    slope, icpt = np.polyfit(t[good], np.log(tot[good]), 1)
    tau0 = -1 / slope if slope < 0 else 10 * span
    e0 = math.exp(icpt)
    xs = np.array([1.0, 1.0, phi0, e0])

    def model(p):
        T, tau, ph, E = p[0] * T0, p[1] * tau0, p[2], p[3]
        phi = math.pi * t / T + ph
        env = E * np.exp(-t / tau)
        return env * np.cos(phi) ** 2, env * np.sin(phi) ** 2

    def rss(p):
        ma, mb = model(p)
        return float(np.sum((ma - ya) ** 2 + (mb - yb) ** 2))

    opt = replace(options or OSC_OPTIONS, names=("T_s", "tau", "phi0", "E0"), n_data=2 * t.size,
                  initial_step=(0.02, 0.05, 0.05, 0.02))
    bounds = [(0.05, 20.0), (1e-3, 1e3), (None, None), (0.0, None)]
    fit = minimize(rss, xs, bounds, opt)
    p = dict(fit.params)
    sg = dict(fit.sigma)
    p["T_s"] *= T0
    sg["T_s"] *= T0
    p["tau"] *= tau0
    sg["tau"] *= tau0
    p["E0"] *= s
    sg["E0"] *= s
    p["phi0"] = _wrap_half(p["phi0"])
    p["delta_hat"] = math.pi / p["T_s"]
    sg["delta_hat"] = math.pi * sg["T_s"] / p["T_s"] ** 2
    if p["T_s"] > span:
        raise InsufficientCycles(f"fitted period {p['T_s']:.4g} exceeds the scan span")
    return replace(fit, params=p, sigma=sg, rss=fit.rss * s**2)


def add_noise(values, level: float, rng: np.random.Generator):
    """Multiplicative Gaussian noise: v * (1 + level * N(0, 1))."""
    v = np.asarray(values, dtype=float)
    return v * (1 + level * rng.standard_normal(v.shape))
