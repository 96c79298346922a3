"""Command line entry point ``ssl-sim``.

Exit status: 0 on success, 2 when the input fails validation or parsing,
3 when a computation fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, calibration, config as cfgmod, io, protocols
from .calibration import TraceData
from .errors import ParseError, SSLError, ValidationError
from .model import UnitSystem
from .solver import slow_delay

log = logging.getLogger("sslsim")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("SSL_SIM_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    if name not in LOG_LEVELS:
        log.warning("SSL_SIM_LOG=%r not understood, using 'warn'", name)


# --------------------------------------------------------------------------
# protocol runners: each returns the list of files written

def _scan_file(out: Path, name: str, scan, exp) -> list:
    files = [io.write_scan_csv(out / name, scan, exp.units)]
    if scan.fit is not None:
        files.append(_write_period_fit(out / "fit.json", scan.fit, scan.axis_name, exp.units))
    return files


def _write_period_fit(path, fit, axis_name, units):
    if axis_name == "delta":
        extra = {"period_kHz": units.freq_to_kHz(fit.params["period"]),
                 "period_kHz_sigma": units.freq_to_kHz(fit.sigma["period"])}
    else:
        extra = {"T_s_us": units.time_to_us(fit.params["T_s"]),
                 "delta_hat_kHz": units.freq_to_kHz(fit.params["delta_hat"]),
                 "tau_us": units.time_to_us(fit.params["tau"])}
    extra = {k: (v if math.isfinite(v) else None) for k, v in extra.items()}
    return io.write_fit_json(path, fit, extra)


def _run_tune(exp, out: Path, threads):
    p = exp.params
    res = protocols.tune_theta(exp.sim, theta0=p.get("theta0"), n_coarse=p.get("n_coarse", 24), threads=threads)
    files = [io.write_json(out / "tune_theta.json", {"theta": res.theta, "T_B": res.T_B, "n_eval": res.n_eval})]
    if res.coarse is not None:
        files.append(io.write_scan_csv(out / "theta_coarse.csv", res.coarse, exp.units))
    return files


def _synthetic_trace(exp, rng) -> TraceData:
    p, sim = exp.params, exp.sim
    sub = p["subsystem"]
    pulse = sim.pulse
    lo = pulse.support[0]
    t_stop = p["t_stop"]
    if t_stop is None:
        t_stop = pulse.support[1] + 4 * slow_delay(sim.couplings, sim.medium) + 50.0
    t = np.arange(lo, t_stop, p["sample_dt"])
    p_in = np.abs(pulse.envelope(t)) ** 2
    data = TraceData(t, p_in, p_in)
    omega = float(sim.couplings.magnitudes[sub - 1])
    gamma = sim.medium.gamma1 if sub == 1 else sim.medium.gamma2
    if p["omega_B"] > 0:
        pa, pb = calibration.simulate_double_lambda(data, sim.medium.alpha, omega, p["omega_B"], gamma,
                                                    sim.medium.dk_L, sub, sim.grid)
    else:
        pa = calibration.simulate_single_lambda(data, sim.medium.alpha, omega, gamma, sub, sim.grid)
        pb = None
    if p["noise"] > 0:
        pa = calibration.add_noise(pa, p["noise"], rng)
        pb = None if pb is None else calibration.add_noise(pb, p["noise"], rng)
    return TraceData(t, p_in, np.clip(pa, 0, None), None if pb is None else np.clip(pb, 0, None))


def run_experiment(exp: cfgmod.ExperimentConfig, out: Path, threads=None, seed=None) -> list:
    p, sim = exp.params, exp.sim
    proto = exp.protocol
    if proto == "scan_delta":
        return _scan_file(out, "scan_delta.csv", protocols.scan_delta(sim, p["delta_list"], threads), exp)
    if proto == "scan_theta":
        return _scan_file(out, "scan_theta.csv", protocols.scan_theta(sim, p["theta_list"], p["delta"], threads), exp)
    if proto == "tune_theta":
        return _run_tune(exp, out, threads)
    if proto == "interferometer_delta_scan":
        scan = protocols.interferometer_delta_scan(p["t_s"], p["delta_list"], sim, detune_on=p["detune_on"],
                                                   t_off=p.get("t_off"), threads=threads)
        return _scan_file(out, "storage_scan.csv", scan, exp)
    if proto == "interferometer_time_scan":
        scan = protocols.interferometer_time_scan(p["delta"], p["t_s_list"], sim, detune_on=p["detune_on"],
                                                  t_off=p.get("t_off"), threads=threads)
        return _scan_file(out, "storage_scan.csv", scan, exp)
    if proto == "two_color_storage":
        q = p["qubit"]
        res = protocols.two_color_storage(q, p["t_s"], p["delta_store"], sim, t_off=p.get("t_off"))
        body = {"input": {"a": q.a, "b": q.b, "ratio": (abs(q.a) ** 2 / abs(q.b) ** 2) if q.b else None},
                "retrieved": {"a": complex(res.amplitudes[0]), "b": complex(res.amplitudes[1])},
                "energy_ratio": res.energy_ratio if math.isfinite(res.energy_ratio) else None,
                "E_A": res.energies.E_A, "E_B": res.energies.E_B,
                "t_s": p["t_s"], "t_s_us": exp.units.time_to_us(p["t_s"])}
        return [io.write_json(out / "two_color.json", body)]
    if proto == "synthetic_trace":
        rng = np.random.default_rng(exp.seed if seed is None else seed)
        return [io.write_trace_csv(out / "trace.csv", _synthetic_trace(exp, rng), exp.units)]
    raise ValidationError(f"unknown protocol {proto!r}", field="protocol")


# --------------------------------------------------------------------------
# subcommands

def _cmd_run(args, out):
    exp = cfgmod.load_config(args.path)
    files = run_experiment(exp, out, threads=args.threads, seed=args.seed)
    return files, exp.raw


def _cmd_validate(args, out):
    exp = cfgmod.load_config(args.path)
    print(f"{args.path}: ok ({exp.protocol})")
    return [], exp.raw


def _cmd_tune(args, out):
    exp = cfgmod.load_config(args.path)
    return _run_tune(exp, out, args.threads), exp.raw


def _cmd_calibrate(args, out):
    data = io.read_trace_csv(args.path)
    if args.model == "single-lambda":
        fit = calibration.fit_single_lambda(data, subsystem=args.subsystem)
    else:
        if args.known:
            try:
                known = json.loads(Path(args.known).read_text(encoding="utf-8"))["params"]
                k = (float(known["alpha"]), float(known["omega"]), float(known["gamma"]))
            except (OSError, ValueError, KeyError, TypeError) as e:
                raise ParseError(f"{args.known}: not a single-lambda fit.json ({e})") from e
        elif None not in (args.alpha, args.omega, args.gamma):
            k = (args.alpha, args.omega, args.gamma)
        else:
            raise ValidationError("double-lambda needs --known FIT.json or all of --alpha --omega --gamma",
                                  field="known")
        fit = calibration.fit_double_lambda(data, k, subsystem=args.subsystem)
    return [io.write_fit_json(out / "fit.json", fit, {"model": args.model})], {"trace": str(args.path)}


def _cmd_fit_period(args, out):
    axis = "delta" if args.kind == "delta" else "t_s"
    scan = io.read_scan_csv(args.path, axis_name=axis)
    fit = (calibration.fit_oscillation_delta(scan) if args.kind == "delta"
           else calibration.fit_oscillation_time(scan))
    units = UnitSystem()
    return [_write_period_fit(out / "fit.json", fit, axis, units)], {"scan": str(args.path), "kind": args.kind}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="scan worker threads (default: all cores)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed for synthetic noise")

    ap = argparse.ArgumentParser(prog="ssl-sim", description="Double-tripod spinor slow light simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run the protocol named in a config")
    p.add_argument("path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", parents=[common], help="check a config without computing")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("tune-theta", parents=[common], help="find the phase that nulls channel B")
    p.add_argument("path")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("calibrate", parents=[common], help="fit Lambda-system parameters to a trace CSV")
    p.add_argument("model", choices=["single-lambda", "double-lambda"])
    p.add_argument("path")
    p.add_argument("--subsystem", type=int, choices=[1, 2], default=1)
    p.add_argument("--known", default=None, help="fit.json from a single-lambda calibration")
    p.add_argument("--alpha", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("fit-period", parents=[common], help="fit the oscillation period of a scan CSV")
    p.add_argument("path")
    p.add_argument("--kind", choices=["delta", "time"], default="delta")
    p.set_defaults(func=_cmd_fit_period)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("ssl-sim: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out or "out")
    t0 = time.perf_counter()
    files, echo = [], None
    status, code, msg, rc = "ok", None, None, EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            files, echo = args.func(args, out)
    except (ValidationError, ParseError) as e:
        status, code, msg, rc = "invalid", e.code, str(e), EXIT_INVALID
    except SSLError as e:
        status, code, msg, rc = "failed", e.code, str(e), EXIT_FAILED
    except Exception as e:  # noqa: BLE001 - still leave a manifest behind
        log.debug("unexpected failure", exc_info=True)
        status, code, msg, rc = "failed", "internal", f"{type(e).__name__}: {e}", EXIT_FAILED
    if rc:
        print(f"ssl-sim: error [{code}]: {msg}", file=sys.stderr)
    if args.command != "validate":
        command = ["ssl-sim"] + list(sys.argv[1:] if argv is None else argv)
        io.write_manifest(out, files, config=echo, version=__version__, wall_time=time.perf_counter() - t0,
                          status=status, error_code=code, error_message=msg, exit_code=rc, command=command)
    return rc


if __name__ == "__main__":
    sys.exit(main())
