"""Simulation and analysis toolkit for two-component slow light in a double-tripod medium."""
from .errors import *  # noqa: F401,F403
from .model import (AtomicState, CouplingSchedule, CouplingSet, MediumParams, ProbePair, Segment,
                    UnitSystem, relative_phase, rhs, steady_coherences)
from .solver import FieldRecord, GridSpec, PulseSpec, output_energy, propagate, store_and_retrieve

__version__ = "0.1.0"

from .analytic import (LambdaPicture, TransferMatrix, cw_transfer_approx, cw_transfer_exact,  # noqa: E402
                       storage_phase, transmission_pair)
from .calibration import (MinimizeOptions, TraceData, fit_double_lambda, fit_oscillation_delta,  # noqa: E402
                          fit_oscillation_time, fit_single_lambda, minimize)
from .protocols import (QubitAmplitudes, SimConfig, interferometer_delta_scan, interferometer_time_scan,  # noqa: E402
                        scan_delta, scan_theta, tune_theta, two_color_storage)
from .config import ExperimentConfig, load_config  # noqa: E402
from .results import FitResult, ScanResult  # noqa: E402
