"""Channel estimation for XL-RIS-assisted multi-user MIMO with hybrid beamforming.

The estimator recovers every user's cascaded BS-RIS-user channel from a
two-part pilot protocol by sharing the BS-RIS column space across users
(collaborative low-rank approximation) and then jointly fitting a common
coefficient matrix with per-(user, antenna) diagonal scalings.
"""

from .channel import SystemConfig, draw_realization, mimo_rayleigh_distance, rayleigh_distance
from .config import ExperimentConfig, Sweep, TwoPhase, load_config
from .estimator import EstimatorOutput, clra_jo, clra_ls, complexity_estimate
from .harness import nmse, run_experiment, run_trial, run_two_phase
from .protocol import build_schedule, observe
from .report import NMSEReport, emit_report

__version__ = "0.1.0"

__all__ = [
    "SystemConfig", "draw_realization", "rayleigh_distance", "mimo_rayleigh_distance",
    "ExperimentConfig", "Sweep", "TwoPhase", "load_config",
    "EstimatorOutput", "clra_jo", "clra_ls", "complexity_estimate",
    "nmse", "run_experiment", "run_trial", "run_two_phase",
    "build_schedule", "observe", "NMSEReport", "emit_report",
]
