"""Fixed-step simulation of the closed-loop models."""
from .backend import BACKEND, compiled_available, get_kernel
from .batch import (MonteCarloResult, SampleOutcome, SweepPathError, SweepRow, converge_one,
                    montecarlo, run_metrics, sample_initial_conditions, set_param, sweep)
from .core import (DEFAULT_FAULT, Scenario, ScenarioError, TimedEvent, Trajectory, concatenate,
                   continue_run, integrate, perturbation_timeline, substeps, wrap_angles)

__all__ = [
    "BACKEND", "compiled_available", "get_kernel", "Scenario", "ScenarioError", "TimedEvent",
    "Trajectory", "integrate", "concatenate", "continue_run", "perturbation_timeline",
    "wrap_angles", "substeps", "DEFAULT_FAULT", "sample_initial_conditions", "sweep", "set_param",
    "SweepRow", "SweepPathError", "run_metrics", "montecarlo", "converge_one",
    "MonteCarloResult", "SampleOutcome",
]
