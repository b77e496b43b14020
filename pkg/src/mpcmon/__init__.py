"""Online performance monitoring and triggered adaption of a parameterised economic MPC.

The package simulates a lumped district-heating plant under an economic MPC,
scores closed-loop windows with a Hotelling T^2 statistic against a baseline
of acceptable operation, and adapts the controller when performance degrades:
first by temporal-difference updates of the MPC parameters, then, if that
fails, by re-identifying the prediction model.
"""

from .errors import (ConfigurationError, DegenerateBaselineError, IllConditionedError, InsufficientDataError,
                     InvalidInputError, MpcMonError, SolverError)
from .monitor import BaselineDataset, FeatureVector, build_baseline, compute_features, t2_score, threshold_alpha
from .mpc import MpcConfig, MpcController, ThetaParams, TuningParams, solve_mpc, value_and_sensitivity
from .orchestrator import LoopConfig, Mode, RunLog, RunSettings, emit_report, evaluate_recovery, run_closed_loop
from .plant import DisturbanceConfig, PlantParams, PlantState, Scenario, ScenarioShifts, plant_step
from .predictor import PredictionModel, sysid_fit

__version__ = "0.1.0"
