"""Physics-guided neural traversal planner."""
from .features import FeatureNorms, denormalize, featurize, normalize, raw_features
from .loss import LossWeights, flat_power, flat_thrust, trajectory_energy, trajectory_loss
from .net import PlannerNet, forward_numpy, load_default, load_params, save_params
from .trajectory import PlannerConfig, TrajectorySpec, build_trajectory, sample_setpoint
from .train import (Problem, Scenarios, TrainConfig, TrainResult, gradient_check, check_gradients,
                    sample_scenarios, train)

__all__ = [
    "FeatureNorms", "denormalize", "featurize", "normalize", "raw_features",
    "LossWeights", "flat_power", "flat_thrust", "trajectory_energy", "trajectory_loss",
    "PlannerNet", "forward_numpy", "load_default", "load_params", "save_params",
    "PlannerConfig", "TrajectorySpec", "build_trajectory", "sample_setpoint",
    "Problem", "Scenarios", "TrainConfig", "TrainResult", "gradient_check", "check_gradients",
    "sample_scenarios", "train",
]
