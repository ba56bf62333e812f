"""Constrained reinforcement learning with learned action-space constraints.

Core pieces: a QP safety layer over learned linear constraints (geometry),
a margin-loss constraint network (constraint_net), 2-D navigation
simulators (envs), PPO (ppo), demonstration tooling (demos), and the CERES
dual-policy discovery loop (ceres).
"""

from .geometry import (
    ActionBox,
    LinearConstraintSet,
    assemble,
    constraint_value,
    project_action,
    satisfaction_margin,
    spherical_to_cartesian,
    violation_margin,
)
from .constraint_net import (
    ConstraintTrainConfig,
    LabeledDemo,
    constraint_loss,
    predict_constraints,
    separation_accuracy,
    train_constraints,
)
from .envs import EnvConfig, NavigationEnv
from .ceres import CeresConfig, ceres_loop, evaluate_demos, recovery_reward

__version__ = "0.1.0"
