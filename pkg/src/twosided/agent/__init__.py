"""Soft actor-critic agent on a small reverse-mode autodiff core."""

from .checkpoint import CheckpointError, load_agent, load_checkpoint, read_checkpoint, save_agent, save_checkpoint
from .gradcheck import GradcheckResult, gradcheck, gradcheck_report, random_projection_loss
from .networks import (
    Actor,
    Critic,
    NetworkSpec,
    PolicyOutput,
    ShapeError,
    actor_forward,
    critic_forward,
    sample_action,
    squash_log_prob,
)
from .sac import Adam, BufferUnderflow, LossReport, ReplayBuffer, SacAgent, SacConfig, Transition
from .train import CURVE_COLUMNS, CurvePoint, TrainResult, evaluate, train, write_curve

__all__ = [
    "Actor", "Adam", "BufferUnderflow", "CURVE_COLUMNS", "CheckpointError", "Critic", "CurvePoint",
    "GradcheckResult", "LossReport", "NetworkSpec", "PolicyOutput", "ReplayBuffer", "SacAgent", "SacConfig",
    "ShapeError", "TrainResult", "Transition", "actor_forward", "critic_forward", "evaluate", "gradcheck",
    "gradcheck_report", "load_agent", "load_checkpoint", "random_projection_loss", "read_checkpoint",
    "sample_action", "save_agent", "save_checkpoint", "squash_log_prob", "train", "write_curve",
]
