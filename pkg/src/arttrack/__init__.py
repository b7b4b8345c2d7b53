"""Articulated object pose tracking by SE(3)-invariant point-pair voting.

Parts are tracked as increments relative to a keyframe, voted from rigid-
invariant pair parameters, and refined jointly under joint constraints.
"""

from . import canon, cloud, kinopt, metrics, ppf, predictor, se3, synth, tracker, voting
from .cloud import PointCloud
from .errors import TrackingError
from .model import ArticulatedModel, Joint, Part
from .se3 import Pose, Twist, exp_map, log_map
from .tracker import FrameResult, TrackerConfig, TrackerState

__version__ = "0.1.0"

__all__ = [
    "ArticulatedModel",
    "FrameResult",
    "Joint",
    "Part",
    "PointCloud",
    "Pose",
    "TrackerConfig",
    "TrackerState",
    "TrackingError",
    "Twist",
    "canon",
    "cloud",
    "exp_map",
    "kinopt",
    "log_map",
    "metrics",
    "ppf",
    "predictor",
    "se3",
    "synth",
    "tracker",
    "voting",
]
