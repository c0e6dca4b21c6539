"""Multi-scale sine networks trained on least-squares residuals of the 2-D Stokes equations."""
from .autodiff import Jet2, Tape, backprop, jet_seed
from .config import PRESETS, RunConfig, config_from_dict, parse_config
from .errors import CheckpointError, ConfigError, DomainError, UsageError
from .geometry import RectWithHoles, rectangle_domain, six_hole_domain
from .loss import VARIANTS, PenaltyParams, loss_terms, total_loss
from .net import FieldSet, MLPArch, MscaleNet
from .problems import StokesProblem, make_problem, oracle_fieldset
from .trainer import evaluate_errors, train

__version__ = "0.1.0"

__all__ = [
    "Jet2", "Tape", "backprop", "jet_seed",
    "PRESETS", "RunConfig", "config_from_dict", "parse_config",
    "CheckpointError", "ConfigError", "DomainError", "UsageError",
    "RectWithHoles", "rectangle_domain", "six_hole_domain",
    "VARIANTS", "PenaltyParams", "loss_terms", "total_loss",
    "FieldSet", "MLPArch", "MscaleNet",
    "StokesProblem", "make_problem", "oracle_fieldset",
    "evaluate_errors", "train",
]
