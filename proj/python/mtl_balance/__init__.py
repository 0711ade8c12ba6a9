"""Python bindings for the multitask balancing library."""

import json

from . import _mtl
from ._mtl import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_FAILURE,
    EXIT_OK,
    CheckpointMismatch,
    ConfigError,
    FormatError,
    MtlError,
    ShapeError,
    compose_overlay,
    make_glyph_set,
    model_step_losses,
    normalize_config,
    parse_idx,
    quadratic_demo,
    quadratic_step,
    serialize_idx,
)

__all__ = [
    "EXIT_CONFIG",
    "EXIT_DIVERGED",
    "EXIT_FAILURE",
    "EXIT_OK",
    "CheckpointMismatch",
    "ConfigError",
    "FormatError",
    "MtlError",
    "ShapeError",
    "compose_overlay",
    "evaluate_checkpoint",
    "make_glyph_set",
    "model_step_losses",
    "normalize_config",
    "parse_idx",
    "quadratic_demo",
    "quadratic_step",
    "run_training",
    "serialize_idx",
]


def run_training(config_text, resume=False):
    """Returns (exit_code, summary dict)."""
    code, summary = _mtl.run_training(config_text, resume)
    return code, json.loads(summary)


def evaluate_checkpoint(config_text, checkpoint, split="test"):
    return json.loads(_mtl.evaluate_checkpoint(config_text, str(checkpoint), split))
