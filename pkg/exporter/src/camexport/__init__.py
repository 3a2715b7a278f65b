"""Deterministic capture exporter producing run bundles."""

from .config import CaptureConfig, FrameSpec, PoolEntry, load_config, load_prompt_pool
from .errors import (
    CaptureShapeError,
    ConfigError,
    ExportError,
    ModelLoadFailure,
    WorklistParseError,
)
from .export import export_run, export_verb_pass
from .models import ToyConv, ToyTransformer, text_embedding

__version__ = "0.1.0"

__all__ = [
    "CaptureConfig",
    "CaptureShapeError",
    "ConfigError",
    "ExportError",
    "FrameSpec",
    "ModelLoadFailure",
    "PoolEntry",
    "ToyConv",
    "ToyTransformer",
    "WorklistParseError",
    "export_run",
    "export_verb_pass",
    "load_config",
    "load_prompt_pool",
    "text_embedding",
]
