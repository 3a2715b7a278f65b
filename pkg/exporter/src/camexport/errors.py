"""Typed exporter errors."""

from __future__ import annotations


class ExportError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(ExportError):
    """Capture config file is missing, unreadable, or malformed."""


class ModelLoadFailure(ExportError):
    """Requested model identifier cannot be loaded."""


class CaptureShapeError(ExportError):
    """An input or captured tensor has an unusable shape or value."""


class WorklistParseError(ExportError):
    """Worklist file is missing, unreadable, or malformed."""
