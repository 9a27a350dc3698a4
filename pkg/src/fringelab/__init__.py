"""Simulator and signal-processing toolkit for two-element interferometric
radar measurement of target angular velocity."""

__version__ = "0.1.0"

from .errors import ParseError, PipelineError, ValidationError

__all__ = ["ParseError", "PipelineError", "ValidationError", "__version__"]
