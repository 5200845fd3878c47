"""Errors specific to the extraction pipeline.

Configuration problems reuse oodfuse.ConfigError so both packages share one
exit-code convention; RetriableError marks transient failures (model weights
not yet downloadable, cache miss) that a scheduler may simply run again.
"""

from oodfuse.errors import ConfigError, FormatError  # re-exported for callers

__all__ = ["ConfigError", "FormatError", "RetriableError"]


class RetriableError(RuntimeError):
    """A transient failure; retrying the same job may succeed."""
