"""Relative facial action unit detection: pairwise change scoring and
windowed aggregation into increase / decrease / no-change labels."""

__version__ = "0.1.0"

from .errors import RelauError  # noqa: E402,F401

__all__ = ["RelauError", "__version__"]
