"""Symbolic reasoning distillation for fix-type classification of buggy C programs."""

from symdistill.taxonomy import FIX_TYPES, TAGS, FixType

__version__ = "0.1.0"

__all__ = ["FIX_TYPES", "TAGS", "FixType", "__version__"]
