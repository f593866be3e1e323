"""Mirrorability of landmark localization: mirror error, difficult-sample
selection, and mirror-error feedback for cascaded shape regression."""

__version__ = "0.1.0"
