"""Finite common atom model for calcium-imaging spike deconvolution."""

__version__ = "1.0.0"
