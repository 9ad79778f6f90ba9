"""Post-processing and evaluation toolkit for structured document OCR output."""

__version__ = "0.1.0"
