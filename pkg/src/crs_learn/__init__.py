"""Rule-bit feature extraction over Core Rule Set SQLi rules, plus learned detectors."""

__version__ = "0.1.0"
