"""flowlens: interest-based traffic modelling for campus flow logs."""

__version__ = "0.1.0"
