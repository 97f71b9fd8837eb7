"""Interior-point optimal power flow with a variational quantum linear solver."""

__version__ = "0.1.0"
