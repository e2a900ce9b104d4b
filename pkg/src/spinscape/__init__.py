"""Spin-glass surrogate models of deep-network loss surfaces.

Piecewise-linear activation algebra, the Gaussian surrogate field and its
conditional Hessian, critical-point counting via the Kac-Rice formula, the
large-N complexity asymptotics, random-matrix utilities, and network probes
for the piece-selection statistics, plus a CLI over all of it.
"""

__version__ = "0.1.0"

__all__ = [
    "piecewise",
    "surrogate",
    "complexity",
    "rmt",
    "kacrice",
    "netprobe",
    "cli",
]
