"""Non-stochastic best-arm identification: Successive Halving and friends."""

__version__ = "0.1.0"
