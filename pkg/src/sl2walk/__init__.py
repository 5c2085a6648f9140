"""Random products of SL(2, R) matrices drawn from non-stationary schedules."""

__version__ = "0.1.0"
