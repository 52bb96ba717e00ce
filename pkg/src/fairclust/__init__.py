"""Fair clustering with probabilistic and metric group membership."""

__version__ = "0.1.0"
