"""Fair representation learning with a sigmoid integral probability metric."""

__version__ = "0.1.0"
