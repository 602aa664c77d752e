"""Full-duplex dialogue stream modelling at desk scale."""

__version__ = "0.1.0"
