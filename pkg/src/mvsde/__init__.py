"""Adaptive and tamed time-stepping for McKean-Vlasov particle systems."""

__version__ = "0.1.0"
