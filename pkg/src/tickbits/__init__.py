"""tickbits: binary symbolization of tick prices and a calibrated
randomness-test battery over transaction-time aggregation levels."""

__version__ = "0.1.0"
