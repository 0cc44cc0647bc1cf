"""Rate-aware DCF: analytic model, slotted simulator and backoff optimizer."""

__version__ = "0.1.0"
