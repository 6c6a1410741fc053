"""Software model of a Taylor-series activation engine."""
