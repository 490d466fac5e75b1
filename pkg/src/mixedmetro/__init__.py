"""Mixed-state Rydberg-EIT interferometry: analytic model, gate engine and Monte-Carlo experiments."""

__version__ = "0.1.0"
