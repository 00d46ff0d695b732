"""Scenario-conditioned wireless channel generation and superimposed-pilot link evaluation."""

__version__ = "0.1.0"
