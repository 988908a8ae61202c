"""Simulation and critical-parameter analysis of ageing branching random walks."""
from __future__ import annotations

__version__ = "0.1.0"
