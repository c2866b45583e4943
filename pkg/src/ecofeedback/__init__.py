"""Fuel-efficiency analytics for vehicle telemetry.

Pipeline: telemetry -> one-minute driving events -> per-journey Ward
clustering and rule labeling -> random-forest classifier -> fuzzy advisory
engine -> fuel-savings simulation.
"""

__version__ = "0.1.0"
