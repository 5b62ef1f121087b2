"""Tactile image toolkit: calibration, reconstruction, marker tracking and slip detection
for optical tactile sensors, with a synthetic sensor for testing."""

__version__ = "0.1.0"
