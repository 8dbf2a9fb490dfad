"""Cracked-Laplacian laboratory for eigenvalue asymptotics with coalescing Aharonov-Bohm poles."""

__version__ = "0.1.0"
