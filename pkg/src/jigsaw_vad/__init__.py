"""Video anomaly detection by solving decoupled spatial and temporal jigsaw puzzles."""

__version__ = "0.1.0"
