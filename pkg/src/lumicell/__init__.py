"""VLC beacon broadcasting and GPR fingerprint localization simulator."""

__version__ = "0.1.0"
