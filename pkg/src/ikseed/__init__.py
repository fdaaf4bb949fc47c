"""Initial-guess generation for numerical IK on dual-arm mobile robots."""

__version__ = "0.1.0"
