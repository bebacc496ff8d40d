"""Secure state reconstruction for LTI systems under sparse sensor attacks"""

__version__ = "1.0.0"
