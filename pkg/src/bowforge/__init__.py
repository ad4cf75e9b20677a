"""Numerical Up transform from bow representations to instantons on multi-Taub-NUT space."""

from . import bow, dirac, nahm, quat, taubnut, uptransform

__all__ = ["bow", "dirac", "nahm", "quat", "taubnut", "uptransform"]
__version__ = "0.1.0"
