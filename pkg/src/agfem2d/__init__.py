"""2D unfitted adaptive finite elements for small-strain J2 elasto-plasticity."""

__version__ = "0.1.0"
