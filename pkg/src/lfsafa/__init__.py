"""Light-field super-resolution by sub-aperture feature adaptation of a frozen SISR backbone."""

__version__ = "0.1.0"
