"""Static data-race and dependence checking for SIMT kernels over integer sets."""

__version__ = "0.1.0"
