"""Two-level domain decomposition preconditioners for sparse saddle point systems."""
__version__ = "0.1.0"
