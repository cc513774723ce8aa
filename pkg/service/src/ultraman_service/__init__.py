"""Reference implementation of the /v1/generate wire protocol."""

__all__ = ["__version__"]
__version__ = "0.1.0"
