"""Content-promoted scene layers: layered 2.5D video engine."""

__version__ = "0.1.0"
