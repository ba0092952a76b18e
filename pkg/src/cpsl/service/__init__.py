"""HTTP service exposing bundles and rendering to clients."""

from .app import create_app

__all__ = ["create_app"]
