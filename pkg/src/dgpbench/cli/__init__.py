"""Módulo CLI para dgpbench."""

from .main import app

__all__ = ["app"]
