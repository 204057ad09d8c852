"""Figures from stereoscat CSV outputs. Never recomputes physics."""

from .figures import FigureSpec, render  # noqa: F401
from .readers import SchemaError, SelectionError  # noqa: F401
