"""
Numeric substrate, configuration and shared helpers
"""

from .errors import ToolkitError
from .utils import DataUtils

__all__ = ['ToolkitError', 'DataUtils']
