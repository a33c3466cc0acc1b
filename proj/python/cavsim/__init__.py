"""Cavity-enhanced single-emitter simulator."""

from ._cavsim import *  # noqa: F401,F403
from ._cavsim import __doc__  # noqa: F401

__version__ = "1.0.0"
