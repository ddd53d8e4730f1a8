"""Python bindings for the active object detection environment and policies."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
