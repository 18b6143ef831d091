"""Python bindings for the refineloc core."""

from ._refineloc import *  # noqa: F401,F403
from ._refineloc import __doc__  # noqa: F401
