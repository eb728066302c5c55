"""Python access to the dcdsm C++ core."""

from ._dcdsm import *  # noqa: F401,F403
from ._dcdsm import __doc__  # noqa: F401
