"""Knowledge-constrained multi-label classification, rejection and attacks."""

from tnshield._core import *  # noqa: F401,F403
from tnshield._core import __doc__  # noqa: F401
