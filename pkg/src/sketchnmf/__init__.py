"""Nonnegative matrix factorization from sketched data."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .objectives import FactorPair  # noqa: F401
