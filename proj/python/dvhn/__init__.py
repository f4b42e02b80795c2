"""Deep discrete hashing over precomputed vehicle embeddings."""

from ._dvhn import *  # noqa: F401,F403
from ._dvhn import __doc__  # noqa: F401
