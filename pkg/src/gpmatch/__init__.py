"""Group-program matching for private pub/sub over S5."""
from .s5 import ALPHA, BETA, GAMMA, IDENTITY, RHO_STAR, Perm

__all__ = ["ALPHA", "BETA", "GAMMA", "IDENTITY", "RHO_STAR", "Perm"]
__version__ = "0.1.0"
