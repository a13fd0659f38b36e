"""Reference models with intractable or nonstandard likelihoods."""

from . import cmp, randomwalk

__all__ = ["cmp", "randomwalk"]
