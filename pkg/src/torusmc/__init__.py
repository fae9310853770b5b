"""Monte-Carlo laboratory for renormalized stochastic wave/heat objects on T^2."""

__version__ = "0.1.0"
