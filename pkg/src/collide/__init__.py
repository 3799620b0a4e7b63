"""Triple-collision diagnostics for piecewise diffusions, Bessel comparison
bounds, orthant reflected Brownian motion and Atlas-type rank models."""

__version__ = "0.1.0"
