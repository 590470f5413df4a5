"""Pseudo-spectral Vlasov-Poisson-Landau simulator and linear dispersion toolkit."""

__version__ = "0.1.0"
