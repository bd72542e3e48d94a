"""Borel-Pade resummation, instanton trans-series and cut-Fock spectra of the
double-well ground state, at arbitrary precision."""

__version__ = "0.1.0"
