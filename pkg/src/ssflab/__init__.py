"""ssflab: multiple operator integrals and spectral shift functions for contraction pairs."""

__version__ = "0.1.0"
