"""Width stabilization of multiple-quantum NMR spectra under decoherence.

Submodules: :mod:`numerics`, :mod:`phenomodel`, :mod:`exactspin`, :mod:`cli`.
"""
from .phenomodel import ModelParams

__version__ = "0.1.0"
__all__ = ["ModelParams", "__version__"]
