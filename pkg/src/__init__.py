"""
uGMM-NN - feedforward networks of univariate Gaussian mixture neurons.
"""

__version__ = "0.1.0"
