"""
Tests for the uGMM-NN package.
"""
