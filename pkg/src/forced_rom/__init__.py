"""Reduced-order surrogates for forced discrete-time dynamical systems.

POD and Koopman-autoencoder surrogates with eigenvalue regularization and
temporal unrolling, synthetic forced-system generators, evaluation metrics and a
command-line harness (``forced-rom``).
"""
__version__ = "0.1.0"
