"""Robust Bayesian accelerated failure time models with generalized gamma
likelihoods and a spike-and-slab DLH local prior."""

__version__ = "0.1.0"
