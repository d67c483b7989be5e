"""Sparse local Lipschitz certification and sensitivity analysis for ReLU networks."""
