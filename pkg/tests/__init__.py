"""Test package for the spde-gkpinn solvers."""
