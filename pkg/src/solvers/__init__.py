"""Solvers package - Sparse linear algebra, box-constrained VI solver and time stepping."""
