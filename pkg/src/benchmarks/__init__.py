"""Benchmarks package - Closed-form problem data for the four studies."""
