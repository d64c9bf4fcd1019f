"""Approximation package - Restricted-range approximation, error norms and inverse-estimate probes."""
