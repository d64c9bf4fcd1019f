"""Experiments package - Study drivers, result schemas and file writers."""
