"""Bounds-Constrained Bernstein FEM - Source Package"""
