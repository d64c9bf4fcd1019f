"""FEM package - Bernstein bases, quadrature, function spaces and assembly."""
