from math import factorial

import numpy as np
import pytest

from src.fem.quadrature import MAX_EXACTNESS, line_rule, quadrature_rule


def reference_moment(a: int, b: int) -> float:
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("exactness", range(MAX_EXACTNESS + 1))
def test_triangle_rule_exact_on_monomials(exactness):
    rule = quadrature_rule(exactness)
    x, y = rule.points[:, 1], rule.points[:, 2]
    assert rule.weights.sum() == pytest.approx(0.5)
    assert np.all(rule.weights > 0)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    for a in range(exactness + 1):
        for b in range(exactness + 1 - a):
            assert rule.weights @ (x ** a * y ** b) == pytest.approx(reference_moment(a, b), rel=1e-12, abs=1e-15)


def test_triangle_rule_limits():
    with pytest.raises(ValueError):
        quadrature_rule(MAX_EXACTNESS + 1)
    with pytest.raises(ValueError):
        quadrature_rule(-1)


@pytest.mark.parametrize("exactness", [0, 3, 8])
def test_line_rule(exactness):
    s, w = line_rule(exactness)
    assert w.sum() == pytest.approx(1.0)
    for p in range(exactness + 1):
        assert w @ s ** p == pytest.approx(1.0 / (p + 1))
