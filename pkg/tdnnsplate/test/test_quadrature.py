from math import factorial

import numpy as np
import pytest

from tdnnsplate.quadrature import (QuadRule, _SEGMENT_POINTS, _SEGMENT_WEIGHTS, map_to_segment,
                                   map_to_triangle, segment_rule, triangle_rule)


def monomial_integral(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize('degree', range(0, 13))
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    assert rule.exactness >= degree
    assert np.isclose(rule.weights.sum(), 0.5, rtol=1e-14)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for total in range(degree + 1):
        for a in range(total + 1):
            value = rule.integrate(x ** a * y ** (total - a))
            assert value == pytest.approx(monomial_integral(a, total - a), rel=1e-10, abs=1e-14)


def test_triangle_rule_points_inside():
    for degree in range(1, 13):
        points = triangle_rule(degree).points
        assert np.all(points >= -1e-14)
        assert np.all(points.sum(axis=1) <= 1 + 1e-14)


def test_degree_three_rule_misses_degree_four():
    rule = triangle_rule(3)
    x, y = rule.points[:, 0], rule.points[:, 1]
    value = rule.integrate(x ** 2 * y ** 2)
    assert value == pytest.approx(0.0044444444, abs=1e-8)
    assert abs(value - 1.0 / 180.0) > 1e-3
    exact = triangle_rule(4)
    assert exact.integrate(exact.points[:, 0] ** 2 * exact.points[:, 1] ** 2) == \
        pytest.approx(1.0 / 180.0, rel=1e-10)


@pytest.mark.parametrize('degree', range(0, 13))
def test_segment_rule_exactness(degree):
    rule = segment_rule(degree)
    assert rule.exactness >= degree
    assert len(rule) == degree // 2 + 1
    for p in range(rule.exactness + 1):
        assert rule.integrate(rule.points ** p) == pytest.approx(1.0 / (p + 1), rel=1e-13)


@pytest.mark.parametrize('degree', (-1, 13, 2.5))
def test_degree_out_of_table(degree):
    with pytest.raises(ValueError):
        triangle_rule(degree)
    with pytest.raises(ValueError):
        segment_rule(degree)


def test_rules_are_read_only():
    rule = triangle_rule(4)
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


def test_map_to_triangle_area_and_centroid():
    vertices = np.array([[1.0, 1.0], [4.0, 1.0], [2.0, 3.0]])
    points, weights = map_to_triangle(triangle_rule(2), vertices)
    assert weights.sum() == pytest.approx(3.0, rel=1e-14)
    assert weights @ points / weights.sum() == pytest.approx(vertices.mean(axis=0), rel=1e-13)


def test_map_to_segment():
    points, weights = map_to_segment(segment_rule(5), [0.0, 0.0], [3.0, 4.0])
    assert weights.sum() == pytest.approx(5.0, rel=1e-14)
    # integral of the squared arc length
    s = np.linalg.norm(points, axis=1)
    assert weights @ s ** 2 == pytest.approx(125.0 / 3.0, rel=1e-13)


@pytest.mark.parametrize('npoints', range(1, len(_SEGMENT_POINTS) + 1))
def test_segment_tables_are_gauss_rules(npoints):
    points, weights = _SEGMENT_POINTS[npoints - 1], _SEGMENT_WEIGHTS[npoints - 1]
    assert len(points) == len(weights) == npoints
    assert points == pytest.approx(1.0 - points[::-1], abs=1e-15)
    assert weights == pytest.approx(weights[::-1], rel=1e-14)
    degree = 2 * npoints - 1
    assert weights @ points ** degree == pytest.approx(1.0 / (degree + 1), rel=1e-13)


def test_seven_point_segment_rule():
    rule = segment_rule(12)
    assert len(rule) == 7
    assert rule.points[-1] == pytest.approx(0.9745539561713792, rel=1e-15)
    assert rule.integrate(rule.points ** 13) == pytest.approx(1.0 / 14.0, rel=1e-13)


def test_degree_three_segment_rule_misses_degree_four():
    rule = segment_rule(3)
    assert abs(rule.integrate(rule.points ** 4) - 0.2) > 1e-6


def test_rule_with_mismatched_tables():
    with pytest.raises(ValueError):
        QuadRule(np.array([0.25, 0.75]), np.array([1.0]), 1)
