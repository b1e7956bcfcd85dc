"""
网格与离散导数测试
"""

import numpy as np
import pytest

from src.core.exceptions import GridError, OperatorError
from src.core.grid import ScalarField, VectorField, boundary_distance, build_grid, inf_quotient
from src.core.operators import discrete_derivatives


def test_grid_layout():
    """节点包含边界，间距为 (b−a)/(N+1)"""
    grid = build_grid(1, [0.0, 1.0], 3)
    assert grid.size == 5
    assert grid.spacing == (0.25,)
    assert list(grid.interior_index) == [1, 2, 3]
    assert list(grid.boundary_index) == [0, 4]

    grid2 = build_grid(2, [[0, 1], [0, 2]], [3, 4])
    assert grid2.shape == (5, 6)
    assert grid2.size == 30
    assert grid2.interior_count == 12


def test_invalid_grid():
    with pytest.raises(GridError):
        build_grid(3, [[0, 1]] * 3, 5)
    with pytest.raises(GridError):
        build_grid(1, [1.0, 0.0], 5)
    with pytest.raises(GridError):
        build_grid(1, [0.0, 1.0], 2)


def test_field_length_checked():
    grid = build_grid(1, [0.0, 1.0], 5)
    with pytest.raises(GridError):
        ScalarField(grid, np.zeros(4))
    with pytest.raises(GridError):
        VectorField(grid, np.zeros((2, 3)))
    with pytest.raises(GridError):
        ScalarField(grid, np.full(grid.size, np.nan))


def test_second_difference_of_sine():
    """sin(πx) 在 x=0.5，h=0.01：u″ ≈ −π²，误差小于 1e-3"""
    grid = build_grid(1, [0.0, 1.0], 99)
    u = ScalarField(grid, np.sin(np.pi * grid.x))
    node = 50
    assert grid.x[node] == pytest.approx(0.5)
    d = discrete_derivatives(u, node)
    assert d["second"][0] == pytest.approx(-np.pi**2, abs=1e-3)
    assert d["gradient"][0] == pytest.approx(0.0, abs=1e-12)


def test_derivatives_undefined_on_boundary():
    grid = build_grid(1, [0.0, 1.0], 9)
    u = ScalarField(grid, grid.x)
    with pytest.raises(OperatorError):
        discrete_derivatives(u, 0)


def test_neighbors_2d():
    grid = build_grid(2, [[0, 1], [0, 1]], [3, 3])
    center = grid.index((2, 2))
    corner = grid.index((0, 0))
    assert len(grid.neighbors(center)) == 8
    assert len(grid.neighbors(corner)) == 3


def test_inward_neighbor():
    grid = build_grid(2, [[0, 1], [0, 1]], [3, 3])
    target, distance = grid.inward_neighbor(grid.index((0, 2)))
    assert target == grid.index((1, 2))
    assert distance == pytest.approx(0.25)
    target, distance = grid.inward_neighbor(grid.index((0, 0)))
    assert target == grid.index((1, 1))
    assert distance == pytest.approx(0.25 * np.sqrt(2))


def test_boundary_quotient():
    grid = build_grid(1, [0.0, 1.0], 99)
    d = boundary_distance(grid)
    assert np.all(d.values[grid.boundary_mask] == 0)
    assert d.max() == pytest.approx(0.5)
    u = ScalarField(grid, np.sin(np.pi * grid.x))
    # sin(πx)/min(x, 1−x) 在边界附近趋于 π，在中点为 2
    assert inf_quotient(u, d) == pytest.approx(2.0, abs=1e-6)
