import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslap.grid import (
    build_grid,
    field_csv,
    gradient_field,
    integrate_nodal,
    integrate_power,
    read_field_csv,
    seminorm_X,
    write_field_csv,
)
from finslap.norms import FinslerNorm

from conftest import NORMS, random_field

EUC = FinslerNorm.euclidean()


@pytest.mark.parametrize("dim, extents, res, nodes, simplices, vol", [
    (1, [(0, 1)], 4, 5, 4, 0.25),
    (2, [(0, 1), (0, 1)], (2, 2), 9, 8, 0.125),
])
def test_build_grid_examples(dim, extents, res, nodes, simplices, vol):
    g = build_grid(dim, extents, res)
    assert g.n_nodes == nodes and g.n_simplices == simplices
    np.testing.assert_allclose(g.volumes, vol, rtol=1e-14)


def test_rectangle_measure():
    g = build_grid(2, [(0, 2), (0, 1)], (4, 2))
    assert g.volumes.sum() == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("dim, extents, res", [
    (1, [(1, 1)], 4), (1, [(0, 1)], 1), (2, [(0, 1), (0, 1)], (4, 1)), (3, [(0, 1)] * 3, 2),
])
def test_build_grid_rejects(dim, extents, res):
    with pytest.raises(ValueError):
        build_grid(dim, extents, res)


@given(st.integers(2, 9), st.integers(2, 9), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_grid_invariants(nx, ny, w, h):
    g = build_grid(2, [(0, w), (-h, 0)], (nx, ny))
    assert g.volumes.sum() == pytest.approx(w * h, rel=1e-12)
    assert np.all(g.volumes > 0)
    x, y = g.coords()
    on_box = np.isclose(x, 0) | np.isclose(x, w) | np.isclose(y, -h) | np.isclose(y, 0)
    np.testing.assert_array_equal(g.boundary_mask, on_box)
    order = np.lexsort((y, x))
    np.testing.assert_array_equal(order, np.arange(g.n_nodes))


def test_gradient_field_affine_reproduction():
    g = build_grid(2, [(0, 1), (0, 2)], (5, 7))
    x, y = g.coords()
    np.testing.assert_allclose(gradient_field(g, x), np.tile([1.0, 0.0], (g.n_simplices, 1)), atol=1e-13)
    np.testing.assert_allclose(gradient_field(g, 2 * x - 3 * y + 1), np.tile([2.0, -3.0], (g.n_simplices, 1)),
                               atol=1e-13)
    np.testing.assert_array_equal(gradient_field(g, np.zeros(g.n_nodes)), 0.0)
    line = build_grid(1, [(0, 1)], 8)
    np.testing.assert_allclose(gradient_field(line, 3 * line.coords()[0] + 1), 3.0, atol=1e-13)


def test_gradient_field_grid_mismatch():
    g = build_grid(1, [(0, 1)], 4)
    with pytest.raises(ValueError):
        gradient_field(g, np.zeros(7))


def test_integrate_nodal_examples():
    sq = build_grid(2, [(0, 1), (0, 1)], (6, 6))
    assert integrate_nodal(sq, np.ones(sq.n_nodes)) == pytest.approx(1.0, rel=1e-12)
    rect = build_grid(2, [(0, 2), (0, 3)], (4, 5))
    assert integrate_nodal(rect, np.full(rect.n_nodes, 2.5)) == pytest.approx(15.0, rel=1e-12)
    line = build_grid(1, [(0, 1)], 4)
    w = np.zeros(line.n_nodes)
    w[2] = 1.0
    assert integrate_nodal(line, w) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        integrate_nodal(line, np.ones(3))


def test_seminorm_examples():
    line = build_grid(1, [(0, 1)], 2)
    assert seminorm_X(line, EUC, 2.0, np.zeros(3)) == 0.0
    a = -0.7
    assert seminorm_X(line, EUC, 2.0, [0, a, 0]) == pytest.approx(2 * abs(a), rel=1e-14)
    u = random_field(build_grid(2, [(0, 1), (0, 1)], (5, 5)), seed=3)
    grid = build_grid(2, [(0, 1), (0, 1)], (5, 5))
    for norm in NORMS.values():
        assert seminorm_X(grid, norm, 2.5, 2 * u) == pytest.approx(2 * seminorm_X(grid, norm, 2.5, u), rel=1e-12)
        assert seminorm_X(grid, norm, 2.5, u) > 0


def _assembled_stiffness(grid):
    """Element-by-element P1 stiffness assembly from vertex coordinates."""
    n = grid.n_nodes
    k = np.zeros((n, n))
    for tri in grid.simplices:
        pts = grid.nodes[tri]
        if grid.dim == 1:
            h = abs(pts[1, 0] - pts[0, 0])
            local = np.array([[1, -1], [-1, 1]]) / h
        else:
            m = np.column_stack([np.ones(3), pts])
            area = 0.5 * abs(np.linalg.det(m))
            grads = np.linalg.inv(m)[1:].T
            local = area * grads @ grads.T
        k[np.ix_(tri, tri)] += local
    return k


@pytest.mark.parametrize("res", [(2, 2), (3, 5), (8, 8)])
def test_seminorm_matches_assembled_h1(res):
    grid = build_grid(2, [(0, 1), (0, 1)], res)
    k = _assembled_stiffness(grid)
    for seed in range(3):
        u = random_field(grid, seed)
        assert seminorm_X(grid, EUC, 2.0, u) == pytest.approx(math.sqrt(u @ k @ u), rel=1e-10)


def test_seminorm_refinement_is_cauchy():
    vals = []
    for res in (8, 16, 32, 64):
        g = build_grid(2, [(0, 1), (0, 1)], (res, res))
        x, y = g.coords()
        vals.append(seminorm_X(g, EUC, 2.0, np.sin(np.pi * x) * np.sin(np.pi * y)))
    diffs = np.abs(np.diff(vals))
    assert np.all(diffs[1:] * 3 <= diffs[:-1])
    # the continuous H1 seminorm of sin(pi x) sin(pi y) is pi / sqrt(2)
    assert vals[-1] == pytest.approx(math.pi / math.sqrt(2), rel=1e-3)


def test_integrate_power_exact_for_constants():
    g = build_grid(2, [(0, 1), (0, 2)], (3, 4))
    assert integrate_power(g, np.full(g.n_nodes, 2.0), 3.0) == pytest.approx(16.0, rel=1e-12)


def test_field_csv_roundtrip(tmp_path):
    g = build_grid(2, [(0, 1), (0, 1)], (3, 2))
    u = random_field(g, 5) / 3
    path = tmp_path / "f.csv"
    write_field_csv(g, u, path)
    text = path.read_text()
    assert text.splitlines()[0] == "x,y,u"
    assert text == field_csv(g, u)
    np.testing.assert_array_equal(read_field_csv(g, path), u)


def test_strip_mask_distance():
    g = build_grid(1, [(0, 1)], 10)
    np.testing.assert_array_equal(np.nonzero(g.strip_mask(0.25))[0], [0, 1, 2, 8, 9, 10])
