import numpy as np
import pytest

from manp.grid import (
    CellField,
    EdgeField,
    Grid,
    GridMismatchError,
    VertexField,
    inner_cell,
    inner_edge,
    norm_cell,
    norm_edge,
    read_snapshot,
    write_snapshot,
)


def test_grid_spacing_and_coordinates():
    g = Grid.square(4, -1.0, 1.0)
    assert g.h == 0.5
    X, Y = g.cell_centers()
    assert X[0, 0] == -0.75 and Y[0, 3] == 0.75
    Xx, Yx = g.xface_centers()
    assert Xx[0, 0] == -0.5 and Yx[0, 0] == -0.75
    Xy, Yy = g.yface_centers()
    assert Xy[0, 0] == -0.75 and Yy[0, 0] == -0.5
    Xv, Yv = g.vertices()
    assert Xv[3, 3] == 1.0 and Yv[0, 0] == -0.5


@pytest.mark.parametrize("args", [(3, 8), (8, 8, 1.0, 2.0), (8, 8, -1.0, 1.0), (4.5, 4)])
def test_grid_rejects_bad_shapes(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_field_shape_and_finiteness_checked():
    g = Grid(4, 4)
    with pytest.raises(ValueError):
        CellField(g, np.zeros((4, 5)))
    with pytest.raises(ValueError):
        CellField(g, np.full((4, 4), np.nan))


def test_fields_are_read_only():
    g = Grid(4, 4)
    c = g.ones_cell()
    with pytest.raises(ValueError):
        c.values[0, 0] = 2.0


def test_one_based_access_wraps():
    g = Grid(4, 4)
    v = np.arange(16.0).reshape(4, 4)
    c = CellField(g, v)
    assert c.at(1, 1) == 0.0
    assert c.at(0, 1) == v[3, 0]
    assert c.at(5, 6) == v[0, 1]
    e = EdgeField(g, v, -v)
    assert e.at_x(0, 0) == v[3, 3]
    assert e.at_y(2, 1) == -v[1, 0]
    assert VertexField(g, v).at(4, 4) == 15.0


def test_arithmetic_and_mismatch():
    g = Grid(4, 4)
    a = g.ones_cell()
    b = 2.0 * a + 1.0 - a / 2.0
    np.testing.assert_allclose(b.values, 2.5)
    np.testing.assert_allclose((-b).values, -2.5)
    e = g.zeros_edge() + 1.0
    np.testing.assert_allclose((e * e).x, 1.0)
    with pytest.raises(GridMismatchError):
        a + Grid(8, 8).ones_cell()
    with pytest.raises(GridMismatchError):
        inner_cell(a, Grid(8, 8).ones_cell())


def test_inner_products_match_brute_force(rng):
    g = Grid.square(6, -1.0, 1.0)
    a, b = CellField(g, rng.random(g.shape)), CellField(g, rng.random(g.shape))
    brute = sum(a.values[i, j] * b.values[i, j] for i in range(6) for j in range(6)) * g.h ** 2
    assert inner_cell(a, b) == pytest.approx(brute, rel=1e-14)
    f = EdgeField(g, rng.random(g.shape), rng.random(g.shape))
    k = EdgeField(g, rng.random(g.shape), rng.random(g.shape))
    # averaged-face form: every periodic face counted twice with weight h^2/2
    half = 0.0
    for i in range(6):
        for j in range(6):
            half += 0.5 * (f.x[i, j] * k.x[i, j] + f.x[i - 1, j] * k.x[i - 1, j])
            half += 0.5 * (f.y[i, j] * k.y[i, j] + f.y[i, j - 1] * k.y[i, j - 1])
    assert inner_edge(f, k) == pytest.approx(half * g.h ** 2, rel=1e-14)


def test_norms():
    g = Grid.square(4, 0.0, 2.0)
    c = CellField(g, np.full(g.shape, -3.0))
    assert norm_cell(c, np.inf) == 3.0
    assert norm_cell(c, 1) == pytest.approx(12.0)
    assert norm_cell(c, 2) == pytest.approx(6.0)
    e = EdgeField(g, np.ones(g.shape), np.zeros(g.shape))
    assert norm_edge(e, "inf") == 1.0
    assert norm_edge(e, 2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        norm_cell(c, 3)


def test_sample_cell_and_total_area():
    g = Grid.square(8, -1.0, 1.0)
    c = g.sample_cell(lambda x, y: x * 0 + 0.1)
    assert inner_cell(c, g.ones_cell()) == pytest.approx(0.4)
    assert g.area == 4.0


@pytest.mark.parametrize("kind", ["cell", "edge", "vertex"])
def test_snapshot_roundtrip(tmp_path, rng, kind):
    g = Grid(8, 4, 2.0, 1.0, -1.0, 0.5)
    if kind == "cell":
        f = CellField(g, rng.standard_normal(g.shape))
    elif kind == "vertex":
        f = VertexField(g, rng.standard_normal(g.shape))
    else:
        f = EdgeField(g, rng.standard_normal(g.shape), rng.standard_normal(g.shape))
    path = tmp_path / "snap.txt"
    write_snapshot(path, f)
    back = read_snapshot(path)
    assert type(back) is type(f)
    assert back.grid == g
    for a, b in zip(f._arrays(), back._arrays()):
        np.testing.assert_array_equal(a, b)
    assert path.read_text().splitlines()[0].split()[:3] == [type(f).__name__.upper(), "8", "4"]
