import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from manp.etd import (
    ContractionError,
    PicardError,
    PositivityError,
    contraction_check,
    convection_matrix,
    picard_solve,
    positivity_condition_check,
    step_concentrations,
)
from manp.grid import CellField, EdgeField, Grid
from manp.operators import laplacian_arrays
from manp.physics import ModelParams, SimState, SpeciesParams, bernoulli
from manp.spectral import SpectralMultipliers


def _dense_L(grid, kappa, lam):
    n = grid.nx * grid.ny
    eye = np.eye(n).reshape(n, *grid.shape)
    lap = np.stack([laplacian_arrays(e, grid.h).ravel() for e in eye], axis=1)
    return -kappa * lap + lam * np.eye(n)


def _dense_etd(grid, kappa, lam, dt):
    # dt f_e(dt L) = int_0^dt e^{-sL} ds = L^{-1} (I - e^{-dt L})
    L = _dense_L(grid, kappa, lam)
    return np.linalg.solve(L, np.eye(len(L)) - scipy.linalg.expm(-dt * L))


def _random_dg(grid, rng, scale):
    return EdgeField(grid, scale * rng.standard_normal(grid.shape), scale * rng.standard_normal(grid.shape))


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_etd_matrix_positive_with_known_row_sums(lam):
    grid = Grid.square(6, 0.0, 1.0)
    dt = 3e-3
    P = _dense_etd(grid, 0.3, lam, dt)
    assert P.min() > 0
    np.testing.assert_allclose(P.sum(axis=1), (1 - np.exp(-lam * dt)) / lam, rtol=0, atol=1e-13)


def test_spectral_etd_matches_dense(rng):
    grid = Grid.square(6, 0.0, 1.0)
    m = SpectralMultipliers(grid, 0.3, 2.0)
    v = rng.standard_normal(grid.shape)
    dense = _dense_etd(grid, 0.3, 2.0, 2e-3) @ v.ravel()
    np.testing.assert_allclose(m.apply("f_e", 2e-3, v, scale=2e-3).ravel(), dense, atol=1e-14)


@pytest.mark.parametrize("scale", [0.0, 1.0, 5.0])
def test_picard_matches_dense_solve(rng, scale):
    grid = Grid.square(6, 0.0, 1.0)
    kappa, lam, dt = 0.2, 2.0, 1e-3
    dg = _random_dg(grid, rng, scale)
    c_n = CellField(grid, 0.5 + rng.random(grid.shape))
    m = SpectralMultipliers(grid, kappa, lam)
    res = picard_solve(c_n, dg, dt, m, tol=1e-14, max_iter=500, enforce_contraction=False)
    A = np.eye(grid.nx * grid.ny) - _dense_etd(grid, kappa, lam, dt) @ convection_matrix(dg, kappa)
    exact = np.linalg.solve(A, c_n.values.ravel())
    np.testing.assert_allclose(res.c.values.ravel(), exact, atol=1e-10)
    # the stored forcing reproduces the returned iterate exactly
    again = c_n.values + m.apply("f_e", dt, res.m_forcing, scale=dt)
    np.testing.assert_array_equal(again, res.c.values)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 6.0))
def test_picard_conserves_mass(seed, scale):
    rng = np.random.default_rng(seed)
    grid = Grid.square(8, 0.0, 1.0)
    m = SpectralMultipliers(grid, 0.1, 2.0)
    c_n = CellField(grid, 0.2 + rng.random(grid.shape))
    res = picard_solve(c_n, _random_dg(grid, rng, scale), 1e-4, m, enforce_contraction=False)
    assert abs(res.c.values.sum() - c_n.values.sum()) <= 1e-12 * c_n.values.sum()
    assert res.c.values.min() > 0


def test_contraction_check_formula():
    grid = Grid.square(8, 0.0, 1.0)
    dg = EdgeField(grid, np.full(grid.shape, 2.0), np.zeros(grid.shape))
    ok, margin = contraction_check(dg, 1e-4, grid.h, 0.5)
    assert margin == pytest.approx(16 * 0.5 * bernoulli(-2.0) * 1e-4 * 64)
    assert ok
    assert not contraction_check(dg, 1.0, grid.h, 0.5)[0]
    # several species use the largest |dg| over all of them
    big = EdgeField(grid, np.zeros(grid.shape), np.full(grid.shape, -3.0))
    assert contraction_check([dg, big], 1e-4, grid.h, 0.5)[1] == pytest.approx(
        16 * 0.5 * bernoulli(-3.0) * 1e-4 * 64)


def test_contraction_enforced_and_failure_reported(rng):
    grid = Grid.square(8, 0.0, 1.0)
    m = SpectralMultipliers(grid, 1.0, 2.0)
    dg = _random_dg(grid, rng, 1.0)
    c_n = CellField(grid, 1.0 + rng.random(grid.shape))
    with pytest.raises(ContractionError):
        picard_solve(c_n, dg, 1.0, m, enforce_contraction=True)
    with pytest.raises(PicardError) as info:
        picard_solve(c_n, dg, 1e-3, m, max_iter=1, enforce_contraction=False)
    assert info.value.iterations == 1 and info.value.last_update > 0
    with pytest.raises(ValueError):
        picard_solve(c_n, dg, 0.0, m)


def test_positivity_condition_report(rng):
    grid = Grid.square(6, 0.0, 1.0)
    dg = _random_dg(grid, rng, 1.0)
    rep = positivity_condition_check([dg], 1e-5, grid.h, 0.1, 2.0)
    assert rep.evaluated and rep.alpha_min > 0
    inv = np.linalg.inv(np.eye(grid.nx * grid.ny) - 1e-5 * convection_matrix(dg, 0.1))
    assert rep.alpha_min == pytest.approx(inv.min())
    assert rep.lhs == pytest.approx((4 * 0.1 * 36 + 0.5) * 1e-5)
    assert rep.holds == (rep.lhs < rep.alpha_min / (4 + 2 * rep.alpha_min))
    big = Grid.square(16, 0.0, 1.0)
    assert not positivity_condition_check(big.zeros_edge(), 1e-5, big.h, 0.1, 2.0).evaluated
    assert "not evaluated" in str(positivity_condition_check(big.zeros_edge(), 1e-5, big.h, 0.1, 2.0))


def _state(grid, c):
    return SimState(0.0, c, grid.zeros_edge(), grid.zeros_edge())


def _params(grid, **kw):
    return ModelParams(kappa=0.1, species=(SpeciesParams(1), SpeciesParams(-1)),
                       eps_cell=grid.ones_cell(), eps_edge=grid.zeros_edge() + 1.0,
                       rho_f=grid.zeros_cell(), **kw)


@pytest.mark.parametrize("mode", ["implicit", "explicit"])
def test_step_concentrations_modes(rng, mode):
    grid = Grid.square(8, 0.0, 1.0)
    p = _params(grid)
    m = SpectralMultipliers(grid, p.kappa, p.lam)
    c = [CellField(grid, 0.5 + 0.1 * rng.random(grid.shape)) for _ in range(2)]
    st_ = SimState(0.0, c, EdgeField(grid, rng.standard_normal(grid.shape), rng.standard_normal(grid.shape)),
                   grid.zeros_edge())
    out = step_concentrations(st_, p, 1e-4, m, mode=mode)
    for old, new, it in zip(c, out.c, out.iterations):
        assert new.values.sum() == pytest.approx(old.values.sum(), rel=1e-13)
        assert (it == 0) == (mode == "explicit")
    J = out.fluxes()
    assert len(J) == 2 and J[0].grid is grid
    with pytest.raises(ValueError):
        step_concentrations(st_, p, 1e-4, m, mode="crank")


def test_positivity_loss_is_raised():
    grid = Grid.square(8, 0.0, 1.0)
    p = _params(grid)
    m = SpectralMultipliers(grid, p.kappa, p.lam)
    v = np.full(grid.shape, 1e-3)
    v[0, 0] = 5.0
    D = EdgeField(grid, np.full(grid.shape, 40.0), np.zeros(grid.shape))
    st_ = SimState(0.0, [CellField(grid, v)] * 2, D, grid.zeros_edge())
    with pytest.raises(PositivityError) as info:
        step_concentrations(st_, p, 0.05, m, mode="explicit")
    assert info.value.value <= 0
