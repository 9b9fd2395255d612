from __future__ import annotations

import numpy as np
import pytest

from robinscatter.errors import AccuracyError, AliasingError, AssumptionViolation, SingularityError
from robinscatter.field_synth import CovarianceModel, build_quadratic_strength, default_anisotropy, sample_field
from robinscatter.forward import (BoundaryDensity, MeasurementConfig, SlpOperator, apply_slp_boundary,
                                  apply_slp_direct, born_band, born_geometry, born_series, born_u1, estimate_correlation,
                                  greens, measure, measure_dataset, scattered_field, slp_multiplier,
                                  slp_norm, solve_density)
from robinscatter.grid import Disk, GridSpec2D

X1 = np.array([1.5, 0.0, 0.5])


def test_measurement_config_assumptions():
    with pytest.raises(AssumptionViolation, match=r"\(A4\) violated: p ≤ ε \+ 1/2"):
        MeasurementConfig([X1], p=0.9, epsilon=0.5)
    with pytest.raises(AssumptionViolation, match=r"\(A3\)"):
        MeasurementConfig([[0.2, 0.1, 0.5]])
    with pytest.warns(RuntimeWarning):
        MeasurementConfig([X1], band=(1.0, 5.0))
    mc = MeasurementConfig([X1], band=(1.0, 11.0))
    nodes, w = mc.quadrature()
    assert w.sum() == pytest.approx(10.0)
    assert mc.p == pytest.approx(1.5)


def test_greens_singular_at_origin():
    with pytest.raises(SingularityError):
        greens(np.zeros(3), 2.0)
    assert greens(np.array([0, 0, 1.0]), 0.0) == pytest.approx(1 / (4 * np.pi))


def test_multiplier_branches():
    KX = np.array([[0.0, 3.0, 10.0]])
    m = slp_multiplier(KX, np.zeros_like(KX), 5.0, dxi=0.01)
    assert m[0, 0] == pytest.approx(0.5j / 5.0)
    assert m[0, 1] == pytest.approx(0.5j / 4.0)
    assert m[0, 2] == pytest.approx(0.5 / np.sqrt(75.0))


def _random_density(grid, disk, rng):
    X, Y = grid.mesh()
    r2 = (X ** 2 + Y ** 2) / disk.radius ** 2
    bump = np.where(r2 < 1, np.exp(1 - 1 / np.maximum(1 - r2, 1e-300)), 0.0)
    c = rng.normal(size=(6, 6))
    sm = sum(c[i, j] * np.cos(i * X + 0.3 * j) * np.cos(j * Y - 0.2 * i) for i in range(6) for j in range(6))
    return sm * bump


def test_multiplier_matches_direct_quadrature(rng):
    g = GridSpec2D.centered(1.25, 64)
    disk = Disk()
    inside = disk.contains(g.points())
    for _ in range(3):
        phi = BoundaryDensity(g, _random_density(g, disk, rng).astype(complex), 5.0)
        a = apply_slp_direct(phi)
        b = apply_slp_boundary(phi, disk=disk)
        assert np.linalg.norm((a - b)[inside]) / np.linalg.norm(a[inside]) < 0.02


def test_adjoint_identity(rng):
    g = GridSpec2D.centered(1.25, 32)
    op = SlpOperator(g, 4.0)
    x = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    y = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    assert np.vdot(y, op.apply(x)) == pytest.approx(np.vdot(op.adjoint(y), x), rel=1e-10)


def test_aliasing_guard():
    with pytest.raises(AliasingError):
        SlpOperator(GridSpec2D.centered(1.25, 16), 30.0)


def test_norm_decreases_with_k():
    g = GridSpec2D.centered(1.25, 64)
    n1 = slp_norm(g, Disk(), 4.0)
    n2 = slp_norm(g, Disk(), 16.0)
    assert n2 < n1
    assert np.log(n2 / n1) / np.log(4.0) == pytest.approx(-0.5, abs=0.2)


@pytest.fixture(scope="module")
def lam256():
    g = GridSpec2D.centered(1.25, 256)
    model = CovarianceModel(build_quadratic_strength(default_anisotropy(g), 0.5))
    return sample_field(model, seed=1)


def test_born_identity(lam256):
    mc = MeasurementConfig([X1])
    k = 20.0
    bs = born_series(lam256, X1, k, mc, n_terms=3)
    u_from_density = scattered_field(bs.terms[0], X1, k)
    assert abs(u_from_density - born_u1(lam256, X1, X1, k, mc.p)) < 1e-10 * abs(u_from_density)
    assert bs.converging
    assert np.all(np.diff(np.log(np.linalg.norm([t.values for t in bs.terms], axis=(1, 2)))) < 0)


def test_full_solve_close_to_born(lam256):
    mc = MeasurementConfig([X1])
    k = 25.0
    phi = solve_density(lam256, X1, k, mc)
    us = scattered_field(phi, X1, k)
    u1 = born_u1(lam256, X1, X1, k, mc.p)
    assert abs(us - u1) < 0.01 * abs(u1)
    assert phi.residual_history[-1] < 1e-7


def test_kh_guard(lam256):
    with pytest.raises(AccuracyError):
        born_u1(lam256, X1, X1, 200.0, 1.5)


def test_binned_equals_direct(lam256):
    ks = np.linspace(1, 25, 97)
    a = born_band(lam256, X1, X1, ks, 1.5, method="binned")
    b = born_band(lam256, X1, X1, ks, 1.5, method="direct")
    # second-order expansion per bin: error below (k delta / 2)^3 / 6 times sum |w|
    _, w = born_geometry(lam256.grid, X1, X1)
    wsum = np.abs(w * lam256.values).sum()
    bound = (ks * 0.2 / ks.max() / 2) ** 3 / 6 * wsum / (4 * np.pi ** 2 * ks ** 1.5)
    assert np.all(np.abs(a - b) <= bound)
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-3


def test_zero_field_gives_zero_data(lam256):
    zero = lam256.scaled(0.0)
    mc = MeasurementConfig([X1], band=(1.0, 20.0))
    assert measure(zero, X1, mc).value == 0.0


def test_measure_scales_quadratically(lam256):
    mc = MeasurementConfig([X1], band=(1.0, 20.0))
    a = measure(lam256, X1, mc).value
    b = measure(lam256.scaled(2.0), X1, mc).value
    assert b == pytest.approx(4 * a, rel=1e-12)


def test_measure_dataset_worker_independent(lam256):
    mc = MeasurementConfig([X1, [0.0, -1.8, 0.8], [-1.4, 0.9, 0.6]], band=(1.0, 20.0))
    a = measure_dataset(lam256, mc, workers=1)
    b = measure_dataset(lam256, mc, workers=3)
    assert np.array_equal(a.n0, b.n0)


def test_estimate_correlation_rejects_interior(default_model):
    with pytest.raises(AssumptionViolation):
        estimate_correlation(default_model, [0.1, 0.0, 0.5], X1, 5.0, 5.0, 4)
