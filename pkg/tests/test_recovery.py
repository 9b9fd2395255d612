from __future__ import annotations

import numpy as np
import pytest

from robinscatter.asymptotics import diagonal_R, area_constant, radial_kernel, radial_rule
from robinscatter.errors import ConfigurationError, InconsistencyError, ModelMismatchError
from robinscatter.field_synth import build_quadratic_strength, default_anisotropy, isotropic_anisotropy
from robinscatter.grid import Disk, GridSpec2D
from robinscatter.recovery import (ReductionProblem, make_heights, make_radii, recover_components,
                                   recover_trace, reduce_to_radon, reduction_matrix, relative_l2)
from robinscatter.sradon import (AngularField, FourierRadon, SpectralSlices, extract_slices,
                                 fourier_radon_identity, radon_forward)

DISK = Disk()
BOX = GridSpec2D.centered(2.0, 128)
CENTERS = GridSpec2D.centered(2.0, 64)
RADII = np.linspace(0.0, 2.0, 65)[:-1]


def _bump_data(center, peak, width=0.05):
    """n0 for a Gaussian radial profile, integrated on a fine rule (not the hat basis)."""
    H = make_heights(center, DISK)
    r = make_radii(center, DISK)
    q, w = radial_rule(r[0], r[-1], 0.01, width=0.005)
    prof = np.exp(-(q - peak) ** 2 / (2 * width ** 2))
    n0 = np.array([area_constant(0.5) * np.sum(w * radial_kernel(q, h, 0.5, "area") * prof) for h in H])
    return H, r, n0


@pytest.fixture(scope="module")
def strength256():
    return build_quadratic_strength(default_anisotropy(GridSpec2D.centered(1.25, 256)), 0.5)


def test_problem_invariants():
    c = (1.5, 0.0)
    H = make_heights(c, DISK)
    r = make_radii(c, DISK)
    n0 = np.ones(H.size)
    ReductionProblem(c, H, n0, r)
    with pytest.raises(ConfigurationError, match="12"):
        ReductionProblem(c, H[:10], n0[:10], r)
    with pytest.raises(ConfigurationError, match="log-spaced"):
        Hl = np.linspace(H[0], H[-1], H.size)
        ReductionProblem(c, Hl, n0, r)
    with pytest.raises(ConfigurationError, match="cover"):
        ReductionProblem(c, H, n0, r[2:])
    with pytest.raises(ConfigurationError):
        ReductionProblem(c, -H, n0, r)


def test_hat_matrix_integrates_linear_profiles():
    r = make_radii((1.5, 0.0), DISK)
    H = make_heights((1.5, 0.0), DISK)
    K = reduction_matrix(r, H, 0.5)
    q, w = radial_rule(r[0], r[-1], 0.01, width=0.01)
    for prof in (lambda x: 1.0 + 0 * x, lambda x: 2.0 - x):
        ref = np.array([area_constant(0.5) * np.sum(w * radial_kernel(q, h, 0.5, "area") * prof(q)) for h in H])
        assert np.allclose(K @ prof(r), ref, rtol=1e-10)


def test_zero_and_negative_data():
    c = (1.5, 0.0)
    H = make_heights(c, DISK)
    r = make_radii(c, DISK)
    res = reduce_to_radon(ReductionProblem(c, H, np.zeros(H.size), r))
    assert not res.values.any()
    with pytest.raises(ModelMismatchError):
        reduce_to_radon(ReductionProblem(c, H, -np.ones(H.size), r))


@pytest.mark.parametrize("center", [(1.5, 0.2), (0.0, -2.0), (1.2, 1.2), (0.3, 0.1)])
def test_round_trip_default_phantom(strength256, center):
    c = np.array(center)
    H = make_heights(c, DISK)
    r = make_radii(c, DISK)
    n0 = diagonal_R(strength256, np.array([[c[0], c[1], h] for h in H]), "area", allow_interior=True)
    res = reduce_to_radon(ReductionProblem(center, H, n0, r))
    ref = radon_forward(AngularField.from_strength(strength256), c[None], r, boundary="zero").values[0]
    assert relative_l2(res.values, ref) <= 0.06
    assert res.residual < 1e-3


@pytest.mark.parametrize("center,offset", [((1.6, 0.0), 0.3), ((1.6, 0.0), 1.0), ((1.6, 0.0), 1.7),
                                           ((0.3, 0.0), 0.3), ((0.3, 0.0), 1.7)])
def test_bump_localisation(center, offset):
    r0 = make_radii(center, DISK)[0] + offset
    H, r, n0 = _bump_data(center, r0)
    res = reduce_to_radon(ReductionProblem(center, H, n0, r))
    assert abs(r[np.argmax(res.values)] - r0) <= 2 * (r[1] - r[0])


def test_linearity_and_stability():
    c = (1.6, 0.0)
    H, r, n0 = _bump_data(c, 1.2)
    base = reduce_to_radon(ReductionProblem(c, H, n0, r)).values
    assert np.allclose(reduce_to_radon(ReductionProblem(c, H, 2.5 * n0, r)).values, 2.5 * base, rtol=1e-8)
    delta = 0.01
    medians = []
    for wt in (1e-5, 1e-4, 1e-3, 1e-2):
        ref = reduce_to_radon(ReductionProblem(c, H, n0, r, weight=wt)).values
        C = []
        for seed in range(6):
            pert = n0 * (1 + delta * np.random.default_rng(seed).uniform(-1, 1, H.size))
            out = reduce_to_radon(ReductionProblem(c, H, pert, r, weight=wt)).values
            C.append(relative_l2(out, ref) / delta)
        medians.append(float(np.median(C)))
    # the stability constant C stays finite across the sweep and falls as the penalty grows
    assert np.all(np.isfinite(medians))
    assert np.all(np.diff(medians) < 0)
    assert medians[1] < 200


def test_inconsistent_data_rejected():
    c = (1.6, 0.0)
    H, r, n0 = _bump_data(c, 1.2)
    rough = n0 * np.exp(np.random.default_rng(0).normal(0, 0.5, H.size))
    with pytest.raises(ModelMismatchError):
        reduce_to_radon(ReductionProblem(c, H, rough, r))


def _slices(A):
    fld = AngularField.from_quadratic(BOX, A.a1, A.a2, A.a3, periodic=True)
    return extract_slices(FourierRadon(CENTERS, RADII, fourier_radon_identity(fld, CENTERS, RADII)))


def _sub(x):
    return x[::2, ::2]


@pytest.fixture(scope="module")
def phantom():
    A = default_anisotropy(BOX)
    return A, _slices(A)


def test_trace_recovery(phantom):
    A, sl = phantom
    rec = recover_trace(sl)
    assert relative_l2(rec.trace, _sub(A.trace)) < 0.02
    assert rec.diagnostics["imag_residual"] < 1e-10
    # DC consistency: the integral of the recovered trace is the xi = 0 slice value
    area_integral = rec.trace.sum() * CENTERS.h ** 2
    assert area_integral == pytest.approx(sl.trace[0, 0].real, rel=0.02)


def test_components_with_a3_known(phantom):
    A, sl = phantom
    rec = recover_components(sl, "a3", _sub(A.a3))
    assert relative_l2(rec.a1, _sub(A.a1)) < 0.07
    assert relative_l2(rec.a2, _sub(A.a2)) < 0.07
    assert np.allclose(rec.a1 + rec.a2, rec.trace)


@pytest.mark.parametrize("known", ["a1", "a2"])
def test_components_with_diagonal_known(phantom, known):
    A, sl = phantom
    rec = recover_components(sl, known, _sub(getattr(A, known)))
    other = "a2" if known == "a1" else "a1"
    assert relative_l2(getattr(rec, other), _sub(getattr(A, other))) < 0.02
    assert relative_l2(rec.a3, _sub(A.a3)) < 0.15


def test_wrong_known_component_rejected(phantom):
    A, sl = phantom
    with pytest.raises(InconsistencyError):
        recover_components(sl, "a3", _sub(A.a3 + 0.5 * A.trace))
    with pytest.raises(ConfigurationError):
        recover_components(sl, "b", _sub(A.a3))


def test_isotropic_splits_evenly():
    A = isotropic_anisotropy(BOX)
    rec = recover_components(_slices(A), "a3", np.zeros(CENTERS.shape))
    assert relative_l2(rec.a1, _sub(A.trace) / 2) < 0.02
    assert np.allclose(rec.a1, rec.a2, atol=1e-12)
    assert np.max(np.abs(rec.a3)) == 0.0


def test_zero_slices_give_zero():
    z = np.zeros(CENTERS.shape, complex)
    sl = SpectralSlices(CENTERS, z, z, np.ones(CENTERS.shape, bool), np.ones(CENTERS.shape),
                        np.ones(CENTERS.shape, int), {"xi_max": np.inf})
    assert not recover_trace(sl).trace.any()
    rec = recover_components(sl, "a3", np.zeros(CENTERS.shape))
    assert not rec.a1.any() and not rec.a2.any()


def test_masked_fraction_warns(phantom):
    _, sl = phantom
    thin = SpectralSlices(sl.grid, sl.slice_par, sl.slice_perp, np.zeros(sl.grid.shape, bool), sl.cond,
                          sl.modes, sl.diagnostics)
    with pytest.warns(RuntimeWarning, match="masked"):
        recover_trace(thin)
