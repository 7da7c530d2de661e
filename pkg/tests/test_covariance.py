import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FAMILY_CASES, family_model, family_points, lonlat_points, random_points
from stmra.covariance import (
    EARTH_RADIUS_KM,
    RB_CENTERS,
    CovarianceModel,
    chordal,
    cov_m1,
    cov_m2,
    cov_m3,
    cov_matrix,
    cov_metric,
    great_circle,
    kernel_convolution,
    m3_processes,
    rb_process,
)
from stmra.errors import ConfigurationError, ParameterError


def _unit_vector(lon, lat):
    lon, lat = np.radians(lon), np.radians(lat)
    return np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


# -- distances -------------------------------------------------------------


def test_quarter_great_circle():
    assert great_circle((0, 0), (90, 0)) == pytest.approx(math.pi / 2 * EARTH_RADIUS_KM, rel=1e-12)
    assert great_circle((0, 0), (90, 0)) == pytest.approx(10007.5, abs=0.1)


def test_zero_distance():
    assert great_circle((12.3, -45.6), (12.3, -45.6)) == 0.0


def test_antipodal():
    assert great_circle((0.0, 0.0), (180.0, 0.0)) == pytest.approx(math.pi * EARTH_RADIUS_KM, rel=1e-14)
    # haversine is ill-conditioned at antipodes: about 1e-8 relative in general
    p, q = (30.0, 40.0), (-150.0, -40.0)
    assert great_circle(p, q) == pytest.approx(math.pi * EARTH_RADIUS_KM, rel=1e-7)
    assert great_circle(p, q) == pytest.approx(20015.1, abs=0.1)
    assert chordal(p, q) == pytest.approx(2 * EARTH_RADIUS_KM, rel=1e-12)


def test_distances_match_vector_geometry(rng):
    lon1, lon2 = rng.uniform(-180, 180, (2, 200))
    lat1, lat2 = rng.uniform(-90, 90, (2, 200))
    u, v = _unit_vector(lon1, lat1), _unit_vector(lon2, lat2)
    chord = np.linalg.norm(u - v, axis=0) * EARTH_RADIUS_KM
    angle = np.arctan2(np.linalg.norm(np.cross(u.T, v.T), axis=1), np.sum(u * v, axis=0))
    p1, p2 = np.column_stack([lon1, lat1]), np.column_stack([lon2, lat2])
    np.testing.assert_allclose(chordal(p1, p2), chord, rtol=1e-9, atol=1e-6)
    np.testing.assert_allclose(great_circle(p1, p2), angle * EARTH_RADIUS_KM, rtol=1e-9, atol=1e-6)


# -- metric family -----------------------------------------------------------

STUDY = (0.2, 0.05, 0.05, 0.02)


def test_metric_zero_lag():
    assert cov_metric(STUDY, (0.3, 0.4, 0.5), (0.3, 0.4, 0.5)) == pytest.approx(0.1)


def test_metric_study_value():
    val = cov_metric(STUDY, (0.1, 0.0, 0.0), (0.0, 0.0, 0.0))
    assert val == pytest.approx(0.05 * math.exp(-0.5), rel=1e-12)
    assert val == pytest.approx(0.03033, abs=1e-5)


def test_metric_decays_to_zero():
    d = np.geomspace(1e-3, 50, 40)
    vals = [cov_metric(STUDY, (x, 0, 0), (0, 0, 0)) for x in d]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-100


def test_metric_anisotropy_scales_time():
    a = cov_metric(STUDY, (0, 0, 5.0), (0, 0, 0))
    b = cov_metric(STUDY, (0.1, 0, 0), (0, 0, 0))
    assert a == pytest.approx(b, rel=1e-12)


def test_metric_unit_anisotropy_is_isotropic(rng):
    theta = (0.4, 1.3, 0.2, 1.0)
    for _ in range(20):
        p, q = rng.random(3), rng.random(3)
        assert cov_metric(theta, p, q) == pytest.approx(1.3 * math.exp(-np.linalg.norm(p - q) / 0.4), rel=1e-12)


# -- separable (M1) ----------------------------------------------------------


def test_m1_zero_lag():
    assert cov_m1((2, 10, 5, 0.1, 0.1), (1, 1, 1), (1, 1, 1)) == pytest.approx(2.0)


def test_m1_value():
    val = cov_m1((2, 10, 5, 0.1, 0.1), (10, 0, 5), (0, 0, 0))
    assert val == pytest.approx(2 * (0.9 * math.exp(-1)) ** 2, rel=1e-12)
    assert val == pytest.approx(0.2193, abs=1e-4)


def test_m1_nugget_free_limit():
    val = cov_m1((2, 10, 5, 1e-12, 1e-12), (30, 0, 20), (0, 0, 0))
    assert val == pytest.approx(2 * math.exp(-3) * math.exp(-4), rel=1e-9)


# -- nonseparable sphere (M2) ------------------------------------------------


def test_m2_zero_lag():
    assert cov_m2((1.5, 100, 2, 0.3), 0.0, 0.0) == pytest.approx(1.8)


def test_m2_half_scale():
    assert cov_m2((1.5, 100, 2, 0.3), 100.0, 0.0) == pytest.approx(0.75)


def test_m2_value():
    val = cov_m2((1, 1, 1, 0), 1.0, 1.0)
    assert val == pytest.approx(0.5 * math.exp(-(2 ** -0.25)), rel=1e-12)
    assert val == pytest.approx(0.2157, abs=1e-4)


def test_m2_nonseparable():
    th = (1.0, 300.0, 2.0, 0.0)
    joint = cov_m2(th, 300.0, 2.0) * cov_m2(th, 0.0, 0.0)
    product = cov_m2(th, 300.0, 0.0) * cov_m2(th, 0.0, 2.0)
    assert abs(joint - product) > 1e-3


def test_m2_model_matches_lag_form(rng):
    model = CovarianceModel("m2", (1.0, 2000.0, 3.0, 0.1))
    A, B = lonlat_points(30, rng), lonlat_points(30, rng)
    K = model.matrix(A, B)
    for i in range(0, 30, 7):
        for j in range(0, 30, 5):
            ds = great_circle(A[i, :2], B[j, :2])
            assert K[i, j] == pytest.approx(cov_m2(model.theta, ds, abs(A[i, 2] - B[j, 2])), rel=1e-12)


def test_m2_requires_great_circle():
    with pytest.raises(ConfigurationError):
        CovarianceModel("m2", (1, 1, 1, 0.1), "euclidean")


def test_m1_m2_translation_invariant(rng):
    m1 = family_model("separable_exp")
    A, B = random_points(20, rng), random_points(20, rng)
    shift = np.array([3.0, -2.0, 7.0])
    np.testing.assert_allclose(m1.matrix(A, B), m1.matrix(A + shift, B + shift), rtol=1e-10)
    m2 = family_model("nonseparable_sphere")
    A, B = lonlat_points(20, rng), lonlat_points(20, rng)
    # longitude rotation and time shift preserve the lags
    shift = np.array([25.0, 0.0, 4.0])
    np.testing.assert_allclose(m2.matrix(A, B), m2.matrix(A + shift, B + shift), rtol=1e-9)


# -- radial basis processes and kernel convolution (M3) ----------------------


def test_rb_on_center():
    w = np.zeros(9)
    w[4] = 1.0
    assert RB_CENTERS[4] == 0.0
    assert rb_process(0.0, w) == pytest.approx(1.0)


def test_rb_zero_weights():
    assert np.all(rb_process(np.linspace(-90, 90, 19), np.zeros(9)) == 0)


def test_rb_all_ones():
    total = 0.0
    for k in (-110.0, -82.5, -55.0, -27.5, 0.0, 27.5, 55.0, 82.5, 110.0):
        total += math.exp(-((abs(27.5 - k) / 20.0) ** 2))
    assert rb_process(27.5, np.ones(9)) == pytest.approx(total, rel=1e-14)
    assert total == pytest.approx(1.30299, abs=1e-5)


M3_THETA = FAMILY_CASES["nonstationary_kernelconv"][0]


def test_m3_zero_lag_positive():
    p = (0.2, 0.3, 0.4)
    sd, ax, ay = (float(v) for v in m3_processes(M3_THETA, 0.3))
    expected = M3_THETA[0] * sd**2 / math.sqrt(ax * ay)
    assert cov_m3(M3_THETA, p, p) == pytest.approx(expected, rel=1e-12)
    assert expected > 0


def test_m3_cauchy_schwarz(rng):
    for _ in range(40):
        theta = np.array(M3_THETA)
        theta[4:] *= rng.uniform(0.5, 2.0, 27)
        p, q = random_points(2, rng)
        c = cov_m3(theta, p, q)
        assert c == pytest.approx(cov_m3(theta, q, p), rel=1e-14)
        assert c**2 <= cov_m3(theta, p, p) * cov_m3(theta, q, q) * (1 + 1e-12)


def test_m3_constant_processes_are_stationary(rng):
    sd, a = 1.7, 0.04
    dx, dy = rng.normal(size=(2, 50))
    c = kernel_convolution(sd, sd, a, a, a, a, dx, dy)
    expected = sd**2 / a * np.exp(-np.hypot(dx, dy) / math.sqrt(a))
    np.testing.assert_allclose(c, expected, rtol=1e-13)


def test_m3_equals_separable_on_common_latitude(rng):
    # at a common latitude all processes are equal, so M3 is a separable
    # exponential model in x with range sqrt(ax) and rescaled sill
    lat = 0.37
    n = 25
    X = np.column_stack([rng.random(n), np.full(n, lat), rng.random(n)])
    sd, ax, ay = (float(v) for v in m3_processes(M3_THETA, lat))
    sill, tnug, trange, snug = M3_THETA[:4]
    m1 = CovarianceModel("m1", (sill * sd**2 / math.sqrt(ax * ay), math.sqrt(ax), trange, snug, tnug))
    m3 = CovarianceModel("m3", M3_THETA)
    np.testing.assert_allclose(m3.matrix(X), m1.matrix(X), rtol=1e-12)


def test_m3_parameter_count_and_positivity():
    with pytest.raises(ParameterError):
        CovarianceModel("m3", M3_THETA[:30])
    bad = np.array(M3_THETA)
    bad[4:13] = -1.0
    with pytest.raises(ParameterError):
        CovarianceModel("m3", bad)


def test_theta_validation():
    with pytest.raises(ParameterError):
        CovarianceModel("metric", (0.2, 0.05, 0.05))
    with pytest.raises(ParameterError):
        CovarianceModel("metric", (0.2, -0.05, 0.05, 0.02))
    with pytest.raises(ParameterError):
        CovarianceModel("m1", (1, 1, 1, 1.2, 0.1))
    with pytest.raises(ConfigurationError):
        CovarianceModel("nope", (1,))


# -- matrices ----------------------------------------------------------------


@pytest.mark.parametrize("family", sorted(FAMILY_CASES))
def test_single_point_matrix(family, rng):
    model = family_model(family)
    X = family_points(family, 1, rng)
    K = cov_matrix(model, X, X)
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(float(model.diag(X)[0]))


@pytest.mark.parametrize("family", sorted(FAMILY_CASES))
def test_cross_matrix_transpose(family, rng):
    model = family_model(family)
    A, B = family_points(family, 13, rng), family_points(family, 9, rng)
    np.testing.assert_array_equal(cov_matrix(model, A, B), cov_matrix(model, B, A).T)


@pytest.mark.parametrize("family", sorted(FAMILY_CASES))
def test_gram_psd(family, rng):
    model = family_model(family)
    X = family_points(family, 50, rng)
    K = model.matrix(X)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K) / 50


@pytest.mark.parametrize("metric", ["great_circle", "chordal"])
def test_spherical_metrics_psd(metric, rng):
    model = CovarianceModel("metric", (1500.0, 1.0, 0.1, 300.0), metric)
    X = lonlat_points(50, rng)
    K = model.matrix(X)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K) / 50


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0.01, 2.0), st.floats(0.01, 5.0), st.floats(0.001, 1.0), st.floats(0.01, 50.0),
    st.integers(0, 2**31 - 1),
)
def test_metric_psd_property(rho, sill, nugget, aniso, seed):
    X = np.random.default_rng(seed).random((40, 3))
    K = CovarianceModel("metric", (rho, sill, nugget, aniso)).matrix(X)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K) / 40


def test_batched_matrix_matches_loop(rng):
    model = family_model("separable_exp")
    A = random_points(24, rng).reshape(4, 6, 3)
    B = random_points(20, rng).reshape(4, 5, 3)
    K = model.matrix(A, B)
    for i in range(4):
        np.testing.assert_array_equal(K[i], model.matrix(A[i], B[i]))
