from math import log, pi

import numpy as np
import pytest

from opekit import oracles
from opekit.coefficients import CoeffRequest, ope_coefficient, transform_request
from opekit.multiindex import IDENTITY, PHI, PHI2, PHI4, CompositeOp
from opekit.recursion import (NumericDiagnostic, QuadratureConfig, eps_limit, first_order_coeff,
                              first_order_integrand, gamma_log_slope, gamma_mixing, integrate,
                              massless_first_order, massless_scale_shift, region_classify)
from opekit.trees import TreeError, split_tree

GEOMETRY = [(0, 0, 0, 0), (1, 0, 0, 0), (0, 1.2, 0, 0), (0.3, 0.4, 0.9, 0)]


def quad(n=200_000, seed=0, **kw):
    return QuadratureConfig(n_samples=n, seed=seed, workers=1, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(n_samples=10)
    with pytest.raises(ValueError):
        QuadratureConfig(near_fraction=1.5)
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1)
    with pytest.raises(ValueError):
        first_order_coeff(req, QuadratureConfig(r_cut=2.0))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_integrator_unbiased_on_gaussian(seed):
    c = np.array([0.5, 0.0, 0.0, 0.0])
    centres = [np.zeros(4), c]

    def f(y):
        return np.exp(-np.sum((y - c) ** 2, axis=1)) + 1.0 / (1.0 + np.sum(y ** 2, axis=1)) ** 3

    # int e^{-|y|^2} = pi^2; int (1 + r^2)^-3 d^4y = 2 pi^2 * 1/4 over all space, truncated at R
    R = 30.0
    exact = pi ** 2 + 2 * pi ** 2 * (0.25 - (1 + 2 * R * R) / (4 * (1 + R * R) ** 2))
    res = integrate(f, centres, np.zeros(4), R, 1.0, quad(100_000, seed))
    assert abs(res.value - exact) <= 3 * res.error


def test_seeded_reproducibility_and_worker_independence():
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1)
    a = first_order_coeff(req, quad(40_000, 7))
    b = first_order_coeff(req, quad(40_000, 7))
    c = first_order_coeff(req, QuadratureConfig(n_samples=40_000, seed=7, workers=3))
    assert a == b
    assert c.value == pytest.approx(a.value, rel=1e-12)


def test_strict_mode_flags_infinite_variance():
    # |y|^-3.9 near the origin has infinite variance under the near-point sampler
    def f(y):
        return np.sum(y ** 2, axis=1) ** -1.95

    with pytest.raises(NumericDiagnostic):
        for seed in range(20):
            integrate(f, [np.zeros(4)], np.zeros(4), 1.0, 1.0, quad(8_000, seed, batch_size=500, strict=True))


def test_vacuum_matches_plain_monte_carlo():
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1)
    v = first_order_coeff(req, quad(300_000, 3))
    o, oe = oracles.vacuum_first_order_mc(GEOMETRY, 1.0, 300_000, 99)
    assert abs(v.value - o) <= 3 * np.hypot(v.error, oe)


def test_translation_invariance():
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1)
    moved, sign = transform_request(req, shift=(1.0, -2.0, 0.5, 3.0))
    a = first_order_coeff(req, quad(200_000, 4))
    b = first_order_coeff(moved, quad(200_000, 4))
    assert abs(a.value - sign * b.value) <= 3 * np.hypot(a.error, b.error)


def test_two_point_vacuum_vanishes():
    req = CoeffRequest((PHI, PHI), IDENTITY, [(0, 0, 0, 0), (1, 0, 0, 0)], order=1)
    v = ope_coefficient(req, quad(10_000))
    assert abs(v.value) <= v.error or v.value == 0.0
    with pytest.raises(ValueError):
        ope_coefficient(CoeffRequest((PHI, PHI), IDENTITY, [(0, 0, 0, 0), (1, 0, 0, 0)], order=1, mass=0.0))


@pytest.mark.parametrize("ops, target", [((PHI,) * 4, IDENTITY), ((PHI, PHI), PHI2), ((PHI2, PHI), PHI)])
def test_integrand_cancellation_near_points(ops, target):
    pts = [np.array(p, dtype=float) for p in GEOMETRY[:len(ops)]]
    f, _ = first_order_integrand(ops, pts, target, 1.0)
    rng = np.random.default_rng(0)
    u = rng.normal(size=4)
    u /= np.linalg.norm(u)
    for x in pts:
        vals = [abs(float(f((x + r * u)[None, :])[0])) for r in (1e-2, 1e-3, 1e-4)]
        for a, b in zip(vals, vals[1:]):
            assert b <= a * 10 ** 3.5 + 1e-300


def test_integrand_infrared_decay():
    pts = [np.array(p, dtype=float) for p in GEOMETRY]
    f, _ = first_order_integrand((PHI,) * 4, pts, IDENTITY, 1.0)
    u = np.array([0.5, 0.5, 0.5, 0.5])
    vals = [abs(float(f((pts[-1] + r * u)[None, :])[0])) for r in (6.0, 10.0, 14.0)]
    assert vals[1] < np.exp(-8) * vals[0] and vals[2] < np.exp(-8) * vals[1]


def test_region_classifier():
    pts = [(0.01, 0, 0, 0), (0, 0, 0, 0), (3, 0, 0, 0)]
    t = split_tree([PHI] * 3, pts, IDENTITY, 2, PHI)
    eps = eps_limit(t, 0)
    # vertex 3 joins leaves 0 and 1; vertex 4 is the root joining 2 and 3
    assert region_classify((0.01, 0, 0, 0), 3, t, eps, 0) == "UV(0)"
    assert region_classify((0.01 + 1e-40, 0, 0, 0), 3, t, eps, 0) == "UV(0)"
    assert region_classify((1e40, 0, 0, 0), 3, t, eps, 0) == "IR"
    assert region_classify((0, 0.02, 0, 0), 3, t, eps, 0) == "IM"
    assert region_classify((3, 0, 0, 0), 4, t, eps, 0) == "UV(2)"
    assert region_classify((1e7, 0, 0, 0), 4, t, eps, 0) == "IM"
    with pytest.raises(ValueError):
        region_classify((1, 1, 1, 1), 3, t, 2 * eps, 0)
    with pytest.raises(TreeError):
        region_classify((1, 1, 1, 1), 0, t, eps, 0)
    rng = np.random.default_rng(1)
    allowed = {"UV(0)", "UV(1)", "UV(2)", "UV(3)", "IR", "IM"}
    for y in rng.normal(size=(2000, 4)) * rng.uniform(1e-3, 1e3, size=(2000, 1)):
        assert region_classify(y, 3, t, eps, 0) in allowed
        assert region_classify(y, 4, t, eps, 0) in allowed


def test_gamma_mixing_definitions():
    assert gamma_mixing(PHI2, PHI4, 1.0, 0.1) == 0.0
    with pytest.raises(ValueError):
        gamma_mixing(PHI4, PHI4, 1.0, 0.0)


def test_gamma_log_slope_matches_leading_log():
    # (phi^4)(phi^4/4!) -> phi^4 has coefficient 3 Delta(y)^2 at leading order, and
    # int_{|y|>L} Delta^2 = -(1/16 pi^2) log(L^2 m^2) + O(1) for massless Delta
    slope = gamma_log_slope(PHI4, PHI4, 1.0, [1e-2, 1e-3, 1e-4])
    assert slope == pytest.approx(-3 / (16 * pi ** 2), rel=1e-2)
    m = 1e-4
    shift = gamma_mixing(PHI4, PHI4, 2.0, m) - gamma_mixing(PHI4, PHI4, 1.0, m)
    assert shift == pytest.approx(slope * log(4.0), rel=1e-2)


def test_massless_preconditions_and_zero():
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1, mass=0.0)
    with pytest.raises(ValueError):
        massless_first_order(req, 0.5, quad(10_000))
    two = CoeffRequest((PHI, PHI), IDENTITY, [(0, 0, 0, 0), (1, 0, 0, 0)], order=1, mass=0.0)
    assert massless_first_order(two, 2.0, quad(10_000)).value == 0.0


def test_massless_ball_matches_plain_monte_carlo():
    L = 2.5
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1, mass=0.0)
    v = massless_first_order(req, L, quad(300_000, 5))
    # uniform sampling of the ball around x_N
    rng = np.random.default_rng(6)
    n = 400_000
    P = np.array(GEOMETRY, dtype=float)
    u = rng.normal(size=(n, 4))
    u /= np.linalg.norm(u, axis=1)[:, None]
    y = P[-1] + L * rng.random(n)[:, None] ** 0.25 * u
    vol = pi ** 2 / 2 * L ** 4
    g = -vol * np.prod([1 / (4 * pi ** 2 * np.sum((y - p) ** 2, axis=1)) for p in P], axis=0)
    # the product integrand has infinite variance; the oracle is loose but unbiased
    assert abs(v.value - g.mean()) <= 3 * np.hypot(v.error, g.std() / np.sqrt(n)) + 0.02 * abs(v.value)


def test_massless_scale_dependence_is_the_shell_integral():
    req = CoeffRequest((PHI,) * 4, IDENTITY, GEOMETRY, order=1, mass=0.0)
    span = max(np.linalg.norm(np.subtract(p, GEOMETRY[-1])) for p in GEOMETRY)
    L1, L2 = 1.5 * span, 3.0 * span
    q = quad(1_000_000, 2)
    a, b = massless_first_order(req, L1, q), massless_first_order(req, L2, q)
    predicted = massless_scale_shift(req, L1, L2)
    sigma = np.hypot(a.error, b.error)
    assert abs((b.value - a.value) - predicted) <= 3 * sigma
    # the shift is resolved: the ball radius genuinely changes the result
    assert abs(predicted) > 5 * sigma
