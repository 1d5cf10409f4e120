from math import pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import k1

from opekit import oracles
from opekit.multiindex import multi_indices_upto
from opekit.propagator import SingularPointError, propagator, propagator_derivative, taylor_sum

points = st.tuples(*[st.floats(-3, 3)] * 4).map(np.array).filter(lambda x: np.linalg.norm(x) > 0.1)
alphas = st.tuples(*[st.integers(0, 3)] * 4)


def test_massless_unit_distance():
    # proper-time representation: int_0^inf (4 pi t)^-2 exp(-x^2 / 4t) dt
    val, _ = integrate.quad(lambda t: np.exp(-1.0 / (4 * t)) / (4 * pi * t) ** 2, 0, np.inf)
    assert propagator([1, 0, 0, 0], 0.0) == pytest.approx(val, rel=1e-10)
    assert propagator([0, 0, 1, 0], 0.0) == pytest.approx(0.0253302959, rel=1e-8)


def test_massive_closed_form_and_decay():
    x = np.array([0, 6, 8, 0.0])
    assert propagator(x, 1.0) == pytest.approx(k1(10.0) / (4 * pi ** 2 * 10.0), rel=1e-13)
    # K_1(z) ~ sqrt(pi / 2z) e^-z (1 + 3/8z)
    asym = np.sqrt(pi / 20) * np.exp(-10) * (1 + 3 / 80) / (4 * pi ** 2 * 10)
    assert propagator(x, 1.0) == pytest.approx(asym, rel=2e-3)
    for r in np.linspace(5, 50, 10):
        v = propagator([r, 0, 0, 0], 1.0) * np.exp(r) * r ** 1.5
        assert 0 < v < 1


def test_small_mass_limit():
    x = np.array([0.3, -0.2, 0.1, 0.5])
    for m in (1e-3, 1e-4, 1e-6):
        z = m * np.linalg.norm(x)
        # z K_1(z) = 1 + (z^2 / 2)(log(z / 2) + gamma - 1/2) + O(z^4 log z)
        ratio = 1 + z * z / 2 * (np.log(z / 2) + np.euler_gamma - 0.5)
        assert propagator(x, m) == pytest.approx(ratio * propagator(x, 0.0), rel=1e-11)
    assert propagator(x, 1e-6) == pytest.approx(propagator(x, 0.0), rel=1e-8)


def test_singular_point():
    with pytest.raises(SingularPointError):
        propagator([0, 0, 0, 0], 1.0)


@settings(max_examples=60, deadline=None)
@given(alphas, points, st.sampled_from([0.0, 1.0]))
def test_matches_independent_closed_form(alpha, x, m):
    a = propagator_derivative(alpha, x, m)
    b = oracles.propagator_derivative(alpha, x, m)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-14 * abs(propagator(x, m)))


@pytest.mark.parametrize("m", [0.0, 1.0])
def test_finite_differences(m):
    rng = np.random.default_rng(1)
    h = 1e-5
    for alpha in [a for a in multi_indices_upto(2) if sum(a) > 0]:
        x = rng.normal(size=4)
        mu = next(i for i, a in enumerate(alpha) if a)
        lower = list(alpha)
        lower[mu] -= 1
        e = np.zeros(4)
        e[mu] = h
        fd = (propagator_derivative(lower, x + e, m) - propagator_derivative(lower, x - e, m)) / (2 * h)
        assert propagator_derivative(alpha, x, m) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0])
def test_helmholtz_equation(m):
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.normal(size=4)
        lap = sum(propagator_derivative(tuple(2 * (i == mu) for i in range(4)), x, m) for mu in range(4))
        assert lap == pytest.approx(m * m * propagator(x, m), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(alphas, points, st.permutations(range(4)))
def test_axis_permutation_and_parity(alpha, x, perm):
    v = propagator_derivative(alpha, x, 1.0)
    pa = tuple(alpha[p] for p in perm)
    px = x[list(perm)]
    assert propagator_derivative(pa, px, 1.0) == pytest.approx(v, rel=1e-12, abs=1e-300)
    assert propagator_derivative(alpha, -x, 1.0) == pytest.approx((-1) ** sum(alpha) * v, rel=1e-12, abs=1e-300)


@given(points, st.sampled_from([0.0, 1.0]))
def test_positivity(x, m):
    assert propagator(x, m) > 0


def test_vectorised_evaluation():
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(7, 4))
    vec = propagator_derivative((1, 0, 2, 0), xs, 1.0)
    assert np.allclose(vec, [propagator_derivative((1, 0, 2, 0), x, 1.0) for x in xs], rtol=1e-14)


def test_taylor_sum_against_direct_expansion():
    from itertools import product
    from math import factorial
    rng = np.random.default_rng(4)
    y = rng.normal(size=4) * 2
    x1, x2 = rng.normal(size=4) * 0.2, rng.normal(size=4) * 0.2
    w = (0, 1, 0, 0)
    d1, d2 = 2, 1
    direct = 0.0
    for v1 in product(range(d1 + 1), repeat=4):
        if sum(v1) != d1:
            continue
        for v2 in product(range(d2 + 1), repeat=4):
            if sum(v2) != d2:
                continue
            c = np.prod([x1[i] ** v1[i] / factorial(v1[i]) * x2[i] ** v2[i] / factorial(v2[i]) for i in range(4)])
            g = tuple(a + b + e for a, b, e in zip(v1, v2, w))
            direct += c * oracles.propagator_derivative(g, y, 1.0)
    assert taylor_sum(y, [x1, x2], [d1, d2], w, 1.0) == pytest.approx(direct, rel=1e-10)
