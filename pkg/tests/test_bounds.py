from math import isinf, log

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opekit.bounds import (BoundParams, bound_B, bound_theorem1, dsum_lhs, dsum_rhs, eps_max,
                           fit_constants, log_dsum_lhs, log_dsum_rhs, m_pi_check,
                           taylor_bound_check, taylor_bound_rhs, xi_split)
from opekit.multiindex import IDENTITY, PHI, multi_indices
from opekit.trees import TreeError, split_tree, star_tree

unit = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1)


@settings(max_examples=150, deadline=None)
@given(r=st.integers(1, 3), data=st.data(), y=unit, ys=st.floats(0.2, 3.0),
       xscale=st.floats(0.01, 2.0), epsf=st.floats(0.01, 1.0), delta=st.sampled_from([0.0, 0.5, 1.0]),
       m=st.sampled_from([0.5, 1.0, 2.0]))
def test_taylor_bound_holds(r, data, y, ys, xscale, epsf, delta, m):
    degrees = data.draw(st.lists(st.integers(0, 4), min_size=r, max_size=r))
    nw = data.draw(st.integers(0, 2))
    w = data.draw(st.sampled_from(multi_indices(nw)))
    xs = [np.asarray(data.draw(unit)) * xscale for _ in range(r)]
    lhs, rhs = taylor_bound_check(r, degrees, w, xs, np.asarray(y) * ys, epsf / (8 * r), delta, m)
    assert lhs <= rhs


def test_taylor_bound_input_checks():
    x = [np.ones(4) * 0.1]
    with pytest.raises(ValueError):
        taylor_bound_rhs([1], (0, 0, 0, 0), x, np.ones(4), 0.2, 0.0, 1.0)
    with pytest.raises(ValueError):
        taylor_bound_rhs([1], (0, 0, 0, 0), x, np.zeros(4), 0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        taylor_bound_check(2, [1], (0, 0, 0, 0), x, np.ones(4), 0.05, 0.0, 1.0)
    assert isinf(taylor_bound_rhs([1], (0, 0, 0, 0), x, np.ones(4), 0.1, 0.5, 0.0))


@pytest.mark.parametrize("r", [0, 1])
@pytest.mark.parametrize("dT", [1, 3, 6])
@pytest.mark.parametrize("xi", [0.05, 0.3, 0.6])
def test_dsum_inequality(r, dT, xi):
    eps = 2.0 ** -(dT + 4 * r + 3)
    for D in range(0, 21, 4):
        assert log_dsum_lhs(xi, eps, r, dT, D) <= log_dsum_rhs(xi, eps, r, dT, D) + 1e-12


def test_dsum_direct_sum_small_case():
    # q = 0.5 (1 + eps)^8, exponent 8: compare with a plain partial sum
    xi, eps, D = 0.5, 2.0 ** -4, 3
    q = xi * (1 + eps) ** 8
    direct = sum(q ** d * (d + 1) ** 8 for d in range(D + 1, 3000))
    assert dsum_lhs(xi, eps, 0, 1, D) == pytest.approx(direct, rel=1e-10)
    assert dsum_lhs(xi, eps, 0, 1, D) <= dsum_rhs(xi, eps, 0, 1, D)
    assert isinf(dsum_lhs(0.99, 0.1, 0, 1, 0))


def test_theorem_bound_shape():
    pts = [(0.2, 0, 0, 0), (0, 0, 0, 0), (1, 0, 0, 0)]
    assert xi_split(pts, 2) == pytest.approx(0.2)
    vals = [bound_theorem1(3, 2, [1, 1, 1, 1], D, pts, 0, 1.0, 0.5, 1.0) for D in (10, 50, 200)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-50
    with pytest.raises(ValueError):
        bound_theorem1(3, 2, [1, 1, 1, 1], 4, [(1, 0, 0, 0), (0, 0, 0, 0), (1, 0, 0, 0)], 0, 1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        bound_theorem1(3, 3, [1, 1, 1, 1], 4, pts, 0, 1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        bound_theorem1(3, 2, [1, 1, 1], 4, pts, 0, 1.0, 0.5, 1.0)


def test_fit_constants_dominates_training_samples():
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(10):
        xi = rng.uniform(0.1, 0.6)
        pts = [(xi, 0, 0, 0), (0, 0, 0, 0), (1, 0, 0, 0)]
        for D in range(8):
            samples.append(([1, 1, 1, 1], 2, D, pts, 0.3 * xi ** ((D + 1) / 2) * rng.uniform(0.1, 1)))
    K, c = fit_constants(samples, 1.0)
    assert c >= 0
    for dims, M, D, pts, v in samples:
        assert v <= bound_theorem1(3, M, dims, D, pts, 0, K, c, 1.0)
    with pytest.raises(ValueError):
        fit_constants(samples[:1], 1.0)


def test_bound_B_validation_and_monotonicity():
    pts = [(0.1, 0, 0, 0), (0, 0, 0, 0), (2, 0, 0, 0)]
    t = split_tree([PHI] * 3, pts, IDENTITY, 2, PHI)
    inner = t.internal_nonroot[0]
    eps = eps_max(t, 0)
    with pytest.raises(TreeError):
        bound_B(t, 0, BoundParams(eps=eps), 1.0)
    with pytest.raises(ValueError):
        bound_B(t, 0, BoundParams(eps=2 * eps, D={inner: 1}), 1.0)
    with pytest.raises(ValueError):
        bound_B(t, 0, BoundParams(eps=eps, D={inner: 1}), 0.0)
    with pytest.raises(ValueError):
        bound_B(t, 0, BoundParams(eps=eps, D={inner: 1}, delta={inner: 1.5}), 1.0)
    # on the distinguished branch each extra unit of dimension costs xi (1 + eps)^8,
    # and the combinatorial factor (D + 1)^(8 dT) grows with it
    from opekit.bounds import log_bound_B, total_dimension
    lb = [log_bound_B(t, 0, BoundParams(eps=eps, D={inner: d}), 1.0) for d in (1, 3)]
    dT = total_dimension(t)
    expect = 2 * log(t.xi(inner)) + 8 * 2 * np.log1p(eps) + 8 * dT * (log(4) - log(2))
    assert lb[1] - lb[0] == pytest.approx(expect, rel=1e-12)
    K1 = bound_B(t, 0, BoundParams(eps=eps, D={inner: 1}, K=1.0), 1.0)
    K3 = bound_B(t, 0, BoundParams(eps=eps, D={inner: 1}, K=3.0), 1.0)
    assert K3 == pytest.approx(3 * K1)


def test_bound_B_star_tree_power_counting():
    # a star tree with no internal vertices has pure power counting times combinatorics
    t = star_tree([PHI, PHI], [(1, 0, 0, 0), (0, 0, 0, 0)], IDENTITY)
    eps = eps_max(t, 0)
    v = bound_B(t, 0, BoundParams(eps=eps), 1.0)
    # leaves at distance 1: the power-counting part is 1, leaving eps^-(8 * 2)
    assert log(v) == pytest.approx(-8 * 2 * log(eps), rel=1e-12)


def test_m_pi_bound_dominates_merged_weights():
    pts = [(0.1, 0, 0, 0), (0, 0, 0, 0), (0, 2, 0, 0), (0, 2.2, 0, 0), (3, 0, 0, 0)]
    from opekit.trees import build_tree
    # leaves 0,1 under vertex 5 at x1; leaves 2,3 under vertex 6 at x3; root 7 at x4
    t = build_tree([
        {"id": 0, "parent": 5, "op": "d[1,0,0,0]phi", "point": pts[0]},
        {"id": 1, "parent": 5, "op": "phi", "point": pts[1]},
        {"id": 2, "parent": 6, "op": "phi", "point": pts[2]},
        {"id": 3, "parent": 6, "op": "phi", "point": pts[3]},
        {"id": 4, "parent": 7, "op": "phi", "point": pts[4]},
        {"id": 5, "parent": 7, "op": "phi", "point": pts[1]},
        {"id": 6, "parent": 7, "op": "phi", "point": pts[3]},
        {"id": 7, "parent": None, "op": "1", "point": pts[4]},
    ])
    eps = 2.0 ** (-total_dim(t) - 4)
    checked = 0
    for d5 in range(5):
        for d6 in range(5):
            for sa, sb in [((0, (1, 0, 0, 0)), (2, (0, 0, 0, 0))), ((1, (0, 0, 0, 0)), (3, (0, 0, 0, 0))),
                           ((0, (1, 0, 0, 0)), (4, (0, 0, 0, 0)))]:
                for delta in (0.0, 0.5):
                    lhs, rhs = m_pi_check(t, sa, sb, {5: d5, 6: d6}, eps, delta, 1.0)
                    assert lhs <= rhs
                    checked += lhs > 0
    assert checked > 0


def total_dim(t):
    from opekit.bounds import total_dimension
    return total_dimension(t)


@settings(max_examples=100, deadline=None)
@given(r=st.integers(1, 3), data=st.data(), y=unit, ys=st.floats(0.2, 3.0),
       xscale=st.floats(0.01, 2.0), epsf=st.floats(0.01, 1.0))
def test_taylor_bound_holds_massless(r, data, y, ys, xscale, epsf):
    degrees = data.draw(st.lists(st.integers(0, 4), min_size=r, max_size=r))
    w = data.draw(st.sampled_from(multi_indices(data.draw(st.integers(0, 2)))))
    xs = [np.asarray(data.draw(unit)) * xscale for _ in range(r)]
    lhs, rhs = taylor_bound_check(r, degrees, w, xs, np.asarray(y) * ys, epsf / (8 * r), 0.0, 0.0)
    assert lhs <= rhs


def test_bound_B_nondecreasing_on_branch():
    pts = [(0.3, 0, 0, 0), (0, 0, 0, 0), (2, 0, 0, 0)]
    t = split_tree([PHI] * 3, pts, IDENTITY, 2, PHI)
    inner = t.internal_nonroot[0]
    eps = eps_max(t, 0)
    # remove the power-counting factor xi^D to isolate the combinatorial growth
    from opekit.bounds import log_bound_B
    vals = [log_bound_B(t, 0, BoundParams(eps=eps, D={inner: d}), 1.0) - d * log(t.xi(inner))
            for d in range(8)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_theorem_bound_strictly_decreasing_past_threshold():
    pts = [(0.5, 0, 0, 0), (0, 0, 0, 0), (1, 0, 0, 0)]
    xi, c, dims = 0.5, 0.5, [1, 1, 1, 1]
    big_d = sum(dims)
    vals = [bound_theorem1(3, 2, dims, D, pts, 0, 1.0, c, 1.0) for D in range(60)]
    for D in range(59):
        if xi ** 0.5 * ((D + 3) / (D + 2)) ** (c * big_d) < 1:
            assert vals[D + 1] < vals[D]
