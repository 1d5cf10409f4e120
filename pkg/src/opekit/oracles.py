"""Independent reference implementations used to cross-check the main code.

Nothing here shares a code path with the production routines beyond the
operator basis itself:

* propagator derivatives come from a per-axis closed form of d^n h(x^2)
  with Bessel functions built by upward recurrence from K_0 and K_1;
* Wick sums enumerate every pairing explicitly instead of using a
  memoised hafnian;
* nested products are summed term by term over the operator basis;
* the first-order vacuum coefficient is a plain importance-sampled
  Monte Carlo integral with its own sampler.
"""

from __future__ import annotations

from collections import Counter
from math import comb, factorial, pi

import numpy as np
from scipy.special import k0, k1

from .multiindex import enumerate_ops

FOUR_PI2 = 4.0 * pi * pi


# ---------------------------------------------------------------------------
# propagator
# ---------------------------------------------------------------------------


def _bessel_k(nmax: int, z: float) -> list:
    out = [k0(z), k1(z)]
    for n in range(1, nmax):
        out.append(out[n - 1] + 2.0 * n / z * out[n])
    return out


def radial_derivatives(kmax: int, s: float, m: float) -> list:
    """[h(s), h'(s), ..., h^(kmax)(s)] for h(x.x) = Delta(x)."""
    if m == 0:
        return [(-1) ** k * factorial(k) / (FOUR_PI2 * s ** (k + 1)) for k in range(kmax + 1)]
    z = m * np.sqrt(s)
    K = _bessel_k(kmax + 2, z)
    return [(m * m / FOUR_PI2) * (-m * m / 2.0) ** k * K[k + 1] / z ** (k + 1)
            for k in range(kmax + 1)]


def propagator_derivative(alpha, x, m: float) -> float:
    """d^alpha Delta(x) from d^n/dt^n g(t^2) = sum_j n!/(j!(n-2j)!) (2t)^(n-2j) g^(n-j)."""
    x = np.asarray(x, dtype=float)
    s = float(x @ x)
    h = radial_derivatives(sum(alpha), s, m)
    # expand the product over axes: each axis contributes (coefficient, order drop j)
    terms = {0: 1.0}
    for mu, n in enumerate(alpha):
        new = {}
        for j in range(n // 2 + 1):
            c = factorial(n) / (factorial(j) * factorial(n - 2 * j)) * (2.0 * x[mu]) ** (n - 2 * j)
            for k, v in terms.items():
                new[k + n - j] = new.get(k + n - j, 0.0) + v * c
        terms = new
    return sum(v * h[k] for k, v in terms.items())


# ---------------------------------------------------------------------------
# Wick pairings
# ---------------------------------------------------------------------------


def all_pairings(items: list):
    """Every perfect pairing of a list, by recursion on the last element."""
    if not items:
        yield ()
        return
    last = items[-1]
    for i in range(len(items) - 1):
        rest = items[:i] + items[i + 1:-1]
        for sub in all_pairings(rest):
            yield sub + ((items[i], last),)


def _monomial_derivative(alpha, beta, dx) -> float:
    """d^alpha (x - x_R)^beta / beta! at dx."""
    out = 1.0
    for a, b, d in zip(alpha, beta, dx):
        if a > b:
            return 0.0
        out *= comb(b, a) * factorial(a) * d ** (b - a) / factorial(b)
    return out


def wick_coefficient(ops, points, target, m: float, root_point=None) -> float:
    """Free coefficient by explicit enumeration of all pairings of field slots."""
    root_point = points[-1] if root_point is None else root_point
    slots = [(v, a) for v, op in enumerate(ops) for a in op.factors]
    slots += [(None, b) for b in target.factors]
    if len(slots) % 2:
        return 0.0
    pts = [np.asarray(p, dtype=float) for p in points]
    xr = np.asarray(root_point, dtype=float)
    total = 0.0
    for pairing in all_pairings(list(range(len(slots)))):
        w = 1.0
        for i, j in pairing:
            (vi, ai), (vj, aj) = slots[i], slots[j]
            if vi == vj:
                w = 0.0
            elif vi is None:
                w *= _monomial_derivative(aj, ai, pts[vj] - xr)
            elif vj is None:
                w *= _monomial_derivative(ai, aj, pts[vi] - xr)
            else:
                g = tuple(a + b for a, b in zip(ai, aj))
                w *= (-1) ** sum(aj) * propagator_derivative(g, pts[vi] - pts[vj], m)
            if w == 0.0:
                break
        total += w
    # equal factors of the target are indistinguishable
    mult = 1
    for k in Counter(target.factors).values():
        mult *= factorial(k)
    return total / mult


# ---------------------------------------------------------------------------
# nested products
# ---------------------------------------------------------------------------


def product_sum_T1(ops, points, target, split: int, d: int, m: float) -> float:
    """sum_{[C]=d} C0_{A_1..A_M}^C(x_1..x_M) C0_{C A_M+1..A_N}^B(x_M, x_M+1..x_N)."""
    inner_pts = points[:split]
    outer_pts = [points[split - 1]] + list(points[split:])
    total = 0.0
    for C in enumerate_ops(d):
        a = wick_coefficient(ops[:split], inner_pts, C, m)
        if a:
            total += a * wick_coefficient([C] + list(ops[split:]), outer_pts, target, m)
    return total


def product_sum_T2(ops, points, target, d1: int, d2: int, m: float) -> float:
    """Five leaves: (A1 A2 -> C1 at x2), (A4 A5 -> C2 at x5), (C1 A3 C2 -> B at x5)."""
    x1, x2, x3, x4, x5 = points
    total = 0.0
    for C1 in enumerate_ops(d1):
        a = wick_coefficient(ops[0:2], [x1, x2], C1, m)
        if not a:
            continue
        for C2 in enumerate_ops(d2):
            b = wick_coefficient(ops[3:5], [x4, x5], C2, m)
            if b:
                total += a * b * wick_coefficient([C1, ops[2], C2], [x2, x3, x5], target, m)
    return total


# ---------------------------------------------------------------------------
# first-order vacuum coefficient by plain Monte Carlo
# ---------------------------------------------------------------------------


def vacuum_first_order_mc(points, m: float, n: int, seed: int):
    """(C_1)_{phi...phi}^1 = -int d^4y prod_i Delta(y - x_i), massive case.

    Sampling: equal mixture over the points of isotropic offsets with
    Gamma(2, 1/m) radii.  Returns (value, standard error).
    """
    rng = np.random.default_rng(seed)
    P = np.asarray(points, dtype=float)
    k = len(P)

    def delta(r):
        return m * k1(m * r) / (FOUR_PI2 * r)

    def radial_pdf(r):
        # Gamma(2, 1/m) radius spread over the 3-sphere of area 2 pi^2 r^3
        return m * m * r * np.exp(-m * r) / (2 * pi * pi * r ** 3)

    vals = []
    per = n // k
    for c in P:
        r = rng.gamma(2.0, 1.0 / m, per)
        u = rng.normal(size=(per, 4))
        u /= np.linalg.norm(u, axis=1)[:, None]
        y = c + r[:, None] * u
        dist = np.linalg.norm(y[:, None, :] - P[None, :, :], axis=2)
        q = radial_pdf(dist).mean(axis=1)
        vals.append(-np.prod(delta(dist), axis=1) / q)
    g = np.concatenate(vals)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(len(g)))
