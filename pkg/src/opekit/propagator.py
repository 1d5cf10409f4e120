"""Euclidean propagator of a scalar field in four dimensions and its derivatives.

The propagator is radial, Delta(x) = h(s) with s = x.x, so every partial
derivative is a finite sum  sum_j c_j x^beta_j h^(k_j)(s).  The radial
derivatives h^(k) are closed-form Bessel-K expressions (massive case) or
powers of s (massless case).
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial, pi

import numpy as np
from scipy.special import kv

FOUR_PI2 = 4.0 * pi * pi
# below this value of m|x| the massless closed form is used; the relative
# correction is O(z^2 log z)
SMALL_Z = 1e-7
# above this value K_nu(z) underflows binary64
LARGE_Z = 700.0


class SingularPointError(ValueError):
    """Raised when the propagator is requested at coincident points."""


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise ValueError(f"points must have 4 components, got shape {x.shape}")
    return x


def radial_derivative(k: int, s, m: float):
    """k-th derivative of h(s) = Delta(sqrt(s)) with respect to s."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise SingularPointError("propagator evaluated at |x| = 0")
    massless = (-1) ** k * factorial(k) / (FOUR_PI2 * s ** (k + 1))
    if m == 0:
        return massless
    z = m * np.sqrt(s)
    out = np.array(massless, dtype=float, copy=True)
    big = z >= SMALL_Z
    if np.any(big):
        zb = z[big] if z.ndim else z
        nu = k + 1
        with np.errstate(under="ignore", over="ignore"):
            val = (m * m / FOUR_PI2) * (-m * m / 2.0) ** k * kv(nu, zb) / zb ** nu
        if z.ndim:
            out[big] = val
        else:
            out = np.asarray(val)
    return out if out.ndim else float(out)


def underflowed(x, m: float) -> bool:
    """True when m|x| is beyond the range where K_nu is representable."""
    return m > 0 and float(np.linalg.norm(x)) * m > LARGE_Z


@lru_cache(maxsize=None)
def chain_terms(alpha: tuple) -> tuple:
    """Exact chain rule for d^alpha h(x.x).

    Returns a tuple of (coefficient, k, beta) with
    d^alpha h(x.x) = sum coefficient * x^beta * h^(k)(x.x).
    """
    if sum(alpha) == 0:
        return ((1, 0, (0, 0, 0, 0)),)
    mu = next(i for i, a in enumerate(alpha) if a > 0)
    lower = list(alpha)
    lower[mu] -= 1
    acc = {}
    for c, k, beta in chain_terms(tuple(lower)):
        # d_mu (x^beta h^(k)) = beta_mu x^(beta - e_mu) h^(k) + 2 x^(beta + e_mu) h^(k+1)
        if beta[mu] > 0:
            b = list(beta)
            b[mu] -= 1
            key = (k, tuple(b))
            acc[key] = acc.get(key, 0) + c * beta[mu]
        b = list(beta)
        b[mu] += 1
        key = (k + 1, tuple(b))
        acc[key] = acc.get(key, 0) + 2 * c
    return tuple((c, k, b) for (k, b), c in sorted(acc.items()) if c != 0)


def _monomials(x, betas):
    """x^beta for each beta, x of shape (..., 4)."""
    top = max((max(b) for b in betas), default=0)
    pw = [np.ones_like(x)]
    for _ in range(top):
        pw.append(pw[-1] * x)
    out = []
    for beta in betas:
        term = np.ones(x.shape[:-1])
        for mu, p in enumerate(beta):
            if p:
                term = term * pw[p][..., mu]
        out.append(term)
    return out


def propagator_derivative(alpha, x, m: float):
    """d^alpha Delta evaluated at x (shape (4,) or (n, 4))."""
    x = _as_points(x)
    alpha = tuple(int(a) for a in alpha)
    s = np.sum(x * x, axis=-1)
    if np.any(s == 0):
        raise SingularPointError("propagator evaluated at |x| = 0")
    terms = chain_terms(alpha)
    ks = sorted({k for _, k, _ in terms})
    h = {k: np.asarray(radial_derivative(k, s, m)) for k in ks}
    monos = _monomials(x, [b for _, _, b in terms])
    total = np.zeros(s.shape)
    for (c, k, _), mono in zip(terms, monos):
        total = total + c * mono * h[k]
    return total if total.ndim else float(total)


def propagator(x, m: float):
    """Delta(x): m K_1(m|x|) / (4 pi^2 |x|), or 1/(4 pi^2 x^2) when m = 0."""
    return propagator_derivative((0, 0, 0, 0), x, m)


# ---------------------------------------------------------------------------
# Taylor-mode evaluation of nested directional Taylor sums
# ---------------------------------------------------------------------------


def _poly_mul(a, b, shape):
    """Product of two truncated multivariate polynomials stored as dense arrays."""
    out = np.zeros(shape)
    for idx in zip(*np.nonzero(b)):
        sl_out = tuple(slice(i, n) for i, n in zip(idx, shape))
        sl_a = tuple(slice(0, n - i) for i, n in zip(idx, shape))
        out[sl_out] += b[idx] * a[sl_a]
    return out


def taylor_sum(y, directions, degrees, w, m: float) -> float:
    """sum_{|v_k|=d_k} prod_k x_k^v_k / v_k!  d^(v_1+...+v_r+w) Delta(y).

    Evaluated as the coefficient of prod t_k^d_k in d^w Delta(y + sum t_k x_k),
    with d^w itself produced as a Taylor coefficient in auxiliary unit
    directions.  Exact up to round-off; uses the same radial derivatives as
    propagator_derivative.
    """
    y = np.asarray(y, dtype=float)
    dirs = [np.asarray(x, dtype=float) for x in directions]
    degs = [int(d) for d in degrees]
    w = tuple(int(a) for a in w)
    wax = [mu for mu in range(4) if w[mu] > 0]
    for mu in wax:
        e = np.zeros(4)
        e[mu] = 1.0
        dirs.append(e)
        degs.append(w[mu])
    shape = tuple(d + 1 for d in degs)
    nvar = len(degs)
    s0 = float(y @ y)
    # ds = |y + sum t_k x_k|^2 - |y|^2
    ds = np.zeros(shape)
    for k in range(nvar):
        if degs[k] >= 1:
            idx = [0] * nvar
            idx[k] = 1
            ds[tuple(idx)] += 2.0 * float(y @ dirs[k])
        for l in range(k, nvar):
            idx = [0] * nvar
            idx[k] += 1
            idx[l] += 1
            if all(i <= d for i, d in zip(idx, degs)):
                ds[tuple(idx)] += (1.0 if k == l else 2.0) * float(dirs[k] @ dirs[l])
    total_degree = sum(degs)
    result = np.zeros(shape)
    power = np.zeros(shape)
    power[(0,) * nvar] = 1.0
    for j in range(total_degree + 1):
        result += radial_derivative(j, s0, m) / factorial(j) * power
        if j < total_degree:
            power = _poly_mul(power, ds, shape)
    top = result[tuple(degs)]
    wfac = 1
    for mu in wax:
        wfac *= factorial(w[mu])
    return float(top * wfac)
