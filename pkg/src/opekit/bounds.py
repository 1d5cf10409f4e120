"""Explicit upper bounds: the tree bound, the remainder bound, the bound on
merged pair weights and the bound on nested Taylor sums of the propagator.

Every bound is accumulated as a logarithm and exponentiated at the end;
an exponent beyond the binary64 range gives +inf, which still dominates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, factorial, lgamma, log, sqrt

import numpy as np

from .matchings import merged_entry
from .multiindex import norm
from .propagator import taylor_sum
from .trees import TreeError, WeightedTree

LOG_MAX = 709.0


def _exp(logval: float) -> float:
    if logval > LOG_MAX:
        return float("inf")
    return exp(logval)


def _log_factorial(x: float) -> float:
    """log Gamma(x + 1), so non-integer arguments are allowed."""
    return lgamma(x + 1.0)


def _theta(x) -> int:
    """Heaviside step with theta(0) = 0."""
    return 1 if x > 0 else 0


@dataclass
class BoundParams:
    eps: float
    delta: dict = field(default_factory=dict)  # internal vertex -> (0, 1)
    K: float = 1.0
    branch: list | None = None
    D: dict = field(default_factory=dict)  # internal non-root vertex -> dimension


def total_dimension(tree: WeightedTree) -> int:
    """Sum of the dimensions at the leaves and the root."""
    return sum(tree.op(v).dimension for v in tree.leaves) + tree.op(tree.root).dimension


def eps_max(tree: WeightedTree, r: int) -> float:
    return 2.0 ** -(total_dimension(tree) + 4 * r + 3)


def _vertex_dim(tree, p, v):
    if v in tree.internal_nonroot:
        return int(p.D[v])
    return tree.op(v).dimension


def log_bound_B(tree: WeightedTree, r: int, p: BoundParams, m: float) -> float:
    if m <= 0:
        raise ValueError("the tree bound needs m > 0")
    if not 0.0 < p.eps <= eps_max(tree, r):
        raise ValueError(f"eps must lie in (0, {eps_max(tree, r)}]")
    for v, d in p.delta.items():
        if not 0.0 < d < 1.0:
            raise ValueError(f"delta at vertex {v} must lie in (0, 1)")
    if p.K <= 0:
        raise ValueError("K must be positive")
    inner = tree.internal_nonroot
    missing = [u for u in inner if u not in p.D]
    if missing:
        raise TreeError(f"no dimension for internal vertices {missing}")
    branch = p.branch if p.branch is not None else (tree.default_branch() if inner else [])
    if any(tree.point(u).tolist() != tree.point(branch[0]).tolist() for u in branch):
        raise ValueError("the distinguished branch must have a constant point")
    root = tree.root
    dT = total_dimension(tree)
    # power counting
    out = tree.op(root).dimension * log(max(tree.dist(i, root) for i in tree.ch(root)))
    for i in tree.leaves:
        sib = tree.sb(i)
        out -= tree.op(i).dimension * log(min(tree.dist(i, j) for j in sib))
    for i in inner:
        out += p.D[i] * log(tree.xi(i))
    # combinatorics
    on = sum(_vertex_dim(tree, p, w) for w in branch)
    off = sum(_vertex_dim(tree, p, v) for v in tree.vertices if v not in branch)
    comb = on * np.log1p(p.eps) - off * log(p.eps) + dT * sum(log(p.D[w] + 1) for w in branch)
    out += log(p.K) + 8 ** (r + 1) * comb
    # logarithmic corrections
    for v in tree.internal:
        d = p.delta.get(v, 0.0)
        if d == 0.0:
            continue
        kids = tree.ch(v)
        excess = sum(_vertex_dim(tree, p, e) for e in kids) - _vertex_dim(tree, p, v)
        th = _theta(excess)
        far = max(max(tree.dist(i, v) for i in kids), 1.0 / m)
        near = min(tree.dist(i, j) for a, i in enumerate(kids) for j in kids[a + 1:]) if len(kids) > 1 else far
        out += d * (log(far) - th * log(m) - (1 + th) * log(near))
    return float(out)


def bound_B(tree: WeightedTree, r: int, p: BoundParams, m: float) -> float:
    """Right-hand side of the tree bound for prod_u sum_{[A_u]=D_u} P_r(T)."""
    return _exp(log_bound_B(tree, r, p, m))


# ---------------------------------------------------------------------------
# remainder bound
# ---------------------------------------------------------------------------


def xi_split(points, M: int) -> float:
    pts = np.asarray(points, dtype=float)
    xm = pts[M - 1]
    near = max(np.linalg.norm(pts[:M] - xm, axis=1))
    far = min(np.linalg.norm(pts[M:] - xm, axis=1))
    return float(near / far)


def log_bound_theorem1(N, M, dims, D, points, r, K, c, m) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) != N or len(dims) != N + 1:
        raise ValueError("need N points and N + 1 dimensions (inputs then output)")
    if not 1 <= M < N:
        raise ValueError("split index must satisfy 1 <= M < N")
    xi = xi_split(pts, M)
    if not xi < 1.0:
        raise ValueError(f"separation ratio {xi} is not below 1")
    if m <= 0:
        raise ValueError("the remainder bound needs m > 0")
    sum_a = sum(dims[:N])
    dim_b = dims[N]
    big = max(max(np.linalg.norm(pts - pts[-1], axis=1)), 1.0 / m)
    small = min(np.linalg.norm(pts[i] - pts[j]) for i in range(N) for j in range(i + 1, N))
    out = log(K) + 0.5 * (D + 1) * log(xi)
    out += c * (sum_a + dim_b) * log((D + 2) / (sqrt(xi) - xi))
    out += (dim_b + 1) * log(big) - (sum_a + 1) * log(small)
    return float(out)


def bound_theorem1(N, M, dims, D, points, r, K, c, m) -> float:
    """K xi^((D+1)/2) ((D+2)/(sqrt xi - xi))^(c (sum[A]+[B])) max(1/m,|x_i-x_N|)^([B]+1)
    / min|x_i-x_j|^(sum[A]+1)."""
    return _exp(log_bound_theorem1(N, M, dims, D, points, r, K, c, m))


def fit_constants(samples, m, safety: float = 2.0):
    """Fit (K, c) so that log|R| <= log bound on the given samples.

    samples: iterable of (dims, M, D, points, |R|) with |R| > 0.
    c is the least-squares slope of the log-residual against the
    combinatorial logarithm; K is the envelope over the samples at that c,
    times ``safety``.
    """
    rows = []
    for dims, M, D, points, val in samples:
        if val <= 0:
            continue
        N = len(points)
        base = log_bound_theorem1(N, M, dims, D, points, 0, 1.0, 0.0, m)
        xi = xi_split(points, M)
        comb = sum(dims) * log((D + 2) / (sqrt(xi) - xi))
        rows.append((log(val) - base, comb))
    if len(rows) < 2:
        raise ValueError("need at least two nonzero samples to fit")
    y = np.array([a for a, _ in rows])
    x = np.array([b for _, b in rows])
    A = np.vstack([np.ones_like(x), x]).T
    (_, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    c = max(float(c), 0.0)
    logK = float(np.max(y - c * x))
    return safety * exp(logK), c


# ---------------------------------------------------------------------------
# the d-sum inequality
# ---------------------------------------------------------------------------


def log_dsum_lhs(xi, eps, r, dT, D) -> float:
    """log of sum_{d > D} q^d (d+1)^(8^(r+1) dT) with q = xi (1+eps)^(8^(r+1))."""
    p = 8 ** (r + 1)
    lq = log(xi) + p * np.log1p(eps)
    if lq >= 0:
        return float("inf")
    # run well past the peak of the summand and its slow tail
    terms = int(max(2000, 60 * (p * dT + 1) / -lq))
    d = np.arange(D + 1, D + 1 + terms, dtype=float)
    logs = d * lq + p * dT * np.log(d + 1)
    top = logs.max()
    return float(top + log(np.exp(logs - top).sum()))


def log_dsum_rhs(xi, eps, r, dT, D) -> float:
    p = 8 ** (r + 1)
    lq = log(xi) + p * np.log1p(eps)
    if lq >= 0:
        return float("inf")
    q = exp(lq)
    return float((D + 1) * lq + (p * dT + 1) * log((D + 2) / (1 - q)) + _log_factorial(p * dT))


def dsum_lhs(xi, eps, r, dT, D) -> float:
    return _exp(log_dsum_lhs(xi, eps, r, dT, D))


def dsum_rhs(xi, eps, r, dT, D) -> float:
    return _exp(log_dsum_rhs(xi, eps, r, dT, D))


# ---------------------------------------------------------------------------
# nested Taylor sums of the propagator
# ---------------------------------------------------------------------------


def taylor_bound_rhs(degrees, w, xs, y, eps, delta, m) -> float:
    r = len(degrees)
    if r < 1:
        raise ValueError("need at least one Taylor direction")
    if not 0.0 < eps <= 1.0 / (8 * r):
        raise ValueError(f"eps must lie in (0, {1.0 / (8 * r)}]")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        raise ValueError("y must be nonzero")
    if delta > 0 and m == 0:
        return float("inf")
    nw = norm(w)
    out = _log_factorial(nw + delta)
    for k, d in enumerate(degrees):
        nx = float(np.linalg.norm(xs[k]))
        if d == 0:
            continue
        if nx == 0.0:
            return 0.0  # every monomial vanishes
        if k < r - 1:
            out += d * (log(nx) - 2 * log(eps))
        else:
            out += d * (np.log1p(eps) + log(nx))
    out -= (4 + 2 * nw + 2 * delta) * log(eps)
    out -= (2 + nw + sum(degrees) + delta) * log(ny)
    if delta > 0:
        out -= delta * log(m)
    return _exp(out)


def taylor_bound_check(r, degrees, w, xs, y, eps, delta, m):
    """(lhs, rhs) of the nested Taylor-sum bound; lhs is exact."""
    if len(degrees) != r or len(xs) != r:
        raise ValueError("need r degrees and r expansion vectors")
    rhs = taylor_bound_rhs(degrees, w, xs, y, eps, delta, m)
    lhs = abs(taylor_sum(y, xs, degrees, w, m))
    return lhs, rhs


# ---------------------------------------------------------------------------
# merged pair weights
# ---------------------------------------------------------------------------


def _chi(tree, u, eps, branch):
    return tree.xi(u) * ((1.0 + eps) if u in branch else eps ** -2)


def m_pi_bound(tree: WeightedTree, slot_a, slot_b, degrees: dict, eps: float, delta: float,
               m: float, branch=None) -> float:
    """Upper bound on the merged pair weight M_pi for slots (vertex, alpha)."""
    (v, a), (w, b) = slot_a, slot_b
    if v == tree.root:
        (v, a), (w, b) = (w, b), (v, a)
    dT = total_dimension(tree)
    if not 0.0 < eps < 2.0 ** (-dT - 3):
        raise ValueError(f"eps must lie in (0, {2.0 ** (-dT - 3)})")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    inner = tree.internal_nonroot
    branch = set(branch if branch is not None else (tree.default_branch() if inner else []))
    root = tree.root
    an_v = [u for u in tree.an(v) if u != root]
    an_w = [u for u in tree.an(w) if u != root] if w != root else []
    cv = [u for u in an_v if u not in an_w]
    cw = [u for u in an_w if u not in an_v]
    # theta factors along each chain; the first element compares with |alpha|
    for chain, alpha in ((cv, a), (cw, b)):
        prev = norm(alpha)
        for u in chain:
            d = degrees[u]
            if d - prev < 0:
                return 0.0
            prev = d
    if w == root:
        out = (norm(b) + 1) * log(max(tree.dist(u, root) for u in tree.ch(root)))
        out -= (norm(a) + 1) * log(min(tree.dist(u, v) for u in tree.sb(v)))
        for u in cv:
            out += degrees[u] * log(tree.xi(u))
        return _exp(out)
    e = cv[-1] if cv else v
    f = cw[-1] if cw else w
    out = _log_factorial(norm(a) + norm(b) + delta)
    for u in cv + cw:
        out += (degrees[u] + 1) * log(_chi(tree, u, eps, branch))
    e2 = 2 * log(eps)
    out -= (1 + norm(a)) * (e2 + log(min(tree.dist(u, v) for u in tree.sb(v))))
    out -= (1 + norm(b)) * (e2 + log(min(tree.dist(u, w) for u in tree.sb(w))))
    if delta > 0:
        if m == 0:
            return float("inf")
        out -= delta * (log(m) + e2 + log(tree.dist(e, f)))
    return _exp(out)


def m_pi_check(tree, slot_a, slot_b, degrees, eps, delta, m, branch=None):
    """(|M_pi|, bound) for one pair of slots."""
    lhs = abs(merged_entry(tree, slot_a, slot_b, degrees, m))
    return lhs, m_pi_bound(tree, slot_a, slot_b, degrees, eps, delta, m, branch)
