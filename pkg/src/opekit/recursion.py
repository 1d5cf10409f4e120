"""First-order interacting coefficients from the recursion integral.

The integrand is the free coefficient with one extra interaction leaf at y,
minus the subtractions that remove its short-distance singularities at every
external point and its large-distance growth.  The integral over y is
estimated by stratified multiple-importance Monte Carlo: one radial stratum
around every external point with density ~ |y - x_i|^-3, plus a heavy-tailed
bulk stratum around the reference point.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from math import log, pi, sqrt

import numpy as np
from scipy import integrate as sp_integrate

from .matchings import free_coefficient
from .multiindex import CompositeOp, PHI4, enumerate_ops
from .trees import LAGRANGIAN_SCALE, TreeError, WeightedTree

SPHERE_AREA = 2.0 * pi * pi  # area of the unit 3-sphere


class NumericDiagnostic(RuntimeError):
    """The quadrature produced a non-finite or non-converging estimate."""


@dataclass(frozen=True)
class QuadratureConfig:
    n_samples: int = 200_000
    seed: int = 0
    batch_size: int = 20_000
    near_fraction: float = 0.5
    r_cut: float | None = None  # massive truncation radius around the reference point
    workers: int | None = None
    strict: bool = False

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("sample budget must be at least 1000")
        if self.batch_size < 100:
            raise ValueError("batch size must be at least 100")
        if not 0.0 < self.near_fraction < 1.0:
            raise ValueError("near_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def worker_count(requested=None) -> int:
    if requested:
        return int(requested)
    env = os.environ.get("OPE_KIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class MCResult:
    value: float
    error: float
    tail: float = 0.0
    n_samples: int = 0


# ---------------------------------------------------------------------------
# stratified mixture sampler
# ---------------------------------------------------------------------------


def _directions(rng, n):
    g = rng.normal(size=(n, 4))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class _Strata:
    """Near-point balls plus a truncated Lomax bulk around ``centre``."""

    def __init__(self, centres, centre, outer, scale, near_fraction, n_total):
        self.centres = [np.asarray(c, dtype=float) for c in centres]
        self.centre = np.asarray(centre, dtype=float)
        self.outer = float(outer)
        self.scale = float(scale)
        self.shape = 2.0
        self.radii = []
        for i, c in enumerate(self.centres):
            others = [np.linalg.norm(c - d) for j, d in enumerate(self.centres) if j != i]
            self.radii.append(0.5 * min(others) if others else 0.5 * self.scale)
        k = len(self.centres)
        n_near = int(round(near_fraction * n_total / k)) if k else 0
        self.counts = [n_near] * k + [n_total - n_near * k]
        self.norm_bulk = 1.0 - (self.scale / (self.scale + self.outer)) ** self.shape

    def sample(self, rng):
        out = []
        for c, rho, n in zip(self.centres, self.radii, self.counts):
            r = rho * rng.random(n)
            out.append(c + r[:, None] * _directions(rng, n))
        n = self.counts[-1]
        u = rng.random(n) * self.norm_bulk
        r = self.scale * ((1.0 - u) ** (-1.0 / self.shape) - 1.0)
        out.append(self.centre + r[:, None] * _directions(rng, n))
        return out

    def mixture_density(self, y):
        """sum_l n_l q_l(y)."""
        total = np.zeros(len(y))
        for c, rho, n in zip(self.centres, self.radii, self.counts):
            r = np.linalg.norm(y - c, axis=1)
            inside = r < rho
            q = np.zeros(len(y))
            q[inside] = 1.0 / (SPHERE_AREA * rho * r[inside] ** 3)
            total += n * q
        r = np.linalg.norm(y - self.centre, axis=1)
        a, k = self.scale, self.shape
        p = k * a ** k / (a + r) ** (k + 1) / self.norm_bulk
        q = np.where(r <= self.outer, p / (SPHERE_AREA * np.maximum(r, 1e-300) ** 3), 0.0)
        total += self.counts[-1] * q
        return total


def integrate(f, centres, centre, outer, scale, quad: QuadratureConfig, tail=0.0) -> MCResult:
    """Monte Carlo estimate of the integral of f over the ball |y - centre| <= outer.

    f maps an (n, 4) array to n values.  Per-batch random streams are spawned
    from the seed, so the result does not depend on the worker count.
    """
    n_batches = max(1, -(-quad.n_samples // quad.batch_size))
    strata = _Strata(centres, centre, outer, scale, quad.near_fraction, quad.batch_size)
    seeds = np.random.SeedSequence(quad.seed).spawn(n_batches)

    def batch(seed):
        rng = np.random.default_rng(seed)
        parts = strata.sample(rng)
        sums = []
        for y in parts:
            if len(y) == 0:
                sums.append((0.0, 0.0, 0))
                continue
            inside = np.linalg.norm(y - strata.centre, axis=1) <= outer
            g = np.zeros(len(y))
            if np.any(inside):
                yi = y[inside]
                with np.errstate(all="ignore"):
                    g[inside] = np.asarray(f(yi), dtype=float) / strata.mixture_density(yi)
            sums.append((float(g.sum()), float((g * g).sum()), len(g)))
        return sums

    workers = worker_count(quad.workers)
    if workers > 1 and n_batches > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(batch, seeds))
    else:
        results = [batch(s) for s in seeds]

    def combine(rows):
        nb = len(rows)
        value = 0.0
        var = 0.0
        for k in range(len(strata.counts)):
            s = sum(r[k][0] for r in rows)
            s2 = sum(r[k][1] for r in rows)
            n = sum(r[k][2] for r in rows)
            if n == 0:
                continue
            mean = s / n
            v = max(s2 / n - mean * mean, 0.0)
            # nb copies of the stratum allocation; the estimator sums g
            value += s / nb
            var += n * v / nb ** 2
        return value, sqrt(var)

    value, err = combine(results)
    if not (np.isfinite(value) and np.isfinite(err)):
        raise NumericDiagnostic("quadrature produced a non-finite estimate")
    if n_batches >= 4:
        _, err_half = combine(results[: n_batches // 2])
        # with finite variance the error shrinks like 1/sqrt(batches)
        if err > 1.5 * err_half and err > 0:
            msg = f"quadrature error is not shrinking ({err_half:.3g} -> {err:.3g})"
            if quad.strict:
                raise NumericDiagnostic(msg)
            warnings.warn(msg)
    total_err = sqrt(err * err + tail * tail)
    return MCResult(value, total_err, tail, n_batches * quad.batch_size)


def exponential_tail_bound(f, centre, radius, m, rng, n_dirs=256) -> float:
    """Bound on the integral of |f| outside the sphere, assuming e^{-m r} decay.

    sup|f| on the sphere times 2 pi^2 int_R^inf r^3 e^{-m (r - R)} dr.
    """
    y = np.asarray(centre) + radius * _directions(rng, n_dirs)
    fmax = float(np.max(np.abs(f(y))))
    R = radius
    moment = R ** 3 / m + 3 * R ** 2 / m ** 2 + 6 * R / m ** 3 + 6 / m ** 4
    return fmax * SPHERE_AREA * moment


# ---------------------------------------------------------------------------
# the recursion integrand
# ---------------------------------------------------------------------------


def _probe(points):
    """A point well away from all given points, for structural-zero checks."""
    pts = np.asarray(points, dtype=float)
    return pts.mean(axis=0) + np.array([0.3711, -0.5923, 0.2281, 0.4417]) * (1.0 + np.ptp(pts))


def _lagrangian_term(lead_ops, lead_pts, target, m, root_point):
    """y -> (C_0)_{L, lead_ops}^{target}(y, lead_pts), or None if identically 0."""
    scales = [LAGRANGIAN_SCALE] + [1.0] * len(lead_ops)
    ops = [PHI4] + list(lead_ops)

    def f(y):
        return free_coefficient(ops, [y] + list(lead_pts), target, m,
                                root_point=root_point, scales=scales)

    probe = _probe(list(lead_pts) + [root_point])
    if np.all(np.asarray(f(probe[None, :])) == 0.0):
        return None
    return f


def first_order_integrand(ops, points, target, m):
    """The recursion integrand y -> -[ ... ] for (C_1)_{ops}^{target}(points).

    Returns (callable, centres).  The reference point is the last point.
    """
    ops = list(ops)
    pts = [np.asarray(p, dtype=float) for p in points]
    xN = pts[-1]
    pieces = []  # (weight, callable)
    main = _lagrangian_term(ops, pts, target, m, xN)
    if main is not None:
        pieces.append((1.0, main))
    for i, (A, xi) in enumerate(zip(ops, pts)):
        for d in range(A.dimension + 1):
            for C in enumerate_ops(d):
                swapped = ops[:i] + [C] + ops[i + 1:]
                k = free_coefficient(swapped, pts, target, m)
                if k == 0.0:
                    continue
                g = _lagrangian_term([A], [xi], C, m, xi)
                if g is not None:
                    pieces.append((-k, g))
    for d in range(target.dimension):
        for C in enumerate_ops(d):
            k = free_coefficient(ops, pts, C, m)
            if k == 0.0:
                continue
            h = _lagrangian_term([C], [xN], target, m, xN)
            if h is not None:
                pieces.append((-k, h))

    def f(y):
        total = np.zeros(len(y))
        for w, g in pieces:
            total = total + w * np.asarray(g(y))
        return -total

    f.n_pieces = len(pieces)
    return f, pts


def _combine_integrands(terms, m):
    """sum_k const_k * integrand_k, sharing sample points."""
    parts = []
    centres = []
    for const, ops, pts, target in terms:
        f, c = first_order_integrand(ops, pts, target, m)
        if f.n_pieces:
            parts.append((const, f))
        for p in c:
            if not any(np.array_equal(p, q) for q in centres):
                centres.append(p)

    def f(y):
        total = np.zeros(len(y))
        for const, g in parts:
            total = total + const * g(y)
        return total

    f.n_pieces = len(parts)
    return f, centres


def _outer_radius(pts, centre, m, quad):
    span = max(float(np.linalg.norm(p - centre)) for p in pts)
    if quad.r_cut is not None:
        if m > 0 and quad.r_cut < 10.0 / m:
            raise ValueError("r_cut must be at least 10/m")
        return quad.r_cut, span
    return span + 20.0 / m, span


def first_order_combination(terms, m, quad=None, L=None):
    """sum_k const_k (C_1)_{ops_k}^{target_k}(points_k) on shared samples.

    terms: list of (const, ops, points, target); all reference points must
    agree when L is given (massless ball).
    """
    from .coefficients import CoeffValue
    quad = quad or QuadratureConfig()
    f, centres = _combine_integrands(terms, m)
    if f.n_pieces == 0:
        return CoeffValue(0.0, 0.0)
    centre = np.asarray(terms[0][2][-1], dtype=float)
    if L is None:
        if m <= 0:
            raise ValueError("massive quadrature needs m > 0")
        outer, span = _outer_radius(centres, centre, m, quad)
        rng = np.random.default_rng(np.random.SeedSequence(quad.seed).spawn(1)[0])
        tail = exponential_tail_bound(f, centre, outer, m, rng)
    else:
        outer = float(L)
        span = max(float(np.linalg.norm(p - centre)) for p in centres)
        tail = 0.0
    scale = max(span, 1e-3)
    res = integrate(f, centres, centre, outer, scale, quad, tail=tail)
    return CoeffValue(res.value, res.error)


def first_order_coeff(req, quad=None):
    """(C_1)_{A_1..A_N}^B(x_1..x_N) in the massive theory."""
    req = req.canonical()
    if req.mass <= 0:
        raise ValueError("first_order_coeff needs m > 0; use massless_first_order")
    return first_order_combination([(1.0, list(req.ops), [np.array(p) for p in req.points], req.target)],
                                   req.mass, quad)


def massless_first_order(req, L: float, quad=None):
    """Ball-truncated first-order coefficient with massless propagators."""
    req = req.canonical()
    pts = [np.array(p) for p in req.points]
    span = max(float(np.linalg.norm(p - pts[-1])) for p in pts)
    if not L > span:
        raise ValueError(f"L must exceed max |x_i - x_N| = {span}")
    return first_order_combination([(1.0, list(req.ops), pts, req.target)], 0.0, quad, L=L)


# ---------------------------------------------------------------------------
# integration regions
# ---------------------------------------------------------------------------


def eps_limit(tree: WeightedTree, r: int) -> float:
    dT = sum(tree.op(v).dimension for v in tree.leaves) + tree.op(tree.root).dimension
    return 2.0 ** -(dT + 4 * r + 3)


def region_classify(y, v, tree: WeightedTree, eps: float, r: int, branch=None):
    """'UV(i)', 'IR' or 'IM' for the integration variable y at vertex v."""
    if tree.is_leaf(v) or v not in tree.points:
        raise TreeError(f"vertex {v} is not internal")
    if not 0.0 < eps <= eps_limit(tree, r):
        raise ValueError(f"eps must lie in (0, {eps_limit(tree, r)}]")
    if branch is None:
        branch = tree.default_branch() if tree.internal_nonroot else []
    branch = set(branch)
    y = np.asarray(y, dtype=float)
    power = 2 * 8 ** (r + 1)
    # log-space thresholds: (1+eps)^power and eps^-power overflow quickly
    on = power * np.log1p(eps)
    off = -power * np.log(eps)
    for i in tree.ch(v):
        sib = [w for w in tree.ch(v) if w != i]
        lim = min((tree.dist(i, w) for w in sib), default=np.inf)
        d = float(np.linalg.norm(y - tree.point(i)))
        factor = on if i in branch else off
        if d == 0.0 or np.log(d) + factor < np.log(lim):
            return f"UV({i})"
    far = max(tree.dist(v, w) for w in tree.ch(v))
    factor = on if tree.pa(v) in branch else off
    d = float(np.linalg.norm(y - tree.point(v)))
    if d > 0 and far > 0 and np.log(d) >= np.log(far) + factor:
        return "IR"
    return "IM"


# ---------------------------------------------------------------------------
# infrared mixing
# ---------------------------------------------------------------------------


def _sphere_rule(n=10):
    """Product Gauss rule on S^3: nodes (k, 4) and weights summing to 2 pi^2."""
    t, wt = np.polynomial.legendre.leggauss(n)
    # psi in [0, pi] with weight sin^2 psi, theta with weight sin theta
    psi = 0.5 * pi * (t + 1.0)
    wpsi = 0.5 * pi * wt * np.sin(psi) ** 2
    ct, wct = t, wt
    phi = 2.0 * pi * np.arange(2 * n) / (2 * n)
    wphi = np.full(2 * n, 2.0 * pi / (2 * n))
    P, C, F = np.meshgrid(psi, ct, phi, indexing="ij")
    W = np.einsum("i,j,k->ijk", wpsi, wct, wphi)
    st = np.sqrt(1.0 - C ** 2)
    nodes = np.stack([
        np.cos(P),
        np.sin(P) * C,
        np.sin(P) * st * np.cos(F),
        np.sin(P) * st * np.sin(F),
    ], axis=-1).reshape(-1, 4)
    return nodes, W.reshape(-1)


def gamma_mixing(A: CompositeOp, B: CompositeOp, L: float, m: float, n_angular: int = 10) -> float:
    """int_{|y| > L} (C_0)_{L A}^B(y, 0) d^4y."""
    if m <= 0 or L <= 0:
        raise ValueError("gamma_mixing needs m > 0 and L > 0")
    if A.dimension > 4 or B.dimension > 4:
        raise ValueError("gamma_mixing is defined for [A], [B] <= 4")
    if A.dimension < B.dimension:
        return 0.0
    zero = np.zeros(4)
    g = _lagrangian_term([A], [zero], B, m, zero)
    if g is None:
        return 0.0
    nodes, weights = _sphere_rule(n_angular)

    def radial(t):
        r = np.exp(t)
        vals = np.asarray(g(r * nodes))
        return float(weights @ vals) * r ** 4  # d^4y = r^3 dr dOmega, dr = r dt

    lo = log(L)
    hi = log(max(L, 1.0 / m)) + log(80.0)
    val, _ = sp_integrate.quad(radial, lo, hi, limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def gamma_log_slope(A: CompositeOp, B: CompositeOp, L: float, masses) -> float:
    """Least-squares slope of gamma_mixing against log(L^2 m^2)."""
    x = np.array([log(L * L * mm * mm) for mm in masses])
    y = np.array([gamma_mixing(A, B, L, mm) for mm in masses])
    return float(np.polyfit(x, y, 1)[0])


def massless_scale_shift(req, L1: float, L2: float, n_angular: int = 12) -> float:
    """massless_first_order(L2) - massless_first_order(L1) by deterministic
    quadrature of the integrand over the shell L1 < |y - x_N| < L2."""
    req = req.canonical()
    pts = [np.array(p) for p in req.points]
    f, _ = first_order_integrand(list(req.ops), pts, req.target, 0.0)
    if not f.n_pieces:
        return 0.0
    nodes, weights = _sphere_rule(n_angular)
    xN = pts[-1]

    def radial(t):
        r = np.exp(t)
        return float(weights @ np.asarray(f(xN + r * nodes))) * r ** 4

    val, _ = sp_integrate.quad(radial, log(L1), log(L2), limit=200, epsabs=0.0, epsrel=1e-10)
    return val
