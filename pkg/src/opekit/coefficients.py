"""OPE coefficients at orders 0 and 1, tree contractions, associativity
remainders and numerical axiom residuals."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from math import sqrt

import numpy as np

from .matchings import free_coefficient, merged_contraction
from .multiindex import IDENTITY, CompositeOp, enumerate_ops, signed_permutation_action
from .trees import TreeError, WeightedTree, split_tree


class UnsupportedOrderError(ValueError):
    """Perturbation orders beyond the first are not implemented."""


@dataclass(frozen=True)
class CoeffValue:
    value: float
    error: float = 0.0

    def __add__(self, other):
        other = _as_value(other)
        return CoeffValue(self.value + other.value, sqrt(self.error ** 2 + other.error ** 2))

    def __sub__(self, other):
        other = _as_value(other)
        return CoeffValue(self.value - other.value, sqrt(self.error ** 2 + other.error ** 2))

    def __abs__(self):
        return abs(self.value)


def _as_value(x):
    return x if isinstance(x, CoeffValue) else CoeffValue(float(x), 0.0)


@dataclass(frozen=True)
class CoeffRequest:
    ops: tuple
    target: CompositeOp
    points: tuple
    order: int = 0
    mass: float = 1.0
    reference: int | None = None  # index of the reference point, default last

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "points", tuple(tuple(float(c) for c in p) for p in self.points))
        if len(self.ops) != len(self.points) or not self.ops:
            raise ValueError("need as many points as operators, at least one")
        for p in self.points:
            if len(p) != 4 or not all(np.isfinite(p)):
                raise ValueError(f"points must be finite 4-vectors, got {p}")
        pts = np.array(self.points)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.all(pts[i] == pts[j]):
                    raise ValueError(f"points {i} and {j} coincide")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")

    def canonical(self) -> "CoeffRequest":
        """Equivalent request whose reference point is the last one."""
        k = self.reference
        n = len(self.ops)
        if k is None or k == n - 1 or k == -1:
            return replace(self, reference=None)
        order = [i for i in range(n) if i != k] + [k]
        return replace(
            self,
            ops=tuple(self.ops[i] for i in order),
            points=tuple(self.points[i] for i in order),
            reference=None,
        )


@dataclass(frozen=True)
class RemainderRequest:
    request: CoeffRequest
    split: int
    D: int


def separation_ratio(points, split: int) -> float:
    """max_{i<=M} |x_i - x_M| / min_{j>M} |x_j - x_M| (1-based M)."""
    pts = np.asarray(points, dtype=float)
    xm = pts[split - 1]
    near = max(np.linalg.norm(pts[:split] - xm, axis=1))
    far = min(np.linalg.norm(pts[split:] - xm, axis=1))
    return float(near / far)


def ope_coefficient(req: CoeffRequest, quad=None) -> CoeffValue:
    """(C_r)_{A_1...A_N}^B(x_1,...,x_N) for r in {0, 1}."""
    req = req.canonical()
    if req.order == 0:
        val = free_coefficient(list(req.ops), [np.array(p) for p in req.points], req.target, req.mass)
        return CoeffValue(float(val), 0.0)
    if req.order == 1:
        from .recursion import first_order_coeff, massless_first_order
        if req.mass == 0:
            raise ValueError("first order at m = 0 needs massless_first_order with a scale L")
        return first_order_coeff(req, quad)
    raise UnsupportedOrderError(f"order {req.order} is not implemented (orders 0 and 1 only)")


def contraction_P(tree: WeightedTree, r: int, D: dict, m: float, quad=None) -> CoeffValue:
    """prod_{u internal non-root} sum_{[A_u]=D_u} P_r(T)."""
    if r == 0:
        return CoeffValue(merged_contraction(tree, D, m), 0.0)
    if r != 1:
        raise UnsupportedOrderError(f"order {r} is not implemented")
    from .recursion import first_order_combination
    inner = tree.internal_nonroot
    verts = tree.internal
    # sum over intermediate operators, and over which vertex carries order 1
    terms = []
    for choice in product(*[enumerate_ops(int(D[u])) for u in inner]):
        ops = dict(tree.ops)
        ops.update(zip(inner, choice))
        for hot in verts:
            const = 1.0
            for v in verts:
                if v == hot:
                    continue
                kids = tree.ch(v)
                const *= free_coefficient(
                    [ops[k] for k in kids], [tree.point(k) for k in kids], ops[v], m,
                    root_point=tree.point(v), scales=[tree.scale(k) for k in kids])
                if const == 0.0:
                    break
            if const == 0.0:
                continue
            kids = tree.ch(hot)
            terms.append((const, [ops[k] for k in kids], [tree.point(k) for k in kids], ops[hot]))
    if not terms:
        return CoeffValue(0.0, 0.0)
    return first_order_combination(terms, m, quad)


# ---------------------------------------------------------------------------
# associativity remainder
# ---------------------------------------------------------------------------


def _product_sum_shell(ops, points, target, split, d, m):
    """sum_{[C]=d} (C_0)_{A_1..A_M}^C (C_0)_{C A_M+1..A_N}^B, explicit."""
    inner_ops, inner_pts = list(ops[:split]), list(points[:split])
    outer_ops, outer_pts = list(ops[split:]), list(points[split:])
    n_in = sum(op.n_factors for op in inner_ops)
    n_out = sum(op.n_factors for op in outer_ops) + target.n_factors
    total = 0.0
    for C in enumerate_ops(d):
        k = C.n_factors
        if k > n_in or (k + n_in) % 2 or (k + n_out) % 2 or k > n_out:
            continue
        a = free_coefficient(inner_ops, inner_pts, C, m, root_point=inner_pts[-1])
        if a == 0.0:
            continue
        b = free_coefficient([C] + outer_ops, [inner_pts[-1]] + outer_pts, target, m,
                             root_point=outer_pts[-1])
        total += a * b
    return total


def remainder_shells(req: CoeffRequest, split: int, D: int, method: str = "merged") -> list:
    """Contributions of intermediate dimensions d = 0..D at order 0."""
    req = req.canonical()
    ops, pts = list(req.ops), [np.array(p) for p in req.points]
    n = len(ops)
    if not 1 <= split < n:
        raise ValueError("split index must satisfy 1 <= M < N")
    if split == 1:
        # the inner one-point coefficient is the identity
        return [free_coefficient(ops, pts, req.target, req.mass) if d == ops[0].dimension else 0.0
                for d in range(D + 1)]
    if method == "product":
        return [_product_sum_shell(ops, pts, req.target, split, d, req.mass) for d in range(D + 1)]
    tree = split_tree(ops, [tuple(p) for p in pts], req.target, split, IDENTITY)
    u = n
    return [merged_contraction(tree, {u: d}, req.mass) for d in range(D + 1)]


def remainder(rreq: RemainderRequest, quad=None, method: str = "merged") -> CoeffValue:
    """R_r^D = C_r(all points) - sum_{s+t=r} sum_{[C]<=D} C_s(inner) C_t(outer)."""
    req = rreq.request.canonical()
    if req.order == 0:
        full = free_coefficient(list(req.ops), [np.array(p) for p in req.points], req.target, req.mass)
        shells = remainder_shells(req, rreq.split, rreq.D, method=method)
        return CoeffValue(full - sum(shells), 0.0)
    if req.order != 1:
        raise UnsupportedOrderError(f"order {req.order} is not implemented")
    from .recursion import first_order_combination
    ops, pts, m = list(req.ops), [np.array(p) for p in req.points], req.mass
    M = rreq.split
    terms = [(1.0, ops, pts, req.target)]
    inner_ops, inner_pts = ops[:M], pts[:M]
    outer_ops, outer_pts = ops[M:], pts[M:]
    for d in range(rreq.D + 1):
        for C in enumerate_ops(d):
            outer = free_coefficient([C] + outer_ops, [inner_pts[-1]] + outer_pts, req.target, m)
            if outer != 0.0:
                terms.append((-outer, inner_ops, inner_pts, C))
            inner = free_coefficient(inner_ops, inner_pts, C, m) if M > 1 else float(C == inner_ops[0])
            if inner != 0.0:
                terms.append((-inner, [C] + outer_ops, [inner_pts[-1]] + outer_pts, req.target))
    return first_order_combination(terms, m, quad)


# ---------------------------------------------------------------------------
# axioms
# ---------------------------------------------------------------------------


def _value(req, quad):
    return ope_coefficient(req, quad)


@dataclass
class AxiomReport:
    residual: float
    scale: float
    error: float = 0.0
    detail: dict = field(default_factory=dict)


def transform_request(req: CoeffRequest, perm=(0, 1, 2, 3), signs=(1, 1, 1, 1), shift=(0, 0, 0, 0)):
    """Apply x -> g x + a with g a signed axis permutation.

    Returns (transformed request, sign) such that
    C_{gA}^{gB}(g x + a) = sign * C_A^B(x).
    """
    sign = 1
    new_ops = []
    for op in list(req.ops) + [req.target]:
        factors = []
        for alpha in op.factors:
            a2, s = signed_permutation_action(alpha, perm, signs)
            factors.append(a2)
            sign *= s
        new_ops.append(CompositeOp(tuple(factors)))
    pts = []
    for p in req.points:
        q = tuple(signs[mu] * p[perm[mu]] + shift[mu] for mu in range(4))
        pts.append(q)
    return replace(req, ops=tuple(new_ops[:-1]), target=new_ops[-1], points=tuple(pts)), sign


def axiom_residuals(req: CoeffRequest, axiom: str, quad=None, rng=None, **kw) -> AxiomReport:
    """Residual |lhs - rhs| of one axiom identity at the request's points.

    C1: imaginary part (coefficients are real by construction).
    C2: translation and signed axis permutation covariance; pass perm, signs,
        shift, or let rng draw them.
    C4: swap of two non-last operators (indices i, j).
    C5: eps^(sum[A]-[B]+delta) C(eps x) along a decreasing eps sequence;
        residual is the last magnitude, scale the first.
    C6: identity inserted at a non-last slot (index i, point).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    req = req.canonical()
    base = _value(req, quad)
    scale = max(abs(base.value), 1e-300)
    if axiom == "C1":
        v = complex(base.value)
        return AxiomReport(abs(v.imag), scale, 0.0)
    if axiom == "C2":
        perm = kw.get("perm")
        signs = kw.get("signs")
        shift = kw.get("shift")
        if perm is None:
            perm = tuple(int(i) for i in rng.permutation(4))
        if signs is None:
            signs = tuple(int(s) for s in rng.choice([-1, 1], size=4))
        if shift is None:
            shift = tuple(float(c) for c in rng.normal(size=4))
        if sorted(perm) != [0, 1, 2, 3] or any(s not in (1, -1) for s in signs):
            raise ValueError("unsupported isometry: only signed axis permutations and translations")
        moved, sign = transform_request(req, perm, signs, shift)
        other = _value(moved, quad)
        res = abs(other.value - sign * base.value)
        return AxiomReport(res, scale, sqrt(base.error ** 2 + other.error ** 2),
                           {"perm": perm, "signs": signs, "shift": shift})
    if axiom == "C4":
        n = len(req.ops)
        if n < 3:
            return AxiomReport(0.0, scale, 0.0, {"note": "no pair of non-last operators"})
        i, j = kw.get("i"), kw.get("j")
        if i is None:
            i, j = (int(k) for k in rng.choice(n - 1, size=2, replace=False))
        if n - 1 in (i, j):
            raise ValueError("C4 residual swaps non-last operators only")
        ops, pts = list(req.ops), list(req.points)
        ops[i], ops[j] = ops[j], ops[i]
        pts[i], pts[j] = pts[j], pts[i]
        other = _value(replace(req, ops=tuple(ops), points=tuple(pts)), quad)
        res = abs(other.value - base.value)
        return AxiomReport(res, scale, sqrt(base.error ** 2 + other.error ** 2), {"i": i, "j": j})
    if axiom == "C5":
        delta = kw.get("delta", 0.5)
        eps_seq = kw.get("eps", [10.0 ** (-k) for k in range(0, 25, 2)])
        power = sum(op.dimension for op in req.ops) - req.target.dimension + delta
        centre = np.array(req.points[-1])
        samples = []
        for eps in eps_seq:
            # scaled about the reference point, which is moved to the origin
            # (translation invariance) so tiny separations stay representable
            pts = tuple(tuple(eps * (np.array(p) - centre)) for p in req.points)
            val = _value(replace(req, points=pts), quad).value
            samples.append(abs(eps ** power * val))
        return AxiomReport(samples[-1], max(samples[0], 1e-300), 0.0, {"eps": list(eps_seq), "samples": samples})
    if axiom == "C6":
        n = len(req.ops)
        i = kw.get("i", int(rng.integers(0, n)))
        if i > n - 1:
            raise ValueError("identity must be inserted before the last operator")
        point = kw.get("point")
        if point is None:
            point = tuple(float(c) for c in np.array(req.points[-1]) + rng.normal(size=4) * 2.0)
        ops = list(req.ops)
        pts = list(req.points)
        ops.insert(i, IDENTITY)
        pts.insert(i, tuple(point))
        other = _value(replace(req, ops=tuple(ops), points=tuple(pts)), quad)
        res = abs(other.value - base.value)
        return AxiomReport(res, scale, sqrt(base.error ** 2 + other.error ** 2), {"i": i})
    raise ValueError(f"unknown axiom {axiom!r}")
