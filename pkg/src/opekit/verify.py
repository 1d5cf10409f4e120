"""Acceptance suite: ten numerical checks of the library's central claims.

Each check returns a CheckResult; ``run_suite`` runs a selection and
``report`` turns the results into a JSON-ready dictionary.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from math import log

import numpy as np

from . import oracles
from .bounds import bound_theorem1, fit_constants, taylor_bound_check
from .coefficients import CoeffRequest, axiom_residuals, remainder_shells, transform_request
from .hochschild import (b_squared_residual, b_squared_tail_bound, cocycle_residual_C1,
                         rank_one_cochain)
from .matchings import free_coefficient, merged_contraction
from .multiindex import IDENTITY, PHI, PHI2, PHI4, enumerate_ops_upto, multi_indices
from .recursion import (QuadratureConfig, first_order_coeff, gamma_mixing, massless_first_order,
                        massless_scale_shift)
from .trees import build_tree, split_tree

VACUUM_GEOMETRIES = [
    [(0, 0, 0, 0), (1, 0, 0, 0), (0, 1.2, 0, 0), (0.3, 0.4, 0.9, 0)],
    [(0.2, 0, 0, 0.1), (0, 0.8, 0, 0), (-0.5, 0, 0.6, 0), (0, 0, 0, 0)],
]

# collinear-ish triples x1 - x2 - x3 with r12 < r23 < r13
F3_POINTS = [
    [(-0.6, 0.05, 0, 0), (0, 0, 0, 0), (1.0, 0, 0.02, 0)],
    [(-0.5, 0, 0.05, 0), (0, 0, 0, 0), (1.2, 0.03, 0, 0)],
    [(0, -0.6, 0, 0.04), (0, 0, 0, 0), (0.02, 1.1, 0, 0)],
]


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.summary}"


def _rel(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _unit(rng):
    v = rng.normal(size=4)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------


def check_wick_oracle(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    basis = enumerate_ops_upto(3)
    worst, count = 0.0, 0
    while count < 400:
        n = int(rng.integers(1, 6))
        ops = [basis[i] for i in rng.integers(1, len(basis), n)]
        target = basis[rng.integers(len(basis))]
        if sum(op.n_factors for op in ops) + target.n_factors > 10:
            continue
        pts = [rng.normal(size=4) for _ in range(n)]
        for m in (0.0, 1.0):
            a = free_coefficient(ops, pts, target, m)
            b = oracles.wick_coefficient(ops, pts, target, m)
            worst = max(worst, _rel(a, b))
            count += 1
    return CheckResult(1, "free Wick oracle", worst <= 1e-12,
                       f"{count} requests, worst relative error {worst:.2e} (limit 1e-12)",
                       {"requests": count, "worst": worst})


def check_merging(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, n_geo = 0.0, 0
    for _ in range(20):
        xi = rng.uniform(0.2, 0.6)
        pts = [xi * _unit(rng), np.zeros(4), (1.0 + rng.uniform(0, 0.5)) * _unit(rng)]
        ops = [PHI, PHI, PHI2 if rng.random() < 0.5 else PHI]
        target = PHI if sum(o.n_factors for o in ops) % 2 else PHI2
        for d in range(7):
            a = merged_contraction(split_tree(ops, pts, target, 2, PHI), {3: d}, 1.0)
            b = oracles.product_sum_T1(ops, pts, target, 2, d, 1.0)
            worst = max(worst, _rel(a, b))
        n_geo += 1
    for _ in range(10):
        c1, c2 = rng.normal(size=4) * 0.2, rng.normal(size=4) * 0.2 + np.array([2.0, 0, 0, 0])
        x = [c1 + rng.normal(size=4) * 0.1, c1, rng.normal(size=4) + np.array([1.0, 1.5, 0, 0]),
             c2 + rng.normal(size=4) * 0.1, c2]
        ops = [PHI, PHI, PHI, PHI2, PHI]
        recs = [{"id": i, "parent": (5, 5, 7, 6, 6)[i], "point": list(x[i]), "op": ops[i]} for i in range(5)]
        recs += [{"id": 5, "parent": 7, "point": list(x[1]), "op": PHI},
                 {"id": 6, "parent": 7, "point": list(x[4]), "op": PHI},
                 {"id": 7, "parent": None, "point": list(x[4]), "op": PHI2}]
        tree = build_tree(recs)
        for d1, d2 in [(2, 2), tuple(int(k) for k in rng.integers(0, 7, 2))]:
            a = merged_contraction(tree, {5: d1, 6: d2}, 1.0)
            b = oracles.product_sum_T2(ops, x, PHI2, d1, d2, 1.0)
            worst = max(worst, _rel(a, b))
        n_geo += 1
    return CheckResult(2, "merging lemma", worst <= 1e-10,
                       f"{n_geo} geometries (two tree shapes), worst relative error {worst:.2e} (limit 1e-10)",
                       {"geometries": n_geo, "worst": worst})


def _xi_half_request():
    x1 = (0.3, 0.4, 0, 0)
    x3 = (0.2, -0.6, 0.5, 0.5916079783099616)
    return CoeffRequest((PHI,) * 3, PHI, [x1, (0, 0, 0, 0), x3], mass=1.0)


def check_remainder_decay(seed: int) -> CheckResult:
    req = _xi_half_request()
    full = free_coefficient(list(req.ops), [np.array(p) for p in req.points], req.target, 1.0)
    partial = np.cumsum(remainder_shells(req, 2, 10))
    Ds, logs = [], []
    for D in range(4, 11):
        r = abs(full - partial[D])
        if r > 0:
            Ds.append(D)
            logs.append(log(r))
    slope = float(np.polyfit(Ds, logs, 1)[0]) if len(Ds) > 1 else float("nan")
    ok = slope <= log(0.75)
    return CheckResult(3, "remainder decay", bool(ok),
                       f"log-slope {slope:.3f} per unit D (limit log 0.75 = {log(0.75):.3f})",
                       {"D": Ds, "log_abs_R": logs, "slope": slope})


def check_theorem_bound(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfgs = []
    for k in range(24):
        xi, R = rng.uniform(0.15, 0.7), rng.uniform(0.5, 2.0)
        pts = [tuple(xi * R * _unit(rng)), (0, 0, 0, 0), tuple(R * _unit(rng))]
        req = CoeffRequest((PHI,) * 3, PHI, pts, mass=1.0)
        full = free_coefficient([PHI] * 3, [np.array(p) for p in pts], PHI, 1.0)
        partial = np.cumsum(remainder_shells(req, 2, 10))
        for D in range(11):
            cfgs.append((k, [1, 1, 1, 1], 2, D, pts, abs(full - partial[D])))
    train = [c[1:] for c in cfgs if c[0] % 2 == 0]
    test = [c[1:] for c in cfgs if c[0] % 2 == 1]
    K, c = fit_constants(train, 1.0)
    ratios = [v / bound_theorem1(3, 2, d, D, p, 0, K, c, 1.0) for d, M, D, p, v in test]
    passed = sum(r <= 1.0 for r in ratios)
    return CheckResult(4, "theorem bound domination", passed == len(ratios),
                       f"{passed}/{len(ratios)} held-out samples (12 configurations) dominated, "
                       f"worst |R|/bound {max(ratios):.3f}",
                       {"K": K, "c": c, "worst_ratio": max(ratios), "held_out": len(ratios)})


def check_taylor_bound(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    n = 10_000
    for _ in range(n):
        r = int(rng.integers(1, 4))
        degrees = [int(d) for d in rng.integers(0, 5, size=r)]
        nw = int(rng.integers(0, 3))
        ws = multi_indices(nw)
        w = ws[rng.integers(len(ws))]
        y = rng.normal(size=4) * rng.uniform(0.2, 3)
        xs = [rng.normal(size=4) * rng.uniform(0.01, 2) for _ in range(r)]
        eps = rng.uniform(0.01, 1) / (8 * r)
        delta = float(rng.choice([0.0, 0.5]))
        m = float(rng.choice([0.5, 1.0]))
        lhs, rhs = taylor_bound_check(r, degrees, w, xs, y, eps, delta, m)
        if lhs > rhs:
            violations += 1
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return CheckResult(5, "Taylor bound", violations == 0,
                       f"{violations} violations in {n} samples, worst lhs/rhs {worst:.3f}",
                       {"violations": violations, "samples": n, "worst_ratio": worst})


def check_b_squared(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(10):
        pts = F3_POINTS[k % len(F3_POINTS)]
        f = rank_one_cochain(rng)
        res = [b_squared_residual(f, pts, [PHI, PHI, PHI], PHI, D, 1.0) for D in (2, 4, 6)]
        tail = b_squared_tail_bound(f, pts, [PHI, PHI, PHI], PHI, 6, 1.0)
        rows.append({"points": pts, "residuals": res, "tail_bound": tail,
                     "monotone": res[0] >= res[1] >= res[2], "within_tail": res[2] <= tail})
    n_mono = sum(r["monotone"] for r in rows)
    n_tail = sum(r["within_tail"] for r in rows)
    return CheckResult(6, "b^2 = 0", n_mono == n_tail == 10,
                       f"{n_mono}/10 cochains monotone over D_max = 2, 4, 6; "
                       f"{n_tail}/10 within the tail bound at D_max = 6",
                       {"rows": rows})


def check_first_order(seed: int) -> CheckResult:
    quad = QuadratureConfig(n_samples=1_000_000, seed=seed, workers=1)
    rows, ok = [], True
    for g, pts in enumerate(VACUUM_GEOMETRIES):
        req = CoeffRequest((PHI,) * 4, IDENTITY, pts, order=1, mass=1.0)
        for s in (seed, seed + 1):
            v = first_order_coeff(req, QuadratureConfig(n_samples=1_000_000, seed=s, workers=1))
            o, oe = oracles.vacuum_first_order_mc(pts, 1.0, 1_000_000, s + 1000)
            z = abs(v.value - o) / np.hypot(v.error, oe)
            ok = ok and z <= 3
            rows.append({"geometry": g, "seed": s, "value": v.value, "error": v.error,
                         "oracle": o, "oracle_error": oe, "z": z})
        moved, sign = transform_request(req, shift=(0.7, -0.3, 1.1, 0.2))
        t = first_order_coeff(moved, quad)
        base = first_order_coeff(req, quad)
        zt = abs(sign * t.value - base.value) / np.hypot(t.error, base.error)
        ok = ok and zt <= 3
        rows.append({"geometry": g, "translation_z": zt})
    two = first_order_coeff(CoeffRequest((PHI, PHI), IDENTITY, [(0, 0, 0, 0), (0.7, 0.2, 0, 0)],
                                         order=1, mass=1.0), quad)
    ok = ok and abs(two.value) <= two.error
    zmax = max(r.get("z", r.get("translation_z")) for r in rows)
    return CheckResult(7, "first-order recursion", ok,
                       f"max deviation {zmax:.2f} sigma (oracle and translation), "
                       f"phi phi -> 1 = {two.value:.2e} +- {two.error:.1e}",
                       {"rows": rows, "two_point": [two.value, two.error]})


def check_massless(seed: int) -> CheckResult:
    pts = VACUUM_GEOMETRIES[0]
    req = CoeffRequest((PHI,) * 4, IDENTITY, pts, order=1, mass=0.0)
    span = max(float(np.linalg.norm(np.array(p) - np.array(pts[-1]))) for p in pts)
    quad = QuadratureConfig(n_samples=1_000_000, seed=seed, workers=1)
    a = massless_first_order(req, 1.5 * span, quad)
    b = massless_first_order(req, 3.0 * span, quad)
    z = abs(a.value - b.value) / np.hypot(a.error, b.error)
    shift = massless_scale_shift(req, 1.5 * span, 3.0 * span)
    masses = (1e-2, 1e-3, 1e-4)
    gam = [gamma_mixing(PHI4, PHI4, 1.0, m) for m in masses]
    slopes = [(gam[i + 1] - gam[i]) / (log(masses[i + 1] ** 2) - log(masses[i] ** 2)) for i in range(2)]
    stable = abs(slopes[1] - slopes[0]) <= 0.2 * abs(slopes[1])
    l_ok = z <= 3
    return CheckResult(8, "massless scheme", bool(l_ok and stable),
                       f"L1/L2 differ by {z:.1f} sigma (limit 3; shell quadrature predicts "
                       f"{shift:.3e}, observed {b.value - a.value:.3e}); gamma slopes "
                       f"{slopes[0]:.4e}, {slopes[1]:.4e} ({'stable' if stable else 'unstable'})",
                       {"L1": [a.value, a.error], "L2": [b.value, b.error], "z": z,
                        "predicted_shift": shift, "gamma": gam, "slopes": slopes,
                        "L_agreement": bool(l_ok), "gamma_stable": bool(stable)})


def check_axioms(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    basis = enumerate_ops_upto(3)
    worst = {}
    for _ in range(100):
        n = int(rng.integers(2, 5))
        ops = tuple(basis[i] for i in rng.integers(1, len(basis), size=n))
        target = basis[rng.integers(len(basis))]
        pts = [tuple(rng.normal(size=4)) for _ in range(n)]
        req = CoeffRequest(ops, target, pts, mass=float(rng.choice([0.0, 1.0])))
        for ax in ("C1", "C2", "C4", "C5", "C6"):
            rep = axiom_residuals(req, ax, rng=rng)
            worst[ax] = max(worst.get(ax, 0.0), rep.residual / rep.scale)
    ok = all(v <= 1e-10 for v in worst.values())
    quad = QuadratureConfig(n_samples=200_000, seed=seed, workers=1)
    req = CoeffRequest((PHI,) * 4, IDENTITY, VACUUM_GEOMETRIES[0], order=1, mass=1.0)
    zs = {}
    for ax in ("C2", "C4", "C6"):
        rep = axiom_residuals(req, ax, quad=quad, rng=rng)
        zs[ax] = rep.residual / rep.error if rep.error else (0.0 if rep.residual == 0 else np.inf)
    ok = ok and all(z <= 3 for z in zs.values())
    return CheckResult(9, "axiom residuals", bool(ok),
                       "order 0 worst relative " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                       + "; order 1 " + ", ".join(f"{k} {v:.2f} sigma" for k, v in zs.items()),
                       {"order0": worst, "order1_sigma": zs})


def check_cocycle(seed: int) -> CheckResult:
    quad = QuadratureConfig(n_samples=200_000, seed=seed, workers=1)
    rows, ok = [], True
    for pts in F3_POINTS:
        r = cocycle_residual_C1(pts, (PHI, PHI, PHI), PHI, 4, quad, 1.0)
        good = r.residual <= 3 * r.sigma + r.tail
        ok = ok and good
        rows.append({"points": pts, "residual": r.residual, "sigma": r.sigma, "tail": r.tail})
    worst = max(r["residual"] / (3 * r["sigma"] + r["tail"]) for r in rows)
    return CheckResult(10, "first-order cocycle", ok,
                       f"3 points, worst residual / (3 sigma + tail) = {worst:.3f}", {"rows": rows})


CHECKS = {
    1: check_wick_oracle,
    2: check_merging,
    3: check_remainder_decay,
    4: check_theorem_bound,
    5: check_taylor_bound,
    6: check_b_squared,
    7: check_first_order,
    8: check_massless,
    9: check_axioms,
    10: check_cocycle,
}


def parse_suite(text: str) -> list:
    """"all" or a comma-separated list of criterion numbers."""
    if text.strip() == "all":
        return sorted(CHECKS)
    out = []
    for part in text.split(","):
        k = int(part)
        if k not in CHECKS:
            raise ValueError(f"unknown criterion {k}; choose from 1..{len(CHECKS)}")
        out.append(k)
    return out


def run_check(number: int, seed: int = 42) -> CheckResult:
    t = time.perf_counter()
    res = CHECKS[number](seed)
    res.seconds = time.perf_counter() - t
    return res


def run_suite(numbers, seed: int = 42, echo=None) -> list:
    results = []
    for k in numbers:
        res = run_check(k, seed)
        if echo:
            echo(res.line())
        results.append(res)
    return results


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def report(results) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "results": [_jsonable(asdict(r)) for r in results],
    }
