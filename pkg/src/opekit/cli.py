"""Command-line front end.

Every subcommand resolves a RunConfig (config file first, then flags),
runs one computation and writes a CSV table or a JSON report.  The first
lines of each CSV are comments carrying the tool version and the resolved
config, so a table can be reproduced from its own header.

Exit codes: 0 success, 2 validation error, 3 numerical diagnostic.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .bounds import bound_theorem1, xi_split
from .coefficients import CoeffRequest, RemainderRequest, ope_coefficient, remainder
from .hochschild import b_squared_residual, b_squared_tail_bound, cocycle_residual_C1, rank_one_cochain
from .multiindex import format_op, parse_op, parse_op_list
from .recursion import NumericDiagnostic, QuadratureConfig, gamma_mixing, massless_first_order, worker_count

COMMANDS = ("coeff", "remainder", "bounds", "first-order", "massless", "gamma", "hochschild", "verify")


@dataclass
class RunConfig:
    command: str
    ops: list = field(default_factory=list)  # operator strings
    target: str = "1"
    points: list = field(default_factory=list)
    mass: float = 1.0
    order: int = 0
    split: int | None = None
    dmin: int = 0
    dmax: int = 6
    quad: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def quadrature(self) -> QuadratureConfig:
        q = dict(self.quad)
        q["seed"] = self.seed  # the top-level seed wins
        return QuadratureConfig(**q)


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _load_json_arg(text: str):
    """JSON literal, or @path to a JSON file."""
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def _points(value) -> list:
    data = _load_json_arg(value) if isinstance(value, str) else value
    if isinstance(data, dict):
        data = data["points"]
    pts = [[float(c) for c in p] for p in data]
    if any(len(p) != 4 for p in pts):
        raise ValueError("each point needs 4 coordinates")
    return pts


def _floats(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ope-kit", description="Perturbative OPE coefficients in phi^4 theory.")
    p.add_argument("--version", action="version", version=f"ope-kit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, quad=True):
        sp.add_argument("--config", help="JSON config file with RunConfig fields")
        sp.add_argument("--output", "-o", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, help="worker threads (default OPE_KIT_THREADS or all cores)")
        if quad:
            sp.add_argument("--samples", type=int, help="Monte Carlo sample budget")
            sp.add_argument("--batch-size", type=int)
            sp.add_argument("--strict", action="store_true", default=None,
                            help="treat non-shrinking error estimates as failures")

    def request(sp):
        sp.add_argument("--ops", help='comma-separated operators, e.g. "phi,phi^2,d[1,0,0,0]phi"')
        sp.add_argument("--target", help="outgoing operator (default 1)")
        sp.add_argument("--points", help="JSON list of 4-vectors, or @file")
        sp.add_argument("--mass", type=float)

    sp = sub.add_parser("coeff", help="OPE coefficient at order 0 or 1")
    request(sp)
    sp.add_argument("--order", type=int)
    sp.add_argument("--reference", type=int, help="index of the reference point (default last)")
    common(sp)

    sp = sub.add_parser("remainder", help="associativity remainder against D")
    request(sp)
    sp.add_argument("--order", type=int)
    sp.add_argument("--split", type=int)
    sp.add_argument("--dmin", type=int)
    sp.add_argument("--dmax", type=int)
    sp.add_argument("--K", type=float, help="bound prefactor constant (default 1)")
    sp.add_argument("--c", type=float, help="bound growth constant (default 1)")
    common(sp)

    sp = sub.add_parser("bounds", help="theorem bound against D")
    request(sp)
    sp.add_argument("--split", type=int)
    sp.add_argument("--dmin", type=int)
    sp.add_argument("--dmax", type=int)
    sp.add_argument("--K", type=float)
    sp.add_argument("--c", type=float)
    common(sp, quad=False)

    sp = sub.add_parser("first-order", help="first-order coefficient (massive)")
    request(sp)
    common(sp)

    sp = sub.add_parser("massless", help="first-order coefficient with massless propagators")
    request(sp)
    sp.add_argument("--L", help="comma-separated ball radii")
    common(sp)

    sp = sub.add_parser("gamma", help="infrared mixing integral against the mass")
    sp.add_argument("--A", help="incoming operator (default phi^4)")
    sp.add_argument("--B", help="outgoing operator (default phi^4)")
    sp.add_argument("--L", type=float)
    sp.add_argument("--masses", help="comma-separated masses")
    common(sp, quad=False)

    sp = sub.add_parser("hochschild", help="b^2 residual or first-order cocycle residual")
    sp.add_argument("--check", choices=("b2", "cocycle"))
    request(sp)
    sp.add_argument("--dmin", type=int)
    sp.add_argument("--dmax", type=int)
    common(sp)

    sp = sub.add_parser("verify", help="run acceptance suites")
    sp.add_argument("--suite", help='"all" or comma-separated criterion numbers')
    common(sp, quad=False)
    return p


def resolve_config(args) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = RunConfig.from_dict(json.load(fh))
        cfg.command = args.command
    else:
        cfg = RunConfig(command=args.command)
    a = vars(args)
    if a.get("ops") is not None:
        cfg.ops = [format_op(op) for op in parse_op_list(a["ops"])]
    if a.get("target") is not None:
        cfg.target = format_op(parse_op(a["target"]))
    if a.get("points") is not None:
        cfg.points = _points(a["points"])
    for name in ("mass", "order", "split", "dmin", "dmax", "seed", "output", "format"):
        if a.get(name) is not None:
            setattr(cfg, name, a[name])
    quad = dict(cfg.quad)
    for flag, key in (("samples", "n_samples"), ("batch_size", "batch_size"), ("strict", "strict")):
        if a.get(flag) is not None:
            quad[key] = a[flag]
    quad["workers"] = worker_count(a.get("workers") or quad.get("workers"))
    quad["seed"] = cfg.seed
    # echo every quadrature setting, defaults included
    cfg.quad = QuadratureConfig(**quad).to_dict()
    extra = dict(cfg.extra)
    for name in ("reference", "K", "c", "L", "A", "B", "masses", "check", "suite"):
        if a.get(name) is not None:
            extra[name] = a[name]
    cfg.extra = extra
    return cfg


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# ope-kit {__version__}\n")
    buf.write(f"# config {cfg.to_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_json(cfg: RunConfig, payload: dict) -> str:
    doc = {"version": __version__, "config": json.loads(cfg.to_json())}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


def _table(cfg, columns, rows) -> str:
    if cfg.format == "json":
        return write_json(cfg, {"columns": list(columns), "rows": [list(r) for r in rows]})
    return write_csv(cfg, columns, rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _request(cfg: RunConfig, order=None) -> CoeffRequest:
    if not cfg.ops:
        raise ValueError("--ops is required")
    return CoeffRequest(
        ops=tuple(parse_op(s) for s in cfg.ops),
        target=parse_op(cfg.target),
        points=cfg.points,
        order=cfg.order if order is None else order,
        mass=cfg.mass,
        reference=cfg.extra.get("reference"),
    )


def _split(cfg, req):
    if cfg.split is None:
        raise ValueError("--split is required")
    return cfg.split


def cmd_coeff(cfg):
    req = _request(cfg)
    v = ope_coefficient(req, cfg.quadrature() if req.order else None)
    return _table(cfg, ("quantity", "value", "error"), [("coefficient", v.value, v.error)])


def _bound_rows(cfg, req, M):
    xi = xi_split(req.points, M)
    if not xi < 1:
        raise ValueError(f"separation ratio {xi} must be < 1 for the bound")
    dims = [op.dimension for op in req.ops] + [req.target.dimension]
    K, c = cfg.extra.get("K", 1.0), cfg.extra.get("c", 1.0)
    return xi, dims, K, c


def cmd_remainder(cfg):
    req = _request(cfg).canonical()
    M = _split(cfg, req)
    xi, dims, K, c = _bound_rows(cfg, req, M)
    quad = cfg.quadrature() if req.order else None
    rows = []
    for D in range(cfg.dmin, cfg.dmax + 1):
        R = remainder(RemainderRequest(req, M, D), quad)
        bound = bound_theorem1(len(req.ops), M, dims, D, req.points, req.order, K, c, req.mass)
        row = [D, R.value, abs(R.value), bound]
        if req.order:
            row.append(R.error)
        rows.append(row)
    cols = ["D", "R", "abs_R", "bound"] + (["error"] if req.order else [])
    return _table(cfg, cols, rows)


def cmd_bounds(cfg):
    req = _request(cfg).canonical()
    M = _split(cfg, req)
    xi, dims, K, c = _bound_rows(cfg, req, M)
    rows = [(D, xi, bound_theorem1(len(req.ops), M, dims, D, req.points, cfg.order, K, c, req.mass))
            for D in range(cfg.dmin, cfg.dmax + 1)]
    return _table(cfg, ("D", "xi", "bound"), rows)


def cmd_first_order(cfg):
    cfg.order = 1
    req = _request(cfg, order=1)
    v = ope_coefficient(req, cfg.quadrature())
    return _table(cfg, ("quantity", "value", "error"), [("coefficient", v.value, v.error)])


def cmd_massless(cfg):
    cfg.order, cfg.mass = 1, 0.0
    req = _request(cfg, order=1)
    if "L" not in cfg.extra:
        raise ValueError("--L is required")
    rows = []
    for L in _floats(str(cfg.extra["L"])):
        v = massless_first_order(req, L, cfg.quadrature())
        rows.append((L, v.value, v.error))
    return _table(cfg, ("L", "value", "error"), rows)


def cmd_gamma(cfg):
    A = parse_op(cfg.extra.get("A", "phi^4"))
    B = parse_op(cfg.extra.get("B", "phi^4"))
    L = float(cfg.extra.get("L", 1.0))
    masses = _floats(str(cfg.extra.get("masses", "0.01,0.001,0.0001")))
    rows = [(m, float(np.log(L * L * m * m)), gamma_mixing(A, B, L, m)) for m in masses]
    return _table(cfg, ("m", "log_L2m2", "gamma"), rows)


def cmd_hochschild(cfg):
    req = _request(cfg)
    if len(req.ops) != 3:
        raise ValueError("hochschild checks need three operators and three points")
    check = cfg.extra.get("check", "b2")
    rows = []
    if check == "b2":
        f = rank_one_cochain(np.random.default_rng(cfg.seed))
        for D in range(max(cfg.dmin, 1), cfg.dmax + 1):
            res = b_squared_residual(f, req.points, list(req.ops), req.target, D, req.mass)
            tail = b_squared_tail_bound(f, req.points, list(req.ops), req.target, D, req.mass)
            rows.append((D, res, tail))
        return _table(cfg, ("D_max", "residual", "tail_bound"), rows)
    for D in range(max(cfg.dmin, 1), cfg.dmax + 1):
        r = cocycle_residual_C1(req.points, req.ops, req.target, D, cfg.quadrature(), req.mass)
        rows.append((D, r.value, r.sigma, r.tail))
    return _table(cfg, ("D_max", "residual", "sigma", "tail"), rows)


def cmd_verify(cfg):
    from .verify import parse_suite, report, run_suite
    numbers = parse_suite(str(cfg.extra.get("suite", "all")))
    results = run_suite(numbers, seed=cfg.seed, echo=lambda line: print(line, file=sys.stderr))
    cfg.format = "json"
    return write_json(cfg, report(results))


HANDLERS = {
    "coeff": cmd_coeff,
    "remainder": cmd_remainder,
    "bounds": cmd_bounds,
    "first-order": cmd_first_order,
    "massless": cmd_massless,
    "gamma": cmd_gamma,
    "hochschild": cmd_hochschild,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        text = HANDLERS[cfg.command](cfg)
    except NumericDiagnostic as exc:
        print(f"ope-kit: numerical diagnostic: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"ope-kit: error: {exc}", file=sys.stderr)
        return 2
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
