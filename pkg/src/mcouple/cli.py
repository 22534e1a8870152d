"""Command-line front end.

Measures are read from JSON files of the form ``{"atoms": [{"x": .., "w": ..}]}``.
Reports go to stdout (or ``--out``) as JSON with sorted keys, or as CSV with a
header row when ``--format csv`` is given and the command has a tabular output.

Exit codes: 0 on success, 1 when a check fails or the library rejects the
input, 2 on usage errors. Errors are written to stderr as JSON.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import analysis, lp_oracle
from .coupling_builder import (
    JointMeasure,
    build_coupling,
    build_kernel,
    build_submartingale,
    build_supermartingale,
    sample,
)
from .discretize import DISTRIBUTIONS, discretize
from .errors import McoupleError
from .measures import DEFAULT_TOL, DiscreteMeasure, check_order, from_atoms
from .qparam import QParam, q_it, q_mix, q_nit, q_product, q_zeta
from .quantile_calculus import has_single_sign_change

COUPLINGS = ("it", "nit", "product", "zeta", "mix")
_BUILDERS = {"it": q_it, "nit": q_nit, "product": q_product, "zeta": q_zeta}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_tol() -> float:
    raw = os.environ.get("MCOUPLE_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"MCOUPLE_TOL is not a number: {raw!r}") from None
    if not tol > 0:
        raise UsageError("MCOUPLE_TOL must be positive")
    return tol


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc.msg}") from None


def _measure(path: str) -> DiscreteMeasure:
    data = _load_json(path)
    if not isinstance(data, dict) or "atoms" not in data:
        raise UsageError(f"{path} has no 'atoms' list")
    return DiscreteMeasure.from_dict(data)


def _joint(path: str) -> JointMeasure:
    data = _load_json(path)
    if isinstance(data, dict) and "joint" in data:
        data = data["joint"]
    if not isinstance(data, dict) or "atoms" not in data:
        raise UsageError(f"{path} has no joint 'atoms' list")
    return JointMeasure.from_dict(data)


def _qparam(args, mu, nu) -> QParam:
    if args.q:
        q = QParam.from_dict(_load_json(args.q))
        q.check(mu, nu)
        return q
    if args.coupling == "mix":
        left, right = args.mix
        return q_mix(args.lam, _BUILDERS[left](mu, nu, args.tol), _BUILDERS[right](mu, nu, args.tol))
    return _BUILDERS[args.coupling](mu, nu, args.tol)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, json payload, csv text or None)
# ---------------------------------------------------------------------------


def _cmd_order_check(args):
    rep = check_order(args.mu, args.nu, args.tol)
    d = rep.to_dict()
    return (0 if rep.cx else 1), d, _rows_csv(list(sorted(d)), [[d[k] for k in sorted(d)]])


def _cmd_build(args):
    q = _qparam(args, args.mu, args.nu)
    j = build_coupling(q, args.mu, args.nu)
    rep = analysis.verify_coupling(j, args.mu, args.nu, args.tol)
    return 0, {"q": q.to_dict(), "joint": j.to_dict(), "report": rep.to_dict()}, j.to_csv()


def _cmd_verify(args):
    rep = analysis.verify_coupling(args.joint, args.mu, args.nu, args.tol)
    ok = max(rep.marginal_err_mu, rep.marginal_err_nu) <= args.tol and rep.bound_2w1_holds
    d = rep.to_dict()
    return (0 if ok else 1), d, _rows_csv(list(sorted(d)), [[d[k] for k in sorted(d)]])


def _cmd_cost(args):
    if args.joint is not None:
        j = args.joint
    else:
        if args.mu is None or args.nu is None:
            raise UsageError("cost needs --joint, or --mu and --nu")
        j = build_coupling(_qparam(args, args.mu, args.nu), args.mu, args.nu)
    rows = [{"rho": r, "cost": analysis.cost(j, r)} for r in args.rho]
    return 0, {"rows": rows}, _rows_csv(["rho", "cost"], [[r["rho"], r["cost"]] for r in rows])


def _cmd_bound(args):
    j = build_coupling(_qparam(args, args.mu, args.nu), args.mu, args.nu)
    rep = analysis.verify_coupling(j, args.mu, args.nu, args.tol)
    d = {"cost1": rep.cost1, "w1": rep.w1, "ratio": rep.ratio, "holds": rep.bound_2w1_holds}
    return (0 if rep.bound_2w1_holds else 1), d, _rows_csv(["cost1", "w1", "ratio", "holds"],
                                                          [[d["cost1"], d["w1"], d["ratio"], d["holds"]]])


def _cmd_decompose(args):
    dec = analysis.irreducible_components(args.mu, args.nu, args.tol)
    rows = [[c.t_low, c.t_high, c.mass] for c in dec.components]
    return 0, dec.to_dict(), _rows_csv(["t_low", "t_high", "mass"], rows)


def _cmd_drift(builder):
    def run(args):
        j = builder(args.mu, args.nu, args.tol)
        rep = analysis.verify_coupling(j, args.mu, args.nu, args.tol)
        return 0, {"joint": j.to_dict(), "report": rep.to_dict()}, j.to_csv()
    return run


def _cmd_lp(args):
    rows = []
    for r in args.rho:
        sol = lp_oracle.min_cost_coupling(args.mu, args.nu, rho=r, mode=args.mode, sense=args.sense)
        rows.append({"rho": r, **sol.to_dict()})
    csv = _rows_csv(["rho", "value", "status"], [[r["rho"], r["value"], r["status"]] for r in rows])
    code = 0 if all(r["status"] == "optimal" for r in rows) else 1
    if len(rows) == 1:
        return code, {"value": rows[0]["value"], "status": rows[0]["status"]}, csv
    return code, {"rows": rows}, csv


def _cmd_crho(args):
    mu, nu = args.mu, args.nu
    names = args.kinds
    if names is None:
        names = ["it", "zeta"]
        if has_single_sign_change(mu, nu):
            names[1:1] = ["product", "nit"]
    qs = []
    for name in names:
        if name == "mix":
            left, right = args.mix
            qs.append(q_mix(args.lam, _BUILDERS[left](mu, nu, args.tol), _BUILDERS[right](mu, nu, args.tol)))
        else:
            qs.append(_BUILDERS[name](mu, nu, args.tol))
    table = analysis.crho_extremality(mu, nu, qs, args.rho)
    return 0, table.to_dict(), table.to_csv()


def _cmd_stability(args):
    mu, nu = args.mu, args.nu
    m = mu.mean
    # contract mu toward its mean by 1/n, which keeps the pair in strict convex order
    sched = [(from_atoms(zip(m + (1.0 - 1.0 / n) * (mu.locations - m), mu.weights)), nu) for n in args.n]
    rows = analysis.stability_experiment(mu, nu, sched, tol=args.tol)
    out = [{"n": n, "w1_mu": r.w1_mu, "w1_nu": r.w1_nu, "w1_joint": r.w1_joint} for n, r in zip(args.n, rows)]
    return 0, {"rows": out}, analysis.stability_csv(rows, args.n)


def _cmd_sample(args):
    q = _qparam(args, args.mu, args.nu)
    pts = sample(build_kernel(q, args.mu, args.nu), args.mu, args.n, seed=args.seed)
    return 0, {"x": pts[:, 0].tolist(), "y": pts[:, 1].tolist()}, _rows_csv(["x", "y"], pts.tolist())


def _cmd_discretize(args):
    m = discretize(args.dist, args.params, args.n, args.scheme)
    return 0, m.to_dict(), _rows_csv(["x", "w"], [[float(x), float(w)] for x, w in m.atoms()])


# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcouple", description="Explicit martingale couplings in dimension one.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp):
        sp.add_argument("--tol", type=float, default=None, help="tolerance (default: MCOUPLE_TOL or 1e-9)")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        return sp

    def pair(sp, required=True):
        sp.add_argument("--mu", required=required, help="JSON file with the source measure")
        sp.add_argument("--nu", required=required, help="JSON file with the target measure")

    def coupling(sp):
        sp.add_argument("--coupling", choices=COUPLINGS, default="it")
        sp.add_argument("--q", help="JSON file with a serialized parameter; overrides --coupling")
        sp.add_argument("--lambda", dest="lam", type=float, default=0.5, help="weight of the first mixture component")
        sp.add_argument("--mix", nargs=2, choices=tuple(_BUILDERS), default=("it", "zeta"),
                        metavar=("LEFT", "RIGHT"), help="components of a mixture (default: it zeta)")

    sp = common(sub.add_parser("order-check", help="convex, decreasing and increasing convex order"))
    pair(sp)
    sp.set_defaults(run=_cmd_order_check)

    sp = common(sub.add_parser("build", help="build a coupling from a parameter"))
    pair(sp)
    coupling(sp)
    sp.set_defaults(run=_cmd_build)

    sp = common(sub.add_parser("verify", help="check a joint against its marginals"))
    pair(sp)
    sp.add_argument("--joint", required=True)
    sp.set_defaults(run=_cmd_verify)

    sp = common(sub.add_parser("cost", help="sum of w |x - y|^rho over a joint"))
    pair(sp, required=False)
    coupling(sp)
    sp.add_argument("--joint")
    sp.add_argument("--rho", type=float, nargs="+", default=[1.0])
    sp.set_defaults(run=_cmd_cost)

    sp = common(sub.add_parser("bound", help="L1 cost of a coupling against 2 W1"))
    pair(sp)
    coupling(sp)
    sp.set_defaults(run=_cmd_bound)

    sp = common(sub.add_parser("decompose", help="irreducible components"))
    pair(sp)
    sp.set_defaults(run=_cmd_decompose)

    sp = common(sub.add_parser("supermartingale", help="supermartingale coupling for the decreasing convex order"))
    pair(sp)
    sp.set_defaults(run=_cmd_drift(build_supermartingale))

    sp = common(sub.add_parser("submartingale", help="submartingale coupling for the increasing convex order"))
    pair(sp)
    sp.set_defaults(run=_cmd_drift(build_submartingale))

    sp = common(sub.add_parser("lp-martingale", help="exact optimum over martingale couplings"))
    pair(sp)
    sp.add_argument("--rho", type=float, nargs="+", default=[1.0])
    sp.add_argument("--sense", choices=("min", "max"), default="min")
    sp.add_argument("--mode", choices=lp_oracle.MODES, default="martingale")
    sp.set_defaults(run=_cmd_lp)

    sp = common(sub.add_parser("crho", help="compare kernels through their rho-costs"))
    pair(sp)
    sp.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    sp.add_argument("--kinds", nargs="+", choices=COUPLINGS)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sp.add_argument("--mix", nargs=2, choices=tuple(_BUILDERS), default=("it", "zeta"), metavar=("LEFT", "RIGHT"))
    sp.set_defaults(run=_cmd_crho)

    sp = common(sub.add_parser("stability", help="joint distance under shrinking perturbations of mu"))
    pair(sp)
    sp.add_argument("--n", type=int, nargs="+", default=[5, 10, 50, 200])
    sp.set_defaults(run=_cmd_stability)

    sp = common(sub.add_parser("sample", help="draw pairs from a coupling"))
    pair(sp)
    coupling(sp)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(run=_cmd_sample)

    sp = common(sub.add_parser("discretize", help="equal-mass discretization of a distribution"))
    sp.add_argument("--dist", required=True, choices=sorted(DISTRIBUTIONS))
    sp.add_argument("--params", type=float, nargs="+", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--scheme", default="equal-mass-quantile", choices=("equal-mass-quantile",))
    sp.set_defaults(run=_cmd_discretize)
    return p


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(_dumps({"error": kind, "message": message}))
    return code


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.tol is None:
            args.tol = _default_tol()
        elif not args.tol > 0:
            raise UsageError("--tol must be positive")
        for name in ("mu", "nu"):
            if getattr(args, name, None) is not None:
                setattr(args, name, _measure(getattr(args, name)))
        if getattr(args, "joint", None) is not None:
            args.joint = _joint(args.joint)
        if getattr(args, "n", None) is not None and np.any(np.asarray(args.n) < 1):
            raise UsageError("--n must be positive")
        code, payload, csv = args.run(args)
    except UsageError as exc:
        return _error("UsageError", str(exc), 2)
    except (McoupleError, ValueError) as exc:
        return _error(type(exc).__name__, str(exc), 1)
    text = csv if args.format == "csv" else _dumps(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))
