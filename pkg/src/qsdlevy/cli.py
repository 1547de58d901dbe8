"""Command-line front end.

Exit codes: 0 success, 1 invalid input (every violated constraint is listed),
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

from . import __version__
from .errors import NumericalError, ValidationError
from .hedge import HEDGE_CSV_HEADER, HedgeSpec, hedge_sweep
from .mc import MC_CSV_HEADER, Estimate, McConfig, PayoffDescriptor, duality_test, martingale_test, mc_csv_row
from .models import FAMILIES, QsdBase, QsdSpec, qsd_to_native, triplet_of
from .numerics import RNG_DESCRIPTION
from .qsd import (
    DualityReport,
    alpha_of_lambda_closed,
    alpha_of_lambda_root,
    calibrate,
    full_report,
    lambda_of_alpha,
    lambda_of_alpha_quadrature,
    meixner_alpha0_lambda,
)

DEFAULT_SEED = 42
FORWARD_REL_TOL = 1e-5
BASE_KEYS = ("a", "b", "d", "C", "beta", "Y", "sigma2")


def fmt(x):
    # + 0.0 turns -0.0 into 0.0
    return format(float(x) + 0.0, ".12g")


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    rng: str = RNG_DESCRIPTION

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def default_seed():
    raw = os.environ.get("QSD_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"QSD_SEED must be an integer, got {raw!r}") from None


def _add_base(p):
    p.add_argument("--family", required=True, type=str.lower, choices=FAMILIES)
    p.add_argument("--base-params", default="", help='flat form, e.g. "a=1 d=1"')
    for k in BASE_KEYS:
        p.add_argument(f"--{k}", type=float, default=None)


def _add_mc(p, paths=1_000_000):
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None, help="default: $QSD_SEED or 42")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--out", default=None, help="write CSV here (manifest goes to <out>.manifest.json)")


def _add_spec(p, need_lambda=False):
    _add_base(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=need_lambda,
                   default=None, help="carrying cost (default: calibrated from alpha)")


def build_parser():
    ap = _Parser(prog="qsdlevy", description="Quasi self-dual exponential Levy models")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("forward", help="carrying cost lambda(alpha), closed form and quadrature")
    _add_base(p)
    p.add_argument("--alpha", type=float, required=True)

    p = sub.add_parser("invert", help="orders alpha(lambda) with branches and residuals")
    _add_base(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--method", choices=("auto", "closed", "root"), default="auto")
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("check", help="full duality report")
    _add_spec(p)
    p.add_argument("--m", type=float, default=None, help="drift of X (default -lambda)")
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("mc-duality", help="Monte Carlo test of the duality identity")
    _add_spec(p)
    p.add_argument("--payoff", default="call", choices=("call", "put", "digital", "identity", "constant"))
    p.add_argument("--strike", type=float, default=None)
    _add_mc(p)

    p = sub.add_parser("mc-martingale", help="Monte Carlo estimates of E[exp(X_T)] and E[(S_T/S_0)^alpha]")
    _add_spec(p)
    _add_mc(p)

    p = sub.add_parser("hedge", help="knock-in vs semi-static hedge experiment")
    _add_spec(p)
    p.add_argument("--barrier", type=float, required=True, help="H (absolute level)")
    p.add_argument("--S0", type=float, default=1.0)
    p.add_argument("--payoff", default="call", choices=("call", "put", "digital", "identity", "constant"))
    p.add_argument("--strike", type=float, default=None)
    p.add_argument("--monitor", default=None,
                   help="comma-separated monitoring grids to report, e.g. 32,128,512 (default: --steps)")
    _add_mc(p, paths=100_000)

    p = sub.add_parser("sweep", help="CSV of (alpha, lambda, residuals) over an alpha grid")
    _add_base(p)
    p.add_argument("--alpha-grid", required=True, help="lo:hi:n")
    p.add_argument("--out", default=None)

    p = sub.add_parser("meixner-alpha0", help="carrying cost of the symmetric Meixner model")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    return ap


def _base_from(args):
    vals = {}
    for tok in args.base_params.split():
        if "=" not in tok:
            raise ValidationError(f"malformed --base-params token {tok!r}; expected key=value")
        k, v = tok.split("=", 1)
        try:
            vals[k] = float(v)
        except ValueError:
            raise ValidationError(f"--base-params {k}: not a number: {v!r}") from None
    for k in BASE_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    return QsdBase(args.family, vals)


def _spec_from(args, m=None):
    base = _base_from(args)
    if args.lam is None:
        spec = calibrate(base, args.alpha)
        return spec if m is None else QsdSpec(base, spec.alpha, spec.lam, m)
    return QsdSpec(base, args.alpha, args.lam, m)


def _params_dict(args):
    return {k: v for k, v in sorted(vars(args).items()) if v is not None and k not in ("out", "command")}


def _emit(args, header, rows, seed):
    """CSV with header; manifest alongside (--out) or as leading comment lines (stdout)."""
    manifest = RunManifest(args.command, _params_dict(args), seed)
    body = "\n".join([header, *rows]) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(manifest.to_json() + "\n")
        print(f"wrote {args.out}")
    else:
        for line in manifest.to_json().splitlines():
            print(f"# {line}")
        sys.stdout.write(body)


def _cfg(args, seed, steps=None):
    return McConfig(n_paths=args.paths, n_steps=steps or args.steps, horizon_T=args.horizon,
                    seed=seed, antithetic=args.antithetic)


def cmd_forward(args):
    base = _base_from(args)
    lam = lambda_of_alpha(base, args.alpha)
    spec = QsdSpec(base, args.alpha, lam)
    lam_q = lambda_of_alpha_quadrature(triplet_of(qsd_to_native(spec)), args.alpha)
    diff = lam - lam_q
    print(f"lambda={fmt(lam)}")
    print(f"lambda_quadrature={fmt(lam_q)}")
    print(f"difference={fmt(diff)}")
    if abs(diff) > FORWARD_REL_TOL * max(abs(lam), 1e-300) and abs(diff) > 1e-9:
        print(f"error: closed form and quadrature disagree beyond {FORWARD_REL_TOL:g} relative", file=sys.stderr)
        return 2
    return 0


def cmd_invert(args):
    base = _base_from(args)
    method = args.method
    if method == "auto":
        method = "root" if base.family == "cgmy" else "closed"
    res = alpha_of_lambda_closed(base, args.lam) if method == "closed" else alpha_of_lambda_root(base, args.lam)
    if args.csv:
        print(res.csv_header())
        print("\n".join(res.csv_rows()))
    else:
        print(res.text())
    return 0


def cmd_check(args):
    spec = _spec_from(args, args.m)
    rep = full_report(spec)
    if args.csv:
        print(DualityReport.CSV_HEADER)
        print(rep.csv_row())
    else:
        print(rep.text())
    return 0


def cmd_mc_duality(args):
    seed = args.seed if args.seed is not None else default_seed()
    spec = _spec_from(args)
    f = PayoffDescriptor(args.payoff, args.strike)
    cfg = _cfg(args, seed)
    lhs, rhs, z = duality_test(spec, f, cfg)
    _emit(args, MC_CSV_HEADER, [mc_csv_row(f"duality_{f}", spec, lhs, rhs, z, cfg)], seed)
    return 0


def cmd_mc_martingale(args):
    seed = args.seed if args.seed is not None else default_seed()
    spec = _spec_from(args)
    cfg = _cfg(args, seed)
    ex, ez = martingale_test(spec, cfg)
    one = Estimate(1.0, 0.0, cfg.n_paths)
    rows = [mc_csv_row("martingale_exp_X", spec, ex, one, ex.z(1.0), cfg),
            mc_csv_row("martingale_power_alpha", spec, ez, one, ez.z(1.0), cfg)]
    _emit(args, MC_CSV_HEADER, rows, seed)
    return 0


def cmd_hedge(args):
    seed = args.seed if args.seed is not None else default_seed()
    model = _spec_from(args)
    if args.monitor:
        try:
            grids = tuple(int(s) for s in args.monitor.split(","))
        except ValueError:
            raise ValidationError(f"--monitor must be comma-separated integers, got {args.monitor!r}") from None
    else:
        grids = (args.steps,)
    hs = HedgeSpec(args.S0, args.barrier, PayoffDescriptor(args.payoff, args.strike), model.alpha, max(grids))
    cfg = _cfg(args, seed, steps=max(grids))
    results, _ = hedge_sweep(hs, model, cfg, steps_list=grids)
    _emit(args, HEDGE_CSV_HEADER, [results[g].csv_row(hs, model) for g in grids], seed)
    return 0


def _parse_grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"--alpha-grid must be lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"--alpha-grid must be lo:hi:n with numbers, got {text!r}") from None
    if n < 1:
        raise ValidationError("--alpha-grid needs n >= 1")
    return [lo] if n == 1 else [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def cmd_sweep(args):
    base = _base_from(args)
    header = "alpha,lambda,max_residual,measure_symmetry,drift_residual,lambda_residual,kappa_x1,kappa_z1"
    rows = []
    for al in _parse_grid(args.alpha_grid):
        try:
            spec = calibrate(base, al)
        except ValidationError as exc:
            print(f"skip alpha={fmt(al)}: {exc}", file=sys.stderr)
            continue
        rep = full_report(spec)
        vals = [al, spec.lam, rep.max_residual(), rep.measure_symmetry_error, rep.drift_condition_residual,
                rep.lambda_alpha_residual, *rep.martingale_residuals]
        rows.append(",".join(fmt(v) for v in vals))
    _emit(args, header, rows, None)
    return 0


def cmd_meixner_alpha0(args):
    print(f"lambda={fmt(meixner_alpha0_lambda(args.a, args.d))}")
    return 0


COMMANDS = {
    "forward": cmd_forward,
    "invert": cmd_invert,
    "check": cmd_check,
    "mc-duality": cmd_mc_duality,
    "mc-martingale": cmd_mc_martingale,
    "hedge": cmd_hedge,
    "sweep": cmd_sweep,
    "meixner-alpha0": cmd_meixner_alpha0,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print("error: invalid input", file=sys.stderr)
        for msg in exc.failures:
            print(f"  - {msg}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
