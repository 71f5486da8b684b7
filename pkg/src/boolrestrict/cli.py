"""Command-line front end.

Every subcommand writes one record per result row. JSON lines (default) hold
``command``, ``version``, ``seed``, ``config``, ``wall_time_s`` and
``result``. CSV columns are ``command, version, seed, wall_time_s``, then the
sorted ``config.*`` keys, then the ``result.*`` keys in result order; nested
values are flattened with dots and lists are JSON-encoded.

Exit codes: 0 success, 1 usage error, 2 violated exact invariant.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .core import (
    PartialPoint,
    SpecError,
    level1_ratio,
    make_family,
    max_influence,
    parse_spec,
    variance_influence_slack,
)
from .core.functions import ArityError
from . import hyperc, measures, process, restriction


class UsageError(Exception):
    pass


class Violation(Exception):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _to_jsonable(v):
    if isinstance(v, dict):
        return {str(k): _to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _to_jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _flatten(prefix: str, v, out: dict):
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), x, out)
    elif isinstance(v, list):
        out[prefix] = json.dumps(v)
    else:
        out[prefix] = v


def emit(records: list[dict], fmt: str, stream) -> None:
    if fmt == "json":
        for r in records:
            stream.write(json.dumps(r) + "\n")
        return
    rows = []
    for r in records:
        row = {"command": r["command"], "version": r["version"], "seed": r["seed"], "wall_time_s": r["wall_time_s"]}
        cfg: dict = {}
        _flatten("config", r["config"], cfg)
        res: dict = {}
        _flatten("result", r["result"], res)
        row.update({k: cfg[k] for k in sorted(cfg)})
        row.update(res)
        rows.append(row)
    cols: list[str] = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    w = csv.DictWriter(stream, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


# ---------------------------------------------------------------------------
# subcommands: each returns (list of result payloads, violation message or None)


def _fn(args):
    return make_family(parse_spec(args.fn))


def _trials(args, default):
    t = args.trials if args.trials is not None else default
    if t < 1:
        raise UsageError("--trials must be >= 1")
    return t


def cmd_analyze(args):
    f = _fn(args)
    res = {"n": f.n, "mean": f.mean, "variance": f.variance,
           "max_influence_flip": max_influence(f, "flip"),
           "max_influence_spectral": max_influence(f, "spectral"),
           "influences_flip": f.influences_flip().tolist(),
           "total_influence_flip": float(np.sum(f.influences_flip())),
           "variance_influence_slack": variance_influence_slack(f),
           "level1_ratio": level1_ratio(f)}
    if f.n <= 24:
        res["monotone"] = bool(f.is_monotone())
        res["kkl"] = measures.kkl_diagnostic(f)
    return [res], None


def cmd_level1(args):
    f = _fn(args)
    zero = PartialPoint.alive_point(f.n)
    g = f.grad_batch(*zero.arrays())[0]
    return [{"n": f.n, "mean": f.mean, "grad_norm_sq": float(g @ g), "level1_ratio": level1_ratio(f)}], None


def cmd_restrict_scan(args):
    f = _fn(args)
    rows = restriction.scan(f, args.rho, _trials(args, 10000), args.seed, mode=args.mode, workers=args.workers)
    return [r.as_dict() for r in rows], None


def _pi_cfg(args, f):
    if args.eps is None or args.delta is None:
        p = process.default_parameters(args.rho, args.p, f)
        eps = p.epsilon if args.eps is None else args.eps
        delta = p.delta if args.delta is None else args.delta
    else:
        eps, delta = args.eps, args.delta
    return process.PiConfig(eps, delta, target=args.target, seed=args.seed)


def cmd_pi_run(args):
    f = _fn(args)
    cfg = _pi_cfg(args, f)
    run = process.run_controlled(f, cfg)
    res = run.to_dict(emit_path=args.emit_path)
    res["ledger"] = process.kl_ledger_audit(run, args.m).as_dict()
    return [res], None


def cmd_pi_stats(args):
    f = _fn(args)
    cfg = _pi_cfg(args, f)
    trials = _trials(args, 10000)
    st = process.stopping_stats(f, cfg, trials, workers=args.workers)
    g = process.target_function(f, cfg)
    b = process.controlled_many(f, cfg, trials, workers=args.workers)
    led = process.ledger_summary(b, cfg.epsilon, cfg.delta, args.m)
    res = {"stopping": st.as_dict(), "ledger": led, "trials": trials, "f0": g.mean}
    bad = led["z_bounded_violations"] + led["entropy_bound_violations"]
    return [res], (f"{bad} ledger entries violate their bounds" if bad else None)


def cmd_kl_audit(args):
    f = _fn(args)
    cfg = _pi_cfg(args, f)
    m = process.default_horizon(f.n, cfg.epsilon) if args.m is None else args.m
    count = _trials(args, 100)
    if not args.exhaustive:
        raise UsageError("kl-audit requires --exhaustive (the exact oracle is the only mode)")
    res = process.kl_audit_random(process.target_function(f, cfg), cfg.epsilon, cfg.delta, m, count, args.seed)
    bad = res["max_chain_rule_gap"] > 1e-9
    return [res], ("chain-rule decomposition differs from the exact KL" if bad else None)


def cmd_bs(args):
    f = _fn(args)
    if args.partition is not None:
        est = measures.bs_partition_estimate(f, args.partition, _trials(args, 10000), args.seed, workers=args.workers)
        return [est.as_dict()], None
    if args.x == "random":
        rng = np.random.default_rng(args.seed)
        k = int(rng.integers(0, 1 << f.n))
    else:
        try:
            k = int(args.x, 16)
        except ValueError:
            raise UsageError(f"--x must be a hex index or 'random', got {args.x!r}") from None
    bs, cert = measures.bs_exact(f, k)
    ok = cert.verify(f)
    return [{"x": format(k, "x"), "bs": bs, "sensitivity": measures.sensitivity(f, k),
             "blocks": cert.block_sets(), "certificate_verified": ok}], (None if ok else "certificate failed")


def cmd_dt(args):
    f = _fn(args)
    return [{"n": f.n, "dt": measures.dt_exact(f)}], None


def cmd_osss(args):
    f = _fn(args)
    r = measures.osss_check(f, args.influence)
    bad = args.influence == "flip" and not r.holds
    return [r.as_dict()], ("OSSS inequality violated" if bad else None)


def cmd_hc_check(args):
    if args.exhaustive:
        fs = hyperc.boolean_functions(args.n)
        label = "exhaustive"
    else:
        fs = hyperc.random_functions(_trials(args, 1000), args.n, args.seed)
        label = "random"
    sw = hyperc.hc_sweep(fs, step=args.grid)
    res = {"mode": label, "n": args.n, "grid": args.grid, **sw.as_dict()}
    bad = sw.hc_violations or sw.gradient_violations
    return [res], ("hypercontractive or gradient bound violated" if bad else None)


def cmd_gradient_moments(args):
    f = _fn(args)
    g = hyperc.MultilinearFunction.from_boolean(f)
    rows = [hyperc.gradient_moment_check(g, t).as_dict() for t in args.t]
    bad = any(not r["holds"] for r in rows)
    return rows, ("gradient bound violated" if bad else None)


def cmd_beta_tail(args):
    f = _fn(args)
    trials = _trials(args, 10000)
    if args.discrete:
        r = hyperc.discrete_beta_tail(f, args.eps, args.theta, trials, args.seed, workers=args.workers)
    else:
        r = hyperc.beta_tail(f, args.t, args.theta, trials, args.seed, workers=args.workers)
    return [r.as_dict()], None


COMMANDS = {
    "analyze": cmd_analyze, "restrict-scan": cmd_restrict_scan, "pi-run": cmd_pi_run,
    "pi-stats": cmd_pi_stats, "kl-audit": cmd_kl_audit, "bs": cmd_bs, "dt": cmd_dt,
    "osss": cmd_osss, "hc-check": cmd_hc_check, "prop51": cmd_gradient_moments,
    "beta-tail": cmd_beta_tail, "level1": cmd_level1,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--workers", type=int, default=1)

    p = _Parser(prog="boolrestrict", description="Boolean functions under random restrictions.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, fn=True):
        s = sub.add_parser(name, help=help_, parents=[common])
        if fn:
            s.add_argument("--fn", required=True, help="function spec, e.g. tribes:w=4 or maj:n=25")
        return s

    add("analyze", "mean, variance, influences, level-1 ratio")
    add("level1", "level-1 ratio |grad f(0)|^2 / (a^2 ln(e/a))")
    s = add("restrict-scan", "survival and variance of f under random restrictions")
    s.add_argument("--rho", type=_floats, required=True, help="alive fractions, comma separated")
    s.add_argument("--mode", choices=["fixed", "indep"], default="fixed")

    for name, help_ in (("pi-run", "one run of the controlled process"),
                        ("pi-stats", "stopping-time and ledger statistics"),
                        ("kl-audit", "exact KL oracle against its chain-rule decomposition")):
        s = add(name, help_)
        s.add_argument("--eps", type=float, default=None)
        s.add_argument("--delta", type=float, default=None)
        s.add_argument("--rho", type=float, default=1.0, help="alive fraction for default parameters")
        s.add_argument("--p", type=float, default=0.5, help="failure probability for default parameters")
        s.add_argument("--target", choices=["f", "complement"], default="f")
        s.add_argument("--m", type=int, default=None, help="ledger horizon (default (1-eps)n)")
        if name == "pi-run":
            s.add_argument("--emit-path", action="store_true")
        if name == "kl-audit":
            s.add_argument("--exhaustive", action="store_true")

    s = add("bs", "block sensitivity")
    s.add_argument("--x", default="random", help="hex index of the point, or 'random'")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--partition", type=int, default=None, metavar="M")
    add("dt", "exact decision-tree depth")
    s = add("osss", "mINF * DT against Var")
    s.add_argument("--influence", choices=["flip", "spectral"], default="flip")

    s = add("hc-check", "hypercontractive inequality on exact oracles", fn=False)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--grid", type=float, default=0.1)
    s.add_argument("--exhaustive", action="store_true")
    s = add("prop51", "gradient moment bounds along the reveal process")
    s.add_argument("--t", type=_floats, default=[0.0, 0.25, 0.5, 0.9])
    s = add("beta-tail", "tail of the largest derivative along the reveal process")
    s.add_argument("--t", type=float, default=0.5)
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--discrete", action="store_true")
    s.add_argument("--eps", type=float, default=0.5)
    return p


def _config(args) -> dict:
    skip = {"command", "out", "format", "workers", "seed"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    violation = None
    try:
        rows, violation = COMMANDS[args.command](args)
    except (UsageError, SpecError, ArityError, process.PreconditionError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except process.InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - t0
    records = [{"command": args.command, "version": __version__, "seed": args.seed,
                "config": _to_jsonable(_config(args)), "wall_time_s": wall,
                "result": _to_jsonable(r)} for r in rows]
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                emit(records, args.format, fh)
        else:
            emit(records, args.format, stdout)
    except OSError as e:
        print(f"error: cannot write output: {e}", file=sys.stderr)
        return 1
    if violation:
        print(f"invariant violated: {violation}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
