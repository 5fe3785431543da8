"""Command-line front end.

Exit codes: 0 success, 1 validation error (bad flags, out-of-budget sizes,
runtime budgets), 2 numerical-instability error (independent evaluation
routes disagree).  Results are written atomically (temp file + rename) and
contain no timestamps, so a fixed configuration and master seed reproduce
byte-identical output at any thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import NumericalInstabilityError, PtlError, ValidationError
from .parallel import default_threads

_FORMATS = ("json", "csv")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on bad arguments."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    """17-significant-digit float text (round-trip exact)."""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _csv_lines(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ValidationError("config file must be a flat JSON object of key-value pairs")
    return data


def _merge_config(args: argparse.Namespace, config: dict, parser: _Parser) -> None:
    """Fill unset (None) options from the config file: CLI > config > defaults."""
    known = set(vars(args))
    for key, value in config.items():
        attr = key.replace("-", "_")
        if attr not in known:
            raise ValidationError(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)


def _require(args: argparse.Namespace, names: list[str]) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(
            "missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing)
        )


def _setdefaults(args: argparse.Namespace, **defaults) -> None:
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _add_common(p: _Parser, *, seeded: bool) -> None:
    p.add_argument("--kappa", type=float, default=None, help="margin (default 1.0)")
    p.add_argument("--format", choices=_FORMATS, default=None, help="output format")
    p.add_argument("--output", default=None, help="output file (default stdout)")
    p.add_argument("--config", default=None, help="flat JSON key-value config file")
    if seeded:
        p.add_argument("--seed", type=int, default=None, help="64-bit master seed")
        p.add_argument(
            "--threads", type=int, default=None, help="worker processes (default PTL_THREADS or CPU count)"
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="ptl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ptl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", parents=[], help="critical constants for one margin")
    _add_common(p, seeded=False)

    p = sub.add_parser("q-table", help="pair probability and rate function on a gamma grid")
    _add_common(p, seeded=False)
    p.add_argument("--gamma-min", type=float, default=None)
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--points", type=int, default=None)

    p = sub.add_parser("simulate", help="sample thresholds; JSON lines {seed, tau, trace}")
    _add_common(p, seeded=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--max-rows", type=int, default=None, help="hard row cap per trial")
    p.add_argument("--no-trace", action="store_true", help="record only the threshold")

    p = sub.add_parser("moments", help="first/second moment formulas vs Monte Carlo")
    _add_common(p, seeded=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--mc-trials", type=int, default=None, help="0 disables the MC columns")

    p = sub.add_parser("cycles", help="cycle-count moments under a planted row law")
    _add_common(p, seeded=True)
    p.add_argument("--kind", choices=("null", "single", "pair"), default=None)
    p.add_argument("--t", type=int, default=None, help="pair overlap (kind=pair only)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="cycle order (<= 3)")
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("limit-cdf", help="limiting threshold CDF on a k grid")
    _add_common(p, seeded=False)
    p.add_argument("--k-min", type=float, default=None)
    p.add_argument("--k-max", type=float, default=None)
    p.add_argument("--step", type=float, default=None)

    p = sub.add_parser("compare", help="empirical threshold law vs the limit law")
    _add_common(p, seeded=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("pair-structure", help="forbidden-band pair mass vs its reference bound")
    _add_common(p, seeded=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)

    return parser


def _emit(payload, args, *, csv_header=None, csv_rows=None, json_lines=None) -> None:
    fmt = args.format or "json"
    if fmt == "json":
        if json_lines is not None:
            text = "\n".join(json.dumps(obj, sort_keys=False) for obj in json_lines) + "\n"
        else:
            text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    else:
        if csv_header is None:
            raise ValidationError(f"command {args.command!r} has no CSV form")
        text = _csv_lines(csv_header, csv_rows)
    _write_output(text, args.output)


def _cmd_constants(args) -> None:
    from .special_fn import constants

    _setdefaults(args, kappa=1.0)
    pack = constants(args.kappa).as_dict()
    fields = list(pack)
    _emit(pack, args, csv_header=fields, csv_rows=[[pack[f] for f in fields]])


def _cmd_q_table(args) -> None:
    from .special_fn import pair_prob, rate_function

    _setdefaults(args, kappa=1.0, gamma_min=0.0, gamma_max=1.0, points=21)
    if args.points < 2:
        raise ValidationError("--points must be >= 2")
    grid = np.linspace(args.gamma_min, args.gamma_max, args.points)
    rows = [[float(g), pair_prob(float(g), args.kappa), rate_function(float(g), args.kappa)] for g in grid]
    payload = [{"gamma": r[0], "pair_prob": r[1], "rate_function": r[2]} for r in rows]
    _emit(payload, args, csv_header=["gamma", "pair_prob", "rate_function"], csv_rows=rows)


def _cmd_simulate(args) -> None:
    from .simulator import ModelParams, sample_thresholds

    _setdefaults(args, kappa=1.0, trials=1, seed=0)
    _require(args, ["n"])
    params = ModelParams(kappa=args.kappa, n=args.n)
    records = sample_thresholds(
        params,
        args.trials,
        args.seed,
        max_rows=args.max_rows,
        record_trace=not args.no_trace,
        threads=args.threads,
    )
    rows = [[i, r.seed, r.tau] for i, r in enumerate(records)]
    _emit(
        None,
        args,
        csv_header=["trial", "seed", "tau"],
        csv_rows=rows,
        json_lines=[r.to_json_dict() for r in records],
    )


def _cmd_moments(args) -> None:
    from .moments import first_moment, pair_survival, second_moment, survivor_moments_mc

    _setdefaults(args, kappa=1.0, mc_trials=0, seed=0)
    _require(args, ["n", "m"])
    n, m = args.n, args.m
    first = first_moment(n, m, args.kappa)
    second = second_moment(n, m, args.kappa)
    mc_mean = mc_second = se_mean = se_second = None
    if args.mc_trials:
        mc = survivor_moments_mc(n, m, args.kappa, args.mc_trials, args.seed, args.threads)
        mc_mean, mc_second = mc.mean, mc.second
        se_mean, se_second = mc.se_mean, mc.se_second
    rows = [
        [n, m, "", "first_moment", first, mc_mean, se_mean],
        [n, m, "", "second_moment", second, mc_second, se_second],
    ]
    for t in range(-n, n + 1, 2):
        rows.append([n, m, t, "pair_survival", pair_survival(n, t, m, args.kappa), None, None])
    payload = [
        {
            "n": r[0],
            "m": r[1],
            "t": r[2] if r[2] != "" else None,
            "quantity": r[3],
            "formula_value": r[4],
            "mc_value": r[5],
            "se": r[6],
        }
        for r in rows
    ]
    csv_rows = [[("" if v is None else v) for v in r] for r in rows]
    _emit(payload, args, csv_header=["n", "m", "t", "quantity", "formula_value", "mc_value", "se"], csv_rows=csv_rows)


def _cmd_cycles(args) -> None:
    from .cycle_stats import clt_diagnostic, mc_cycle_moments
    from .simulator import PlantedKind

    _setdefaults(args, kappa=1.0, seed=0, trials=200, k=2)
    _require(args, ["kind", "n", "m"])
    kind = PlantedKind.pair(args.t) if args.kind == "pair" else PlantedKind(args.kind)
    mc = mc_cycle_moments(
        kind, args.n, args.m, args.k, args.trials, args.seed, kappa=args.kappa, threads=args.threads
    )
    diag = clt_diagnostic(
        kind, args.n, args.m, args.k, args.trials, args.seed, kappa=args.kappa, threads=args.threads
    )
    payload = {
        "kind": args.kind if args.kind != "pair" else f"pair({args.t})",
        "n": args.n,
        "m": args.m,
        "k": args.k,
        "mean": mc.mean,
        "var": mc.variance,
        "se": mc.se_mean,
        "ks": [float(v) for v in diag.ks],
    }
    header = ["kind", "n", "m", "k", "mean", "var", "se"] + [f"ks_{i + 1}" for i in range(args.k)]
    row = [payload["kind"], args.n, args.m, args.k, mc.mean, mc.variance, mc.se_mean] + payload["ks"]
    _emit(payload, args, csv_header=header, csv_rows=[row])


def _cmd_limit_cdf(args) -> None:
    from .limit_law import LimitLaw, limit_cdf
    from .special_fn import constants

    _setdefaults(args, kappa=1.0, k_min=-20.0, k_max=20.0, step=1.0)
    if args.step <= 0:
        raise ValidationError("--step must be positive")
    law = LimitLaw.from_constants(constants(args.kappa))
    ks = np.arange(args.k_min, args.k_max + 0.5 * args.step, args.step)
    rows = [[float(k), limit_cdf(law, float(k))] for k in ks]
    payload = [{"k": r[0], "cdf": r[1]} for r in rows]
    _emit(payload, args, csv_header=["k", "cdf"], csv_rows=rows)


def _cmd_compare(args) -> None:
    from .limit_law import (
        LimitLaw,
        empirical_cdf,
        ks_distance,
        law_median,
        tail_slope,
    )
    from .simulator import ModelParams, sample_thresholds
    from .special_fn import constants

    _setdefaults(args, kappa=1.0, trials=1000, seed=0)
    _require(args, ["n"])
    pack = constants(args.kappa)
    law = LimitLaw.from_constants(pack)
    params = ModelParams(kappa=args.kappa, n=args.n)
    records = sample_thresholds(
        params, args.trials, args.seed, record_trace=False, threads=args.threads
    )
    shift = pack.alpha_c * args.n
    emp = empirical_cdf(records, shift)
    payload = {
        "n": args.n,
        "kappa": args.kappa,
        "T": args.trials,
        "ks": ks_distance(emp, law),
        "median_emp": emp.median(),
        "median_law": law_median(law),
        "tail_slope": tail_slope(law),
    }
    fields = list(payload)
    _emit(payload, args, csv_header=fields, csv_rows=[[payload[f] for f in fields]])


def _cmd_pair_structure(args) -> None:
    from .moments import pair_structure_sum

    _setdefaults(args, kappa=1.0)
    _require(args, ["n", "m"])
    res = pair_structure_sum(args.n, args.m, args.kappa)
    payload = {
        "n": args.n,
        "m": args.m,
        "kappa": args.kappa,
        "value": res.value,
        "reference_bound": res.reference_bound,
        "band_lo": res.band_lo,
        "band_hi": res.band_hi,
        "empty": res.empty,
    }
    fields = list(payload)
    _emit(payload, args, csv_header=fields, csv_rows=[[payload[f] for f in fields]])


_COMMANDS = {
    "constants": _cmd_constants,
    "q-table": _cmd_q_table,
    "simulate": _cmd_simulate,
    "moments": _cmd_moments,
    "cycles": _cmd_cycles,
    "limit-cdf": _cmd_limit_cdf,
    "compare": _cmd_compare,
    "pair-structure": _cmd_pair_structure,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, _load_config(args.config), parser)
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = default_threads()
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise ValidationError("--trials must be >= 1")
        _COMMANDS[args.command](args)
    except NumericalInstabilityError as exc:
        print(f"ptl: numerical instability: {exc}", file=sys.stderr)
        return 2
    except (PtlError, ValueError) as exc:
        print(f"ptl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
