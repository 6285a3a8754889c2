"""Command line front end.

Subcommands: estimate (seeded replicates), factory (output coins), verify
(oracle reports), sweep (grid of estimate cells), zeta (normalizer check).
Settings resolve as flags > config file > defaults; outputs open with the
resolved settings so a run can be reproduced from its own artifact, and a
fixed setting always produces byte-identical output regardless of worker
count.  Exit codes: 0 success, 1 failed check or cap abort, 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .approx import (
    load_coefficient_table,
    min_support_index,
    preset,
    PRESET_LABELS,
    scheme_from_function,
    validate_consistency,
)
from .errors import FactoryError, TruncationCapError
from .estimator import EstimatorConfig, run_factory, run_replicates
from .oracle import (
    truncated_expectation_bracket,
    verify_conditional_row_means,
    verify_estimate_conditional_mean,
    verify_increment_signs,
    verify_mixing_weights,
    verify_start_bound,
)
from .truncation import (
    DEFAULT_CAP,
    DEFAULT_LAMBDA,
    DEFAULT_ZETA_TOL,
    TruncationLaw,
    hurwitz_zeta,
    hurwitz_zeta_bracket,
)

_CONFIG_KEYS = {
    "preset": str,
    "table": str,
    "x": float,
    "reps": int,
    "flips": int,
    "seed": int,
    "lam": float,
    "start": int,
    "cap": int,
    "zeta_tol": float,
    "variant": str,
    "on_cap": str,
    "format": str,
    "workers": int,
    "xs": str,
    "lams": str,
    "ell_max": int,
}


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FactoryError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _CONFIG_KEYS:
                raise FactoryError(f"{path}:{lineno}: unknown setting {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](val)
            except ValueError as exc:
                raise FactoryError(f"{path}:{lineno}: bad value for {key!r}") from exc
    return values


def _resolved(args, defaults: dict) -> dict:
    """flags > config file > defaults, for the keys in `defaults`."""
    fromfile = _load_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, fallback in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in fromfile:
            out[key] = fromfile[key]
        else:
            out[key] = fallback
    return out


def _build_scheme(settings: dict):
    if settings.get("table"):
        return load_coefficient_table(settings["table"])
    return scheme_from_function(preset(settings["preset"]))


def _build_config(settings: dict) -> EstimatorConfig:
    scheme = _build_scheme(settings)
    start = settings["start"]
    if start is None:
        start = scheme.min_start_index()
        settings["start"] = start
    cap = settings["cap"]
    if scheme.n_max is not None:
        cap = min(cap, scheme.n_max)
        settings["cap"] = cap
    law = TruncationLaw(
        lam=settings["lam"], k=start, cap=cap, zeta_tol=settings["zeta_tol"]
    )
    return EstimatorConfig(scheme=scheme, law=law, variant=settings["variant"])


def _echo_settings(settings: dict) -> dict:
    # execution-only knobs stay out so worker count cannot alter the bytes
    drop = {"workers"}
    return {k: v for k, v in sorted(settings.items()) if k not in drop and v is not None}


def _jdump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def _write_records(out, settings, records, summary, fmt, factory: bool):
    echo = _echo_settings(settings)
    names = ["rep", "L", "S", "psi"] + (["bit"] if factory else [])
    if fmt == "jsonl":
        out.write(_jdump({"record": "settings", **echo}) + "\n")
        for row in records:
            payload = {"record": "draw"}
            for name in names:
                val = row[name]
                payload[name] = float(val) if name == "psi" else int(val)
            out.write(_jdump(payload) + "\n")
        out.write(_jdump({"record": "summary", **summary}) + "\n")
    else:
        for key, val in echo.items():
            out.write(f"# {key} = {val}\n")
        out.write(",".join(names) + "\n")
        for row in records:
            cells = []
            for name in names:
                cells.append(repr(float(row[name])) if name == "psi" else str(int(row[name])))
            out.write(",".join(cells) + "\n")
        keys = ["mean", "se", "min_psi", "max_psi", "psi_above_one", "cap_hits"]
        if factory:
            keys += ["bit_mean", "bit_se"]
        for key in keys:
            out.write(f"# {key} = {summary[key]}\n")
    out.flush()


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="ascii", newline="\n"), True
    return sys.stdout, False


# ---------------------------------------------------------------------------
# subcommands


def cmd_estimate(args) -> int:
    settings = _resolved(
        args,
        {
            "preset": "quad",
            "table": None,
            "x": 0.5,
            "reps": 1000,
            "seed": 0,
            "lam": DEFAULT_LAMBDA,
            "start": None,
            "cap": DEFAULT_CAP,
            "zeta_tol": DEFAULT_ZETA_TOL,
            "variant": "lower",
            "on_cap": "raise",
            "format": "jsonl",
            "workers": 1,
        },
    )
    config = _build_config(settings)
    records, summary = run_replicates(
        config,
        x=settings["x"],
        reps=settings["reps"],
        seed=settings["seed"],
        workers=settings["workers"],
        on_cap=settings["on_cap"],
    )
    del summary["config"]  # the settings echo already pins the run
    out, close = _open_out(args)
    try:
        _write_records(out, settings, records, summary, settings["format"], False)
    finally:
        if close:
            out.close()
    return 0


def cmd_factory(args) -> int:
    settings = _resolved(
        args,
        {
            "preset": "lin",
            "table": None,
            "x": 0.5,
            "flips": 1000,
            "seed": 0,
            "lam": DEFAULT_LAMBDA,
            "start": None,
            "cap": DEFAULT_CAP,
            "zeta_tol": DEFAULT_ZETA_TOL,
            "variant": "lower",
            "on_cap": "raise",
            "format": "jsonl",
            "workers": 1,
        },
    )
    config = _build_config(settings)
    records, summary = run_factory(
        config,
        x=settings["x"],
        flips=settings["flips"],
        seed=settings["seed"],
        workers=settings["workers"],
        on_cap=settings["on_cap"],
    )
    del summary["config"]
    out, close = _open_out(args)
    try:
        _write_records(out, settings, records, summary, settings["format"], True)
    finally:
        if close:
            out.close()
    return 0


def _parse_fraction_list(text: str) -> list:
    return [Fraction(tok) for tok in text.split(",") if tok.strip()]


def cmd_verify(args) -> int:
    settings = _resolved(
        args,
        {
            "preset": "quad",
            "table": None,
            "start": None,
            "xs": "0,1/4,1/2,3/4,1",
            "lam": DEFAULT_LAMBDA,
        },
    )
    n_max = args.n_max
    reports = []
    if settings.get("table"):
        scheme = load_coefficient_table(settings["table"], validate=False)
        hi = scheme.n_max if n_max is None else min(n_max, scheme.n_max)
        reports.append(validate_consistency(scheme, n_max=hi))
    else:
        scheme = scheme_from_function(preset(settings["preset"]))
        hi = n_max if n_max is not None else max(scheme.valid_from + 4, 8)
        reports.append(validate_consistency(scheme, n_max=hi))
        reports.append(verify_mixing_weights(min(hi, 10), enum_max=args.enum_max))
        if scheme.has_exact:
            xs = _parse_fraction_list(settings["xs"])
            start = settings["start"]
            if start is None:
                start = scheme.min_start_index()
            n_signs = max(hi, start + 3)
            reports.append(verify_conditional_row_means(scheme, min(hi, 9), xs))
            reports.append(verify_increment_signs(scheme, start, n_signs))
            if scheme.curvature:
                reports.append(verify_start_bound(scheme, start, n_signs))
                law = TruncationLaw(lam=settings["lam"], k=start, cap=DEFAULT_CAP)
                config = EstimatorConfig(scheme=scheme, law=law)
                budgets = list(range(start, start + 3))
                reports.append(
                    verify_estimate_conditional_mean(config, budgets, xs[:3])
                )
    all_pass = all(r.passed for r in reports)
    if args.json:
        for r in reports:
            print(r.to_json())
    else:
        for r in reports:
            print(f"== {r.subject} ==")
            for line in r.summary_lines():
                print(line)
        print("verify:", "all checks passed" if all_pass else "CHECKS FAILED")
    return 0 if all_pass else 1


def cmd_sweep(args) -> int:
    settings = _resolved(
        args,
        {
            "preset": "quad",
            "table": None,
            "xs": "0.25,0.5,0.75",
            "lams": "1.5,2.0",
            "reps": 1000,
            "seed": 0,
            "start": None,
            "cap": DEFAULT_CAP,
            "zeta_tol": DEFAULT_ZETA_TOL,
            "variant": "lower",
            "on_cap": "count",
            "format": "jsonl",
            "workers": 1,
        },
    )
    xs = [float(Fraction(t)) for t in settings["xs"].split(",") if t.strip()]
    lams = [float(t) for t in settings["lams"].split(",") if t.strip()]
    out, close = _open_out(args)
    echo = _echo_settings(settings)
    cells = []
    for il, lam in enumerate(lams):
        cell_settings = dict(settings, lam=lam, start=settings["start"])
        config = _build_config(cell_settings)
        for ix, x in enumerate(xs):
            # one child seed per cell, derived so cell order cannot matter
            cell_seed = int(
                np.random.SeedSequence((settings["seed"], ix, il)).generate_state(1)[0]
            )
            _, summary = run_replicates(
                config,
                x=x,
                reps=settings["reps"],
                seed=cell_seed,
                workers=settings["workers"],
                on_cap=settings["on_cap"],
            )
            cells.append(
                {
                    "x": x,
                    "lam": lam,
                    "start": cell_settings["start"],
                    "cell_seed": cell_seed,
                    "mean": summary["mean"],
                    "se": summary["se"],
                    "min_psi": summary["min_psi"],
                    "max_psi": summary["max_psi"],
                    "psi_above_one": summary["psi_above_one"],
                    "cap_hits": summary["cap_hits"],
                }
            )
    try:
        if settings["format"] == "jsonl":
            out.write(_jdump({"record": "settings", **echo}) + "\n")
            for cell in cells:
                out.write(_jdump({"record": "cell", **cell}) + "\n")
        else:
            for key, val in echo.items():
                out.write(f"# {key} = {val}\n")
            names = list(cells[0].keys())
            out.write(",".join(names) + "\n")
            for cell in cells:
                out.write(",".join(repr(cell[n]) if isinstance(cell[n], float) else str(cell[n]) for n in names) + "\n")
        out.flush()
    finally:
        if close:
            out.close()
    return 0


def cmd_bracket(args) -> int:
    settings = _resolved(
        args,
        {
            "preset": "quad",
            "table": None,
            "x": 0.5,
            "lam": DEFAULT_LAMBDA,
            "start": None,
            "cap": DEFAULT_CAP,
            "zeta_tol": DEFAULT_ZETA_TOL,
            "ell_max": 50,
        },
    )
    if settings.get("table"):
        raise FactoryError(
            "the bracket needs a curvature-backed preset; table schemes have "
            "no summable tail envelope"
        )
    scheme = scheme_from_function(preset(settings["preset"]))
    start = settings["start"]
    if start is None:
        start = scheme.min_start_index()
    law = TruncationLaw(
        lam=settings["lam"], k=start, cap=settings["cap"], zeta_tol=settings["zeta_tol"]
    )
    config = EstimatorConfig(scheme=scheme, law=law)
    x = Fraction(args.x_exact) if args.x_exact else Fraction(settings["x"]).limit_denominator(10**6)
    res = truncated_expectation_bracket(config, x, settings["ell_max"])
    target = scheme.source.evaluate(float(x))
    print(
        _jdump(
            {
                "x": str(x),
                "lam": settings["lam"],
                "start": start,
                "ell_max": res.ell_max,
                "lo": res.lo,
                "hi": res.hi,
                "width": res.width,
                "tail_mass": res.tail_mass,
                "target": target,
                "contains_target": res.contains(target),
            }
        )
    )
    return 0 if res.contains(target) else 1


def cmd_zeta(args) -> int:
    lam = args.lam if args.lam is not None else DEFAULT_LAMBDA
    k = args.start if args.start is not None else 1
    tol = args.zeta_tol if args.zeta_tol is not None else DEFAULT_ZETA_TOL
    lo, hi = hurwitz_zeta_bracket(lam, k, tol)
    est = hurwitz_zeta(lam, k, tol)
    print(
        _jdump(
            {"lam": lam, "start": k, "value": est, "lo": lo, "hi": hi, "width": hi - lo}
        )
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, keys):
    if "preset" in keys:
        p.add_argument("--preset", choices=PRESET_LABELS, help="built-in target")
        p.add_argument("--table", help="coefficient table file instead of a preset")
    if "x" in keys:
        p.add_argument("--x", type=float, help="coin bias in [0, 1]")
    if "seed" in keys:
        p.add_argument("--seed", type=int, help="root seed")
    if "law" in keys:
        p.add_argument("--lam", type=float, help="truncation law exponent (> 1)")
        p.add_argument("--start", type=int, help="start index (default: smallest admissible)")
        p.add_argument("--cap", type=int, help="hard budget cap")
        p.add_argument("--zeta-tol", dest="zeta_tol", type=float, help="normalizer tolerance")
    if "run" in keys:
        p.add_argument("--variant", choices=("lower", "upper"), help="estimator side")
        p.add_argument("--on-cap", dest="on_cap", choices=("raise", "count"),
                       help="cap hits abort the run or are counted")
        p.add_argument("--workers", type=int, help="worker processes (output-invariant)")
        p.add_argument("--format", choices=("jsonl", "csv"), help="output format")
        p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--config", help="settings file: 'key = value' lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coinfactory",
        description="Debiased coin-budget estimators with exact verification oracles.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run seeded estimate replicates")
    _add_common(p, {"preset", "x", "seed", "law", "run"})
    p.add_argument("--reps", type=int, help="number of replicates")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("factory", help="emit output coins with the target bias")
    _add_common(p, {"preset", "x", "seed", "law", "run"})
    p.add_argument("--flips", type=int, help="number of output coins")
    p.set_defaults(func=cmd_factory)

    p = sub.add_parser("verify", help="run the oracle suite on a scheme")
    _add_common(p, {"preset"})
    p.add_argument("--n-max", dest="n_max", type=int, help="largest row to scan")
    p.add_argument("--enum-max", dest="enum_max", type=int, default=9,
                   help="largest n for brute-force weight enumeration")
    p.add_argument("--start", type=int, help="start index for sign and base checks")
    p.add_argument("--xs", help="comma list of rational biases, e.g. 0,1/4,1/2")
    p.add_argument("--lam", type=float, help="law exponent for the conditional-mean check")
    p.add_argument("--json", action="store_true", help="print reports as JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid of estimate cells over x and lam")
    _add_common(p, {"preset", "seed", "run"})
    p.add_argument("--xs", help="comma list of biases")
    p.add_argument("--lams", help="comma list of law exponents")
    p.add_argument("--reps", type=int, help="replicates per cell")
    p.add_argument("--start", type=int, help="start index")
    p.add_argument("--cap", type=int, help="hard budget cap")
    p.add_argument("--zeta-tol", dest="zeta_tol", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bracket", help="certified bracket for the estimator mean")
    _add_common(p, {"preset", "x", "law"})
    p.add_argument("--ell-max", dest="ell_max", type=int, help="largest visible budget")
    p.add_argument("--x-exact", dest="x_exact",
                   help="bias as an exact rational, e.g. 1/3 (overrides --x)")
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("zeta", help="normalizer value with its error bracket")
    p.add_argument("--lam", type=float, help="exponent (> 1)")
    p.add_argument("--start", type=int, help="series start index")
    p.add_argument("--zeta-tol", dest="zeta_tol", type=float, help="tolerance")
    p.set_defaults(func=cmd_zeta)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TruncationCapError as exc:
        print(f"coinfactory: cap abort: {exc}", file=sys.stderr)
        return 1
    except FactoryError as exc:
        print(f"coinfactory: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"coinfactory: io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
