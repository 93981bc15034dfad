"""Command-line interface: ``heritcurves {fit,scan,curves,limits,simulate,bootstrap}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 optimization
failure, 5 inference unavailable.  Errors are reported on stderr as one line
``heritcurves: error[<code>] <message>``.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import serialize
from .datasets import (
    TrioDataset,
    TwinDataset,
    read_trios,
    read_twins,
    standardize_trios,
    write_trios,
    write_twins,
)
from .errors import (
    BootstrapUnreliableError,
    DataError,
    HeritCurvesError,
    InferenceUnavailableError,
    OptimizationError,
)
from .estimation import FitConfig, curve_bands, fit, model_scan, parameter_se
from .mixture import BivariateMixture, default_grid, relationship_margins, tail_limits
from .simulation import SampleBatch, parametric_bootstrap, sample

EXIT_USAGE, EXIT_DATA, EXIT_OPTIM, EXIT_INFERENCE = 2, 3, 4, 5
QUANTILES = (0.05, 0.95)


class UsageError(Exception):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_data(args):
    data = read_twins(args.input) if args.design == "twins" else read_trios(args.input)
    if data.dropped:
        print(f"heritcurves: note: dropped {data.dropped} incomplete rows from {args.input}", file=sys.stderr)
    if args.design == "trios" and args.standardize:
        data = standardize_trios(data)
    return data


def _data_extra(data):
    values = data.values()
    extra = {
        "data_quantiles": {str(q): float(np.quantile(values, q)) for q in QUANTILES},
        "dropped_rows": data.dropped,
    }
    if isinstance(data, TrioDataset):
        extra["standardized"] = data.standardized
        extra["shift_D"] = data.shift
    return extra


def _config(args):
    return FitConfig(n_starts=args.starts, seed=args.seed)


def cmd_fit(args, out):
    data = _load_data(args)
    res = fit(data, args.m, args.design, _config(args))
    try:
        se = parameter_se(res)
    except InferenceUnavailableError as exc:
        print(f"heritcurves: warning[{exc.code}] {exc}", file=sys.stderr)
        se = None
    doc = serialize.fit_to_dict(res, se, _data_extra(data))
    text = serialize.dump(doc, args.out)
    if args.out is None:
        out.write(text + "\n")


def cmd_scan(args, out):
    if args.m_min < 1 or args.m_max < args.m_min:
        raise UsageError("need 1 <= --m-min <= --m-max")
    data = _load_data(args)
    table = model_scan(data, range(args.m_min, args.m_max + 1), args.design, _config(args))
    doc = {
        "design": table.design,
        "n": table.n,
        "best_m_bic": table.best_m,
        "best_m_aic": table.best_m_aic,
        "rows": [vars(r) for r in table.rows],
    }
    if args.out:
        serialize.dump(doc, args.out)
    if args.json:
        out.write(serialize.dump(doc) + "\n")
    else:
        out.write(table.to_text() + "\n")


def cmd_curves(args, out):
    res = serialize.fit_from_dict(doc := serialize.load(args.fit))
    base = default_grid(res.model, n=args.grid_n)
    lo = base[0] if args.grid_lo is None else args.grid_lo
    hi = base[-1] if args.grid_hi is None else args.grid_hi
    grid = np.linspace(lo, hi, args.grid_n)
    bands = curve_bands(res, grid, design=args.design_rule, with_se=not args.no_se)

    header = ["y"]
    for name in bands:
        header += [name, f"{name}_se", f"{name}_lo", f"{name}_hi"]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else out
    try:
        q = doc.get("data_quantiles") or {}
        for level in QUANTILES:
            val = q.get(str(level))
            fh.write(f"# quantile_{level}={'nan' if val is None else repr(float(val))}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, y in enumerate(grid):
            row = [repr(float(y))]
            for s in bands.values():
                if s.se is None:
                    row += [repr(float(s.value[i])), "", "", ""]
                else:
                    row += [repr(float(v)) for v in (s.value[i], s.se[i], s.lower[i], s.upper[i])]
            w.writerow(row)
    finally:
        if args.out:
            fh.close()


def cmd_limits(args, out):
    model = serialize.model_from_dict(serialize.load(args.fit))
    doc = {
        "design": serialize._design_name(model),
        "limits": {
            lab: serialize.tail_limits_to_dict(tail_limits(margin))
            for lab, margin in relationship_margins(model).items()
        },
    }
    out.write(serialize.dump(doc) + "\n")


def cmd_simulate(args, out):
    model = serialize.model_from_dict(serialize.load(args.model))
    if args.n < 1:
        raise UsageError("--n must be positive")
    if isinstance(model, BivariateMixture):
        raise UsageError("simulate needs a twin or trio model")
    batch: SampleBatch = sample(model, args.n, seed=args.seed)
    labels = batch.labels + 1 if args.labels else None
    data = batch.to_dataset()
    writer = write_twins if isinstance(data, TwinDataset) else write_trios
    writer(args.out or out, data, labels)


def cmd_bootstrap(args, out):
    res = serialize.fit_from_dict(serialize.load(args.fit))
    boot = parametric_bootstrap(res, args.B, config=FitConfig(seed=args.seed), seed=args.seed)
    text = serialize.dump(serialize.bootstrap_to_dict(boot), args.out)
    if args.out is None:
        out.write(text + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="heritcurves",
        description="Heritability curves from twin and trio mixture fits.",
        epilog="exit codes: 0 ok, 2 usage, 3 data, 4 optimization, 5 inference",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--design", choices=["twins", "trios"], required=True)
        sp.add_argument("--input", required=True, help="CSV file")
        sp.add_argument("--standardize", action="store_true", help="equalize parental means (trios)")
        sp.add_argument("--starts", type=int, default=5)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("fit", help="fit one mixture")
    data_args(sp)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("scan", help="fit a range of component counts")
    data_args(sp)
    sp.add_argument("--m-min", type=int, default=1)
    sp.add_argument("--m-max", type=int, required=True)
    sp.add_argument("--out", help="write the table as JSON")
    sp.add_argument("--json", action="store_true", help="print JSON instead of the text table")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("curves", help="correlation and heritability curves as CSV")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--grid-lo", type=float)
    sp.add_argument("--grid-hi", type=float)
    sp.add_argument("--grid-n", type=int, default=201)
    sp.add_argument("--design-rule", choices=["auto", "ace", "ade"], default="auto")
    sp.add_argument("--no-se", action="store_true", help="skip delta-method standard errors")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("limits", help="tail limits of every correlation curve")
    sp.add_argument("--fit", required=True)
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("simulate", help="draw families from a fitted model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, required=True, help="pairs per zygosity, or trios")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--labels", action="store_true", help="add the component column")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bootstrap", help="parametric bootstrap of a fit")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--B", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bootstrap)
    return p


def _exit_code(exc) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, OptimizationError):
        return EXIT_OPTIM
    if isinstance(exc, (InferenceUnavailableError, BootstrapUnreliableError)):
        return EXIT_INFERENCE
    return EXIT_DATA


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command == "curves" and args.grid_n < 2:
            raise UsageError("--grid-n must be at least 2")
        if args.command == "bootstrap" and args.B < 1:
            raise UsageError("--B must be positive")
        if getattr(args, "m", 1) < 1:
            raise UsageError("--m must be positive")
        if getattr(args, "starts", 1) < 1:
            raise UsageError("--starts must be positive")
        args.func(args, out)
    except (UsageError, HeritCurvesError) as exc:
        code = getattr(exc, "code", "error")
        msg = " ".join(str(exc).split())
        print(f"heritcurves: error[{code}] {msg}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"heritcurves: error[{DataError.code}] {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
