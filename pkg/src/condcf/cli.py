"""Command-line surface.

Four subcommands: ``estimate`` runs the cross-fitting pipeline on a CSV
dataset and writes a JSON result; ``simulate`` executes a configured
Monte Carlo experiment into a metrics CSV (optionally rendering SVG
figures next to it); ``verify`` runs the exhaustive-enumeration claim
corpus and emits a pass/fail table; ``split`` draws one fold labeling
for a dataset and writes it as a CSV column.

Dataset contract: a CSV with a header; required columns ``y`` (real)
and ``z`` (0/1); optional ``stratum`` and ``pair`` label columns; any
number of covariate columns named ``x1..xd``. Used columns may not have
missing cells. Exit codes: 0 success, 1 verification failures, 2
parse/contract violations, 3 estimator failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import designs as dsg
from .corpus import CLAIMS, load_fixtures, run_fixture
from .errors import CondcfError, DataError
from .estimators import cross_fit_estimate
from .population import ObservedData
from .simlab import MetricsRow, config_from_json, run_replications
from .splitters import default_plan, plan_from_json, split
from .splitters import (
    BernoulliSplit,
    SplitByStratum,
    SplitByTreatmentCRE,
    SplitByTreatmentSRE,
)
from .variance import variance_cf


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def read_dataset(path: str):
    """Parse the CSV dataset contract; errors carry 1-based line numbers.

    Returns (observed, has_pairs): pair labels, when present, ride in the
    observed data's strata field and has_pairs records that they mean
    matched pairs rather than general strata.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as err:
        raise DataError(f"cannot read dataset: {err}") from err
    header = [h.strip() for h in header]
    cols = {name: i for i, name in enumerate(header)}
    if "y" not in cols or "z" not in cols:
        raise DataError(f"{path}:1: header must contain 'y' and 'z' columns")
    xnames = sorted(
        (name for name in header if name.startswith("x") and name[1:].isdigit()),
        key=lambda s: int(s[1:]),
    )
    if xnames and [int(s[1:]) for s in xnames] != list(range(1, len(xnames) + 1)):
        raise DataError(f"{path}:1: covariate columns must be named x1..xd contiguously")
    used = ["y", "z"] + xnames + [c for c in ("stratum", "pair") if c in cols]
    y, z, x, strata, pairs = [], [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        for c in used:
            if not row[cols[c]].strip():
                raise DataError(f"{path}:{lineno}: missing value in column '{c}'")
        try:
            y.append(float(row[cols["y"]]))
            zv = row[cols["z"]].strip()
            if zv not in ("0", "1"):
                raise ValueError(f"z must be 0 or 1, got {zv!r}")
            z.append(int(zv))
            x.append([float(row[cols[name]]) for name in xnames])
        except ValueError as err:
            raise DataError(f"{path}:{lineno}: {err}") from err
        if "stratum" in cols:
            strata.append(row[cols["stratum"]].strip())
        if "pair" in cols:
            pairs.append(row[cols["pair"]].strip())
    if not y:
        raise DataError(f"{path}: no data rows")
    n = len(y)
    if pairs:
        counts = {}
        for p in pairs:
            counts[p] = counts.get(p, 0) + 1
        bad = [p for p, c in counts.items() if c != 2]
        if bad:
            raise DataError(f"{path}: pair labels must appear exactly twice: {bad[:3]}")
        labels = pairs
    elif strata:
        labels = strata
    else:
        labels = None
    obs = ObservedData(
        y=np.asarray(y),
        z=np.asarray(z),
        x=np.asarray(x, dtype=float).reshape(n, len(xnames)),
        strata=labels,
    )
    return obs, bool(pairs)


def parse_design(spec: str | None, observed: ObservedData, has_pairs: bool = False) -> dsg.Design:
    """Build the design from a spec string, or infer it from the columns."""
    n = observed.n
    n1 = int(observed.z.sum())
    if spec is None or spec == "auto":
        if has_pairs:
            spec = "mpe"
        elif observed.strata is not None:
            spec = "sre"
        else:
            raise DataError(
                "no stratum or pair column: choose a design with --design "
                "(e.g. 'cre' or 'bre:0.5')"
            )
    if spec.startswith("{"):
        design = dsg.from_json(json.loads(spec))
    else:
        name, _, arg = spec.partition(":")
        if name == "bre":
            if not arg:
                raise DataError("a Bernoulli design needs its rate, e.g. 'bre:0.5'")
            design = dsg.Bernoulli(n=n, r1=float(arg))
        elif name == "cre":
            want = int(arg) if arg else n1
            design = dsg.CompleteRandomization(n=n, n1=want)
        elif name == "sre":
            if observed.strata is None:
                raise DataError("an 'sre' design needs a stratum column")
            treated = []
            for k in range(1, int(observed.strata.max()) + 1):
                units = observed.strata == k
                treated.append(int(observed.z[units].sum()))
            design = dsg.Stratified(strata=tuple(observed.strata), treated=tuple(treated))
        elif name == "mpe":
            if observed.strata is None or not has_pairs:
                raise DataError("an 'mpe' design needs a pair column")
            design = dsg.MatchedPairs(pairs=tuple(observed.strata))
        else:
            raise DataError(f"unknown design spec {spec!r}")
    _check_design_consistency(design, observed)
    return design


def _check_design_consistency(design: dsg.Design, observed: ObservedData) -> None:
    if design.n != observed.n:
        raise DataError(f"design/observed mismatch: design n={design.n}, data n={observed.n}")
    n1 = int(observed.z.sum())
    if isinstance(design, dsg.CompleteRandomization) and design.n1 != n1:
        raise DataError(
            f"design/observed mismatch: design treats {design.n1}, data has {n1}"
        )
    if isinstance(design, dsg.Stratified):
        for k in range(1, design.n_strata + 1):
            got = int(observed.z[design.units_in(k)].sum())
            if got != design.treated[k - 1]:
                raise DataError(
                    f"design/observed mismatch in stratum {k}: {got} treated, "
                    f"design says {design.treated[k - 1]}"
                )
    if isinstance(design, dsg.MatchedPairs):
        for k in range(1, design.n_pairs + 1):
            if int(observed.z[design.units_in(k)].sum()) != 1:
                raise DataError(f"design/observed mismatch: pair {k} not one-treated")


def parse_plan(spec: str | None, design: dsg.Design):
    if spec is None or spec == "auto":
        return default_plan(design)
    if spec.startswith("{"):
        return plan_from_json(json.loads(spec))
    name, _, arg = spec.partition(":")
    if name == "bernoulli":
        return BernoulliSplit(pi=float(arg) if arg else 0.5)
    if name == "by-treatment":
        if isinstance(design, dsg.CompleteRandomization):
            if not arg:
                return default_plan(design)
            a, b = (int(v) for v in arg.split(","))
            return SplitByTreatmentCRE(n1_fold1=a, n0_fold1=b)
        if isinstance(design, dsg.Stratified):
            if not arg:
                return default_plan(design)
            fold1 = tuple(
                tuple(int(v) for v in part.split(",")) for part in arg.split(";")
            )
            return SplitByTreatmentSRE(fold1=fold1)
        raise DataError("by-treatment plans need a complete or stratified design")
    if name == "by-stratum":
        if arg:
            return SplitByStratum(k_fold1=int(arg))
        return default_plan(design)
    raise DataError(f"unknown plan spec {spec!r}")


def write_manifest(out_path: str, argv, seed, config_material) -> None:
    digest = hashlib.sha256(
        json.dumps(config_material, sort_keys=True, default=str).encode()
    ).hexdigest()
    manifest = {
        "command": list(argv),
        "config_hash": digest,
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def cmd_estimate(args, argv) -> int:
    observed, has_pairs = read_dataset(args.data)
    design = parse_design(args.design, observed, has_pairs)
    plan = parse_plan(args.plan, design)
    rng = np.random.default_rng(args.seed)
    est = cross_fit_estimate(observed, design, plan, args.predictor, rng)
    result = est.to_json()
    try:
        v = variance_cf(est, design, alpha=args.alpha)
        result.update(v.to_json())
    except InsufficientReplication as err:
        # the point estimate stands even when a fold cell is too small
        # for a sample variance
        result.update(
            {"v_cf": None, "fold_v": None, "alpha": args.alpha, "ci": None,
             "variance_error": str(err)}
        )
    result.update({"n": observed.n, "seed": args.seed, "predictor_spec": args.predictor})
    payload = json.dumps(result, indent=1, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
        write_manifest(args.out, argv, args.seed, result)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_split(args, argv) -> int:
    observed, has_pairs = read_dataset(args.data)
    design = parse_design(args.design, observed, has_pairs)
    plan = parse_plan(args.plan, design)
    rng = np.random.default_rng(args.seed)
    result = split(plan, design, observed.z, rng)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["unit", "fold"])
    for i, fold in enumerate(result.membership):
        writer.writerow([i, int(fold)])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
        write_manifest(args.out, argv, args.seed, {"plan": plan.to_json()})
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_simulate(args, argv) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"cannot read config: {err}") from err
    if args.replications is not None:
        raw["replications"] = args.replications
    if args.seeds is not None:
        raw["seeds"] = args.seeds
    config = config_from_json(raw)
    rows = run_replications(config)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(MetricsRow.COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row.as_record()])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
        write_manifest(args.out, argv, config.base_seed, raw)
    else:
        sys.stdout.write(buf.getvalue())
    if args.plot:
        from .plots import render_metrics

        base = args.out if args.out else "simulation"
        svg = base[:-4] + ".svg" if base.endswith(".csv") else base + ".svg"
        render_metrics(rows, svg, title=config.experiment)
        print(f"wrote {svg}", file=sys.stderr)
    return 0


def cmd_verify(args, argv) -> int:
    if args.fixtures:
        import pathlib

        paths = sorted(pathlib.Path(args.fixtures).glob("*.json"))
        fixtures = load_fixtures(paths)
    else:
        fixtures = load_fixtures()
    claims = [args.claim] if args.claim else None
    rows = []
    for fixture in fixtures:
        rows.extend(run_fixture(fixture, claims=claims, cap=args.cap))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["fixture", "claim", "predictor", "deviation", "tolerance", "atoms", "passed"])
    for r in rows:
        writer.writerow(
            [
                r["fixture"], r["claim"], r["predictor"], _fmt(r["deviation"]),
                _fmt(r["tolerance"]), r["atoms"], "pass" if r["passed"] else "FAIL",
            ]
        )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
        write_manifest(args.out, argv, None, {"claim": args.claim, "cap": args.cap})
    else:
        sys.stdout.write(buf.getvalue())
    failures = sum(1 for r in rows if not r["passed"])
    if failures:
        print(f"{failures} of {len(rows)} checks FAILED", file=sys.stderr)
        return 1
    print(f"all {len(rows)} checks passed", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condcf",
        description="Conditional cross-fitting for design-based ATE estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="cross-fitted estimate on a CSV dataset")
    p.add_argument("--data", required=True, help="CSV dataset path")
    p.add_argument("--design", default=None, help="bre:R | cre[:N1] | sre | mpe | JSON")
    p.add_argument("--plan", default="auto", help="auto | bernoulli:PI | by-treatment[:a,b] | by-stratum[:K1] | JSON")
    p.add_argument("--predictor", default="ols", help="zero|mean|ols|wls-strata|tom|paired-diff|poisson[+cal]")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="result JSON path (stdout if omitted)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("split", help="draw one fold labeling for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--design", default=None)
    p.add_argument("--plan", default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("simulate", help="run a configured simulation experiment")
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--out", default=None, help="metrics CSV path (stdout if omitted)")
    p.add_argument("--plot", action="store_true", help="render SVG figures next to the CSV")
    p.add_argument("--replications", type=int, default=None, help="override the config")
    p.add_argument("--seeds", type=int, default=None, help="override the config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the enumeration claim corpus")
    p.add_argument("--claim", default=None, choices=list(CLAIMS))
    p.add_argument("--cap", type=int, default=1_000_000, help="enumeration size cap")
    p.add_argument("--fixtures", default=None, help="directory of fixture JSON files")
    p.add_argument("--out", default=None, help="pass/fail table CSV (stdout if omitted)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, ["condcf"] + argv)
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CondcfError as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
