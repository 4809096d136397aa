"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 statistical degeneracy,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import balanced_partition, recalibrate
from .errors import InputError, RiskvalError
from .ingest import MINMAX_MODES, load_cohort, load_rules
from .model_core import DEFAULT_REVERSE_CODED, MedianCutoffs, count_score, dump_model, load_model
from .report import atomic_write, build_validation, file_digest, fmt6, sig6, write_validation
from .robustness import repeated_holdout
from .simulate import DEMO_GENERATORS, demo_config, generate_cohort, write_cohort_files

log = logging.getLogger("riskval")

DEFAULT_SEED = 20230611


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _add_inputs(p, rules_required=True):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--cohort", required=True, help="cross-sectional cohort CSV")
    p.add_argument("--longitudinal", help="long-format longitudinal CSV")
    p.add_argument("--rules", required=rules_required, help="normalization rules JSON")
    p.add_argument("--minmax-mode", choices=MINMAX_MODES, default="literal",
                   help="default divisor for min_max_possible rules that do not set one")
    p.add_argument("--vc-method", choices=("moments", "reml"), default="moments",
                   help="variance-component estimator for random-intercept predictors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="discrimination and calibration report")
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=_positive_int, default=10)
    p.add_argument("--quantiles", type=_positive_int, default=5)
    p.add_argument("--cutoffs", help="median cutoffs JSON for the count score")

    p = sub.add_parser("recalibrate", help="update the model intercept on a cohort")
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--out-model", help="path of the updated model (default OUT/recalibrated_model.json)")

    p = sub.add_parser("robustness", help="repeated stratified 50/50 holdout")
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--reps", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("summarize", help="mean (SD) of predictors by outcome")
    _add_inputs(p)
    p.add_argument("--out", help="output directory for summary.csv / summary.json")

    p = sub.add_parser("score", help="per-subject risk scores")
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quantiles", type=_positive_int, default=5)
    p.add_argument("--cutoffs", help="median cutoffs JSON for the count score")

    p = sub.add_parser("simulate", help="write a synthetic demo cohort")
    p.add_argument("--demo", choices=sorted(DEMO_GENERATORS), default="chds_like")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="default: the demo's committed seed")
    p.add_argument("--n", type=_positive_int, default=None, help="override cohort size")
    p.add_argument("--shift", type=float, default=None,
                   help="model miscalibration in logits (outcomes drawn from lp - shift); "
                        "replaces the demo's target prevalence")
    return parser


def _load(args):
    model = load_model(args.model)
    rules = load_rules(args.rules)
    cohort, exclusions = load_cohort(args.cohort, model, rules, args.longitudinal,
                                     vc_method=args.vc_method, minmax_mode=args.minmax_mode)
    if exclusions:
        log.warning("%d subject(s) excluded for missing predictors", len(exclusions))
    if cohort.n == 0:
        raise InputError("no complete subjects remain after filtering")
    return model, cohort, exclusions


def _digests(args):
    out = {"model": file_digest(args.model), "cohort": file_digest(args.cohort),
           "rules": file_digest(args.rules)}
    if args.longitudinal:
        out["longitudinal"] = file_digest(args.longitudinal)
    return out


def _load_cutoffs(path):
    doc = json.loads(Path(path).read_text())
    if "cutoffs" in doc:
        return MedianCutoffs({k: float(v) for k, v in doc["cutoffs"].items()},
                             frozenset(doc.get("reverse_coded", DEFAULT_REVERSE_CODED)))
    return MedianCutoffs({k: float(v) for k, v in doc.items()})


def cmd_validate(args) -> int:
    model, cohort, exclusions = _load(args)
    cutoffs = _load_cutoffs(args.cutoffs) if args.cutoffs else None
    art = build_validation(model, cohort, quantiles=args.quantiles, bins=args.bins, cutoffs=cutoffs,
                           inputs=_digests(args), exclusions=exclusions)
    write_validation(art, args.out)
    r = art.report
    print(f"n={r.cohort['n']} cases={r.cohort['cases']} prevalence={r.cohort['prevalence_percent']:.2f}%")
    print(f"AUC {r.auc['auc']:.3f} ({r.auc['ci_low']:.3f}-{r.auc['ci_high']:.3f})  "
          f"E/O {r.overall['ratio']:.3f}  calibration intercept {r.calibration['intercept']:.3f}")
    return 0


def cmd_recalibrate(args) -> int:
    model, cohort, _ = _load(args)
    rec = recalibrate(model, cohort)
    out = Path(args.out)
    model_path = Path(args.out_model) if args.out_model else out / "recalibrated_model.json"
    atomic_write(model_path, dump_model(rec.model))
    delta = {
        "calibration_intercept": sig6(rec.fit.intercept),
        "intercept_before": sig6(model.intercept),
        "intercept_after": sig6(rec.model.intercept),
        "converged": rec.fit.converged,
        "iterations": rec.fit.iterations,
        "eo_before": sig6(rec.before.ratio),
        "eo_after": sig6(rec.after.ratio),
        "expected_before": sig6(rec.before.expected),
        "expected_after": sig6(rec.after.expected),
        "observed": rec.after.observed,
        "inputs": _digests(args),
    }
    atomic_write(out / "recalibration.json", json.dumps(delta, indent=2, sort_keys=True) + "\n")
    print(f"calibration intercept {rec.fit.intercept:.4f}; E/O {rec.before.ratio:.3f} -> {rec.after.ratio:.6f}")
    return 0


def cmd_robustness(args) -> int:
    model, cohort, _ = _load(args)
    summary = repeated_holdout(cohort, model, reps=args.reps, seed=args.seed, jobs=args.jobs)
    doc = summary.to_dict()
    for rep in doc["per_rep"]:
        for key in ("calibration_intercept", "test_auc", "test_eo"):
            rep[key] = sig6(rep[key])
    for key in ("mean_auc", "mean_eo", "mean_intercept"):
        doc[key] = sig6(doc[key])
    atomic_write(Path(args.out) / "robustness.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    failed = sum(r.error is not None for r in summary.per_rep)
    print(f"{args.reps} repetitions ({failed} aborted): mean test AUC {fmt6(summary.mean_auc)}, "
          f"mean test E/O {fmt6(summary.mean_eo)}")
    return 0


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    mean = float(np.mean(v))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else None
    return mean, sd


def summarize_cohort(model, cohort) -> list[dict]:
    """Rows of (predictor, statistic per group) mirroring a case/control table."""
    y = cohort.labels
    groups = {"total": np.ones(cohort.n, bool), "cases": y == 1, "controls": y == 0}
    rows = [{"predictor": "Male %", **{
        g: {"n": int(m.sum()), "mean": (sig6(100 * cohort.sex[m].mean()) if m.any() else None), "sd": None}
        for g, m in groups.items()}}]
    for name in model.continuous_predictors:
        col = cohort.feature(name)
        row = {"predictor": name}
        for g, m in groups.items():
            mean, sd = _mean_sd(col[m])
            row[g] = {"n": int(m.sum()), "mean": sig6(mean), "sd": sig6(sd)}
        rows.append(row)
    return rows


def cmd_summarize(args) -> int:
    model, cohort, _ = _load(args)
    rows = summarize_cohort(model, cohort)

    def cell(c, pct=False):
        if c["mean"] is None:
            return "NA"
        if pct:
            return f"{c['mean']:.2f}"
        sd = "NA" if c["sd"] is None else f"{c['sd']:.2f}"
        return f"{c['mean']:.2f} ({sd})"

    n_case = cohort.case_count
    header = ["Predictor", f"Total (n = {cohort.n})", f"Cases (n = {n_case})", f"Controls (n = {cohort.n - n_case})"]
    lines = [header] + [[r["predictor"]] + [cell(r[g], i == 0) for g in ("total", "cases", "controls")]
                        for i, r in enumerate(rows)]
    widths = [max(len(l[i]) for l in lines) for i in range(4)]
    for l in lines:
        print("  ".join(s.ljust(w) for s, w in zip(l, widths)).rstrip())
    if args.out:
        out = Path(args.out)
        csv_lines = ["predictor,total_mean,total_sd,cases_mean,cases_sd,controls_mean,controls_sd"]
        for r in rows:
            vals = [r["predictor"]]
            for g in ("total", "cases", "controls"):
                vals += [fmt6(r[g]["mean"]), fmt6(r[g]["sd"])]
            csv_lines.append(",".join(vals))
        atomic_write(out / "summary.csv", "\n".join(csv_lines) + "\n")
        atomic_write(out / "summary.json", json.dumps(rows, indent=2) + "\n")
    return 0


def cmd_score(args) -> int:
    model, cohort, _ = _load(args)
    lp = cohort.linear_predictors(model)
    probs = cohort.probabilities(model)
    if args.cutoffs:
        cutoffs = _load_cutoffs(args.cutoffs)
    else:
        log.info("count-score cutoffs taken from this cohort's medians")
        cutoffs = MedianCutoffs.from_features(model, cohort.feature_table(model.continuous_predictors))
    order = np.argsort(probs, kind="stable")
    group = np.empty(cohort.n, dtype=int)
    start = 0
    for g, size in enumerate(balanced_partition(cohort.n, args.quantiles), start=1):
        group[order[start:start + size]] = g
        start += size
    lines = ["subject_id,lp,probability,quantile,count_score"]
    for i, s in enumerate(cohort.subjects):
        cs = count_score(s.features, cutoffs, s.sex)
        lines.append(f"{s.subject_id},{float(lp[i])!r},{float(probs[i])!r},{group[i]},{cs}")
    atomic_write(Path(args.out) / "score.csv", "\n".join(lines) + "\n")
    print(f"scored {cohort.n} subjects")
    return 0


def cmd_simulate(args) -> int:
    cfg = demo_config(args.demo, args.seed)
    if args.n is not None or args.shift is not None:
        changes = {}
        if args.n is not None:
            changes["n"] = args.n
        if args.shift is not None:
            changes.update(intercept_shift=args.shift, target_prevalence=None)
        cfg = replace(cfg, **changes)
    cohort, truth = generate_cohort(cfg)
    paths = write_cohort_files(cohort, cfg.model, args.out, cfg.sex_predictor)
    truth_doc = {"demo": args.demo, "seed": cfg.seed, "n": cfg.n,
                 "intercept_shift": truth.intercept_shift,
                 "target_prevalence": cfg.target_prevalence,
                 "cases": cohort.case_count}
    atomic_write(Path(args.out) / "truth.json", json.dumps(truth_doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {cohort.n} subjects ({cohort.case_count} cases) to {args.out}; "
          f"files: {', '.join(sorted(p.name for p in paths.values()))}")
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "recalibrate": cmd_recalibrate,
    "robustness": cmd_robustness,
    "summarize": cmd_summarize,
    "score": cmd_score,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RiskvalError as exc:
        print(f"riskval {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"riskval {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
