"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 data error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from renal import generators as gen
from renal.errors import (
    DataFormatError,
    DegenerateDataError,
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
    ThinningBoundError,
)

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 2, 3, 4


def _add_common(p, *names):
    if "seed" in names:
        p.add_argument("--seed", type=int, help="master seed")
    if "alpha" in names:
        p.add_argument("--alpha", type=float, help="significance level")
    if "method" in names:
        p.add_argument("--method", help="renal, mmd, scott or ewd:<m>")
    if "trials" in names:
        p.add_argument("--trials", type=int, help="number of trials")
    if "config" in names:
        p.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    if "workers" in names:
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renal", description="Goodness-of-fit tests for sequence generators.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="write one simulated sequence as CSV")
    p.add_argument("--process", required=True, choices=sorted(gen.PROCESSES))
    p.add_argument("--n", type=int, default=500, help="length for regular series")
    p.add_argument("--out", required=True)
    _add_common(p, "seed")

    p = sub.add_parser("train", help="fit an embedding model on a CSV sequence")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=["regular", "event"], default="regular")
    p.add_argument("--preset", choices=["time_series", "tpp", "stpp"], default="time_series")
    p.add_argument("--out", required=True)
    _add_common(p, "seed", "config")

    p = sub.add_parser("test", help="test a candidate CSV sequence against a reference CSV sequence")
    p.add_argument("--reference", required=True, help="observed data (the embedding is trained on it)")
    p.add_argument("--candidate", required=True, help="sequence from the model under test")
    p.add_argument("--kind", choices=["regular", "event"], default="regular")
    p.add_argument("--preset", choices=["time_series", "tpp", "stpp"], default="time_series")
    p.add_argument("--model", help="previously trained model JSON (skips training)")
    p.add_argument("--out", help="write the report as JSON here instead of stdout")
    _add_common(p, "seed", "alpha", "method", "config")

    p = sub.add_parser("experiment", help="repeated-trial accuracy experiment")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", help="also write a per-trial CSV here")
    _add_common(p, "config", "seed", "alpha", "method", "trials", "workers")

    p = sub.add_parser("ablate", help="sweep the smoothing weight")
    p.add_argument("--lambdas", default="0.001,0.015,0.06", help="comma-separated values")
    p.add_argument("--out", required=True, help="CSV with columns lambda,type1,type2")
    p.add_argument("--reports", help="directory for the per-lambda JSON reports")
    _add_common(p, "config", "seed", "alpha", "method", "trials", "workers")

    p = sub.add_parser("acceptance", help="run the acceptance checks and print one line each")
    p.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    _add_common(p, "workers")
    return parser


def _experiment_config(args):
    from renal.harness import ExperimentConfig

    if not args.config:
        raise InvalidInputError("--config is required")
    cfg = ExperimentConfig.from_json(args.config)
    over = {k: getattr(args, k) for k in ("seed", "alpha", "method", "trials") if getattr(args, k) is not None}
    return replace(cfg, **over) if over else cfg


def _train_settings(args):
    """Hidden size, training and bin configuration from a preset plus optional config file."""
    from renal.harness import PRESETS, ExperimentConfig

    base = dict(PRESETS[args.preset])
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config)
        base = dict(hidden_dim=cfg.hidden_dim, train_cfg=cfg.train_cfg, bin_cfg=cfg.bin_cfg)
    if args.seed is not None:
        base["train_cfg"] = replace(base["train_cfg"], seed=args.seed)
    return base


def cmd_simulate(args):
    from renal.io import save_csv

    seed = 0 if args.seed is None else args.seed
    fn = gen.PROCESSES[args.process]
    seq = fn(seed, args.n) if args.process in gen.REGULAR_PROCESSES else fn(seed)
    save_csv(seq, args.out)
    print(f"wrote {seq.n} rows to {args.out}")


def cmd_train(args):
    from renal.embedding import save_model, train
    from renal.io import load_csv

    seq = load_csv(args.data, args.kind)
    s = _train_settings(args)
    tc = replace(s["train_cfg"], bptt_window=min(s["train_cfg"].bptt_window, seq.n - 1))
    model, losses = train(seq, s["hidden_dim"], tc)
    save_model(model, args.out)
    print(f"trained {args.kind} model, final loss {losses[-1]:.6g}; saved to {args.out}")


def cmd_test(args):
    from renal.baselines import MmdConfig, ewd_bins, mmd_test, scott_bins
    from renal.embedding import embed_sequence, load_model, train
    from renal.gof import test_embeddings, test_with_grid
    from renal.harness import parse_method
    from renal.io import load_csv

    import numpy as np

    d0 = load_csv(args.reference, args.kind)
    d1 = load_csv(args.candidate, args.kind)
    alpha = 0.05 if args.alpha is None else args.alpha
    method, m = parse_method(args.method or "renal")
    if method == "mmd":
        rep = mmd_test(d0, d1, MmdConfig(alpha=alpha), seed=args.seed or 0)
        doc = rep.summary()
    else:
        s = _train_settings(args)
        if args.model:
            model = load_model(args.model)
        else:
            tc = replace(s["train_cfg"], bptt_window=min(s["train_cfg"].bptt_window, d0.n - 1))
            model, _ = train(d0, s["hidden_dim"], tc)
        e0, e1 = embed_sequence(model, d0), embed_sequence(model, d1)
        if method == "renal":
            rep = test_embeddings(e0, e1, s["bin_cfg"], alpha)
        else:
            pooled = np.vstack([e0, e1])
            rep = test_with_grid(e0, e1, ewd_bins(pooled, m) if method == "ewd" else scott_bins(pooled), alpha)
        doc = rep.summary()
        doc["selected_bins"] = rep.selected_bins.to_dict()
    doc["alpha"] = alpha
    doc["method"] = args.method or "renal"
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_experiment(args):
    from renal.harness import emit_report, run_experiment

    cfg = _experiment_config(args)
    report = run_experiment(cfg, workers=args.workers)
    emit_report(report, args.out, args.csv)
    print(
        f"type1 {report.type1_accuracy}, type2 {report.type2_accuracy}, "
        f"average {report.average_accuracy}, excluded {report.excluded_trials}"
    )


def cmd_ablate(args):
    from renal.harness import ablation_csv, emit_report, run_lambda_ablation

    cfg = _experiment_config(args)
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"--lambdas must be comma-separated numbers, got {args.lambdas!r}") from None
    if not lambdas:
        raise InvalidInputError("--lambdas is empty")
    reports = run_lambda_ablation(cfg, lambdas, workers=args.workers)
    Path(args.out).write_text(ablation_csv(lambdas, reports), encoding="utf-8")
    if args.reports:
        folder = Path(args.reports)
        folder.mkdir(parents=True, exist_ok=True)
        for lam, rep in zip(lambdas, reports):
            emit_report(rep, folder / f"lambda_{lam:g}.json")
    print(f"wrote {len(lambdas)} rows to {args.out}")


def cmd_acceptance(args):
    from renal.acceptance import CRITERIA, run_all

    numbers = None
    if args.criteria:
        try:
            numbers = [int(v) for v in args.criteria.split(",")]
        except ValueError:
            raise InvalidInputError("--criteria must be comma-separated integers") from None
        bad = [k for k in numbers if k not in CRITERIA]
        if bad:
            raise InvalidInputError(f"unknown criteria {bad}")
    results = run_all(numbers, workers=args.workers)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 1 if failed else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "test": cmd_test,
    "experiment": cmd_experiment,
    "ablate": cmd_ablate,
    "acceptance": cmd_acceptance,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args) or 0
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, InsufficientDataError, DegenerateDataError, ThinningBoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
