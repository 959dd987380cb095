"""Command-line pipeline: synth -> design -> train -> analyze.

Every command is deterministic for a given config and seed, and all output
files are written atomically, so reruns produce byte-identical results. A
config file of ``key = value`` lines can pre-set any long option; explicit
flags win. The output directory may also be set through the CURRIKIT_OUT
environment variable (flags still win). Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    N_BINS,
    category_correct_rates,
    rate_interval_report,
    subset_noise_rates,
)
from .curriculum import (
    CurriculumParams,
    design_curriculum,
    design_curriculum_kmeans_baseline,
    level_name,
    load_curriculum,
    save_curriculum,
)
from .data import (
    FORMATS,
    SynthConfig,
    generate_synthetic,
    load_features,
    load_reference_labels,
    load_truth,
    save_features,
    save_truth,
)
from .experiments import (
    STRATEGY_TAGS,
    CurriculumCache,
    build_strategy,
    noisy_fraction_sweep,
    run_strategy,
    summarize,
)
from .fileio import atomic_write_text
from .trainer import RunMetrics, holdout_split

OUT_DIR_ENV = "CURRIKIT_OUT"


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip().strip('"')
    return values


def _apply_config(
    parser: argparse.ArgumentParser,
    subparsers: dict[str, argparse.ArgumentParser],
    args: list[str],
) -> argparse.Namespace:
    """Pre-set subcommand defaults from a --config file; explicit flags win.

    String defaults are type-converted by argparse exactly like command-line
    values.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("command", nargs="?")
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(args)
    if known.config and known.command in subparsers:
        try:
            overrides = _parse_config_file(known.config)
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        sub = subparsers[known.command]
        valid = {a.dest for a in sub._actions}
        unknown = sorted(set(overrides) - valid)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**overrides)
    return parser.parse_args(args)


def _seed_list(text: str) -> list[int]:
    """Seeds as '1,2,5' or a '1..10' inclusive range."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _json_text(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=True) + "\n"


def _nan_to_none(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


# ---------------------------------------------------------------------------
# synth


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        n_categories=int(args.categories),
        per_category=int(args.per_category),
        n_features=int(args.dim),
        clean_frac=float(args.clean_frac),
        cross_frac=float(args.cross_frac),
        uniform_frac=float(args.uniform_frac),
        blob_sigma=float(args.blob_sigma),
        box_margin_sigmas=float(args.box_margin),
        seed=int(args.seed),
    )
    fs, truth = generate_synthetic(cfg)
    out_dir = Path(args.out_dir)
    features_path = out_dir / f"features.{ 'bin' if args.format == 'binary' else 'csv' }"
    truth_path = out_dir / "truth.csv"
    save_features(fs, features_path, args.format)
    save_truth(fs, truth, truth_path)
    print(f"wrote {features_path} ({fs.n_samples} samples, d={fs.n_features}, "
          f"C={fs.n_categories}) and {truth_path}")
    return 0


# ---------------------------------------------------------------------------
# design


def _load_features_arg(args: argparse.Namespace):
    fmt = args.format
    if fmt == "auto":
        fmt = "csv" if str(args.features).endswith(".csv") else "binary"
    return load_features(args.features, fmt)


def _cmd_design(args: argparse.Namespace) -> int:
    fs = _load_features_arg(args)
    params = CurriculumParams(
        k_percent=float(args.k_percent),
        n_subsets=int(args.subsets),
        kmeans_max_iters=int(args.kmeans_max_iters),
        seed=int(args.seed),
    )
    design_fn = design_curriculum if args.method == "density" else design_curriculum_kmeans_baseline
    cd = design_fn(fs, params)
    out = Path(args.out_dir) / args.out_name
    save_curriculum(cd, out)
    n_subsets = params.n_subsets
    header = ["category", "n"] + [level_name(s, n_subsets) for s in range(n_subsets)] + ["d_c"]
    print("  ".join(header))
    for st in cd.category_stats():
        row = [str(st.category_id), str(st.n)]
        row += [str(x) for x in st.subset_sizes]
        row.append(format(st.d_c, ".6g"))
        print("  ".join(row))
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _metrics_csv(runs: list[RunMetrics]) -> str:
    out = io.StringIO()
    out.write("strategy,seed,iteration,stage,train_loss,top1,topk\n")
    for m in runs:
        for p in m.points:
            out.write(
                f"{m.strategy},{m.seed},{p.iteration},{p.stage},"
                f"{p.train_loss!r},{p.test_top1!r},{p.test_topk!r}\n"
            )
    return out.getvalue()


def _run_file_tag(tag: str) -> str:
    return tag.replace("@", "_").replace("=", "").replace(".", "p")


def _cmd_train(args: argparse.Namespace) -> int:
    fs = _load_features_arg(args)
    _, truth = load_truth(args.truth)
    if len(truth) != fs.n_samples:
        raise ValueError("truth file does not match the feature file")
    seeds = _seed_list(args.seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    fs_train, _, fs_test = holdout_split(fs, truth, args.test_frac, args.split_seed)
    params = CurriculumParams(
        k_percent=float(args.k_percent),
        n_subsets=3,
        kmeans_max_iters=int(args.kmeans_max_iters),
        seed=int(args.design_seed),
    )
    out_dir = Path(args.out_dir)
    topk = int(args.topk)
    common = dict(arch=args.arch, hidden_dim=int(args.hidden_dim), topk=topk)

    if args.noisy_fraction:
        fractions = [f / 100.0 for f in _float_list(args.noisy_fraction)]
        results = noisy_fraction_sweep(
            fractions, seeds, fs_train, fs_test, params,
            batch_size=int(args.batch_size), scale=float(args.scale), **common,
        )
        runs = [m for _, m in results]
        atomic_write_text(out_dir / "sweep_metrics.csv", _metrics_csv(runs))
        table = {}
        for fraction in fractions:
            errs = [m.final_top1 for f, m in results if f == fraction]
            errs_k = [m.final_topk for f, m in results if f == fraction]
            table[f"{fraction:g}"] = {
                "mean_top1": float(np.mean(errs)),
                "mean_topk": float(np.mean(errs_k)),
            }
        atomic_write_text(out_dir / "sweep_summary.json", _json_text(table))
        print("fraction  mean_top1  mean_topk")
        for key, row in table.items():
            print(f"{key:>8}  {row['mean_top1']:.4f}     {row['mean_topk']:.4f}")
        print(f"wrote {out_dir / 'sweep_metrics.csv'} and {out_dir / 'sweep_summary.json'}")
        return 0

    tags = [t.strip() for t in args.strategies.split(",") if t.strip()]
    alias = {"A": "ModelA", "B": "ModelB", "C": "ModelC", "D": "ModelD",
             "D_kmeans": "ModelD_kmeans"}
    tags = [alias.get(t, t) for t in tags]
    bad = [t for t in tags if t not in STRATEGY_TAGS]
    if bad:
        raise UsageError(f"unknown strategy {bad[0]!r}; choose from {', '.join(STRATEGY_TAGS)}")
    curricula = CurriculumCache(fs_train, params)
    runs: list[RunMetrics] = []
    for tag in tags:
        strategy = build_strategy(tag, curricula, int(args.batch_size), float(args.scale))
        weight_maps = {s.stage_index: s.loss_weights for s in strategy.schedule}
        for seed in seeds:
            batch_log = [] if args.batch_log else None
            _, metrics = run_strategy(
                strategy, fs_train, fs_test, seed, batch_log=batch_log, **common
            )
            runs.append(metrics)
            run_path = out_dir / f"run_{_run_file_tag(tag)}_s{seed}.json"
            atomic_write_text(run_path, _json_text(metrics.to_dict()))
            if batch_log is not None:
                out = io.StringIO()
                out.write("iteration,level_counts,weights\n")
                for iteration, stage_index, counts, _ in batch_log:
                    weights = ";".join(repr(w) for w in weight_maps[stage_index])
                    out.write(f"{iteration},{';'.join(map(str, counts))},{weights}\n")
                atomic_write_text(
                    out_dir / f"batches_{_run_file_tag(tag)}_s{seed}.csv", out.getvalue()
                )
    atomic_write_text(out_dir / "metrics.csv", _metrics_csv(runs))
    summary = summarize(runs)
    atomic_write_text(out_dir / "summary.json", _json_text(summary))
    print("strategy        runs  mean_top1  std_top1  mean_topk  std_topk")
    for tag in tags:
        row = summary[tag]
        print(f"{tag:<14}  {row['runs']:>4}  {row['mean_top1']:.4f}     "
              f"{row['std_top1']:.4f}    {row['mean_topk']:.4f}     {row['std_topk']:.4f}")
    print(f"wrote {out_dir / 'metrics.csv'} and {out_dir / 'summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# analyze


def _cmd_analyze(args: argparse.Namespace) -> int:
    cd = load_curriculum(args.curriculum)
    reference = load_reference_labels(args.reference)
    rates = subset_noise_rates(cd, reference)
    correct = category_correct_rates(cd, reference)
    doc = {
        "subset_rates": [
            {
                "level": s,
                "name": level_name(s, cd.n_subsets),
                "size": rates.sizes[s],
                "mislabeled": rates.mislabeled[s],
                "rate": _nan_to_none(rates.rates[s]),
            }
            for s in range(cd.n_subsets)
        ],
        "overall_rate": rates.overall_rate,
        "correct_rate_histogram": None,
        "interval_gains": None,
    }
    bins_csv = None
    if args.baseline_run and args.curriculum_run:
        baseline = RunMetrics.from_dict(json.loads(Path(args.baseline_run).read_text()))
        curriculum_run = RunMetrics.from_dict(json.loads(Path(args.curriculum_run).read_text()))
        audit = rate_interval_report(correct, baseline, curriculum_run)
        doc["correct_rate_histogram"] = list(audit.histogram)
        doc["interval_gains"] = [_nan_to_none(g) for g in audit.interval_gains]
        out = io.StringIO()
        out.write("bin_lo,bin_hi,categories,mean_topk_gain\n")
        for b in range(N_BINS):
            gain = audit.interval_gains[b]
            gain_txt = "" if math.isnan(gain) else repr(gain)
            out.write(f"{b / N_BINS!r},{(b + 1) / N_BINS!r},{audit.histogram[b]},{gain_txt}\n")
        bins_csv = out.getvalue()
    elif args.baseline_run or args.curriculum_run:
        raise ValueError("--baseline-run and --curriculum-run must be given together")
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "audit.json", _json_text(doc))
    if bins_csv is not None:
        atomic_write_text(out_dir / "rate_bins.csv", bins_csv)
    for s in range(cd.n_subsets):
        rate = rates.rates[s]
        rate_txt = "n/a" if math.isnan(rate) else f"{rate:.3f}"
        print(f"{level_name(s, cd.n_subsets):<13} size={rates.sizes[s]:<6} noise_rate={rate_txt}")
    print(f"overall noise rate: {rates.overall_rate:.3f}")
    print(f"wrote {out_dir / 'audit.json'}" + (" and rate_bins.csv" if bins_csv else ""))
    return 0


# ---------------------------------------------------------------------------
# parser


class UsageError(Exception):
    pass


def _build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="currikit",
        description="Design density-ranked curricula over noisy-label feature "
                    "datasets and run staged curriculum training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}
    default_out = os.environ.get(OUT_DIR_ENV, ".")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value file pre-setting any option")
        p.add_argument("--out-dir", default=default_out,
                       help=f"output directory (default: ${OUT_DIR_ENV} or '.')")

    p = subparsers["synth"] = sub.add_parser("synth", help="generate a planted-noise synthetic dataset")
    add_common(p)
    p.add_argument("--categories", type=int, default=10)
    p.add_argument("--per-category", type=int, default=200)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--clean-frac", type=float, default=0.60)
    p.add_argument("--cross-frac", type=float, default=0.25)
    p.add_argument("--uniform-frac", type=float, default=0.15)
    p.add_argument("--blob-sigma", type=float, default=2.0)
    p.add_argument("--box-margin", type=float, default=14.0,
                   help="uniform-noise box margin past the centers, in sigmas")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="binary")
    p.set_defaults(func=_cmd_synth)

    p = subparsers["design"] = sub.add_parser("design", help="design a curriculum over a feature file")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--format", choices=FORMATS + ("auto",), default="auto")
    p.add_argument("--method", choices=("density", "kmeans"), default="density")
    p.add_argument("--k-percent", type=float, default=60.0)
    p.add_argument("--subsets", type=int, default=3)
    p.add_argument("--kmeans-max-iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-name", default="curriculum.json")
    p.set_defaults(func=_cmd_design)

    p = subparsers["train"] = sub.add_parser("train", help="run training strategies over a dataset")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--format", choices=FORMATS + ("auto",), default="auto")
    p.add_argument("--truth", required=True)
    p.add_argument("--strategies", default="ModelA,ModelD",
                   help="comma list from: A,B,C,D,D_kmeans (or full Model* names)")
    p.add_argument("--seeds", default="0", help="'1,2,3' or '1..10'")
    p.add_argument("--noisy-fraction", default="",
                   help="percent list (e.g. 0,25,50,75,100); runs the "
                        "highly-noisy-fraction sweep instead of --strategies")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--scale", type=float, default=0.001)
    p.add_argument("--arch", choices=("linear", "mlp"), default="linear")
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--design-seed", type=int, default=0)
    p.add_argument("--k-percent", type=float, default=60.0)
    p.add_argument("--kmeans-max-iters", type=int, default=100)
    p.add_argument("--batch-log", action="store_true",
                   help="also write per-iteration batch composition CSVs")
    p.set_defaults(func=_cmd_train)

    p = subparsers["analyze"] = sub.add_parser("analyze", help="audit a curriculum against reference labels")
    add_common(p)
    p.add_argument("--curriculum", required=True)
    p.add_argument("--reference", required=True,
                   help="truth CSV or id,predicted_label CSV")
    p.add_argument("--baseline-run", default="",
                   help="run_*.json of the baseline strategy")
    p.add_argument("--curriculum-run", default="",
                   help="run_*.json of the curriculum strategy")
    p.set_defaults(func=_cmd_analyze)

    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = _build_parser()
    args = _apply_config(parser, subparsers, list(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"currikit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
