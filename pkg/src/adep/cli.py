"""Command-line entry point.

Subcommands: synth, validate-data, train, cv, ablate, baseline, gradcheck,
report. Every subcommand consumes one JSON config plus override flags (the
flag wins), seeds all randomness from --seed / the config seed, and writes a
manifest beside its outputs. Exit codes: 0 success, 1 validation or
configuration error, 2 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

from . import checkpoint, runio
from .ablation import run_ablation
from .baselines import (
    BASELINE_KINDS,
    BaselineHyper,
    fit_baseline,
    predict_baseline,
    save_baseline,
)
from .data import (
    expand_symmetric,
    load_dataset,
    pair_matrix,
    stratified_kfold,
    write_drug_features,
    write_interactions,
)
from .errors import AdepError, ConfigError, DivergenceError, GradCheckError
from .metrics import render_metrics_table
from .model import ArchSpec, composite_grad_check
from .synth import SynthConfig, event_names, gen_synthetic
from .training import (
    TrainConfig,
    evaluate_model,
    fold_matrices,
    run_cv,
    train_fold,
)


class UsageError(ConfigError):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit-code-1 errors."""

    def error(self, message):
        raise UsageError(message)


def _read_json_file(path, what="config"):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from exc


def _load_run_config(args):
    """Merge config file + flag overrides into (TrainConfig, arch dict, hyper)."""
    doc = _read_json_file(args.config) if getattr(args, "config", None) else {}
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    doc = dict(doc)
    arch_overrides = doc.pop("architecture", {}) or {}
    baseline_doc = doc.pop("baseline", {}) or {}
    for field in ("seed", "epochs", "alpha", "beta", "gamma", "batch_size",
                  "learning_rate", "k_folds", "adversarial_mode"):
        value = getattr(args, field, None)
        if value is not None:
            doc[field] = value
    if getattr(args, "no_discriminator", False):
        doc["discriminator_enabled"] = False
    config = TrainConfig.from_dict(doc)
    for key in ("input_dim", "n_classes"):
        if key in arch_overrides:
            raise ConfigError(f"architecture.{key} is derived from the data; remove it")
    hyper = BaselineHyper.from_dict(baseline_doc)
    return config, arch_overrides, hyper


def _resolve_arch(arch_overrides, input_dim, n_classes):
    if not arch_overrides:
        return ArchSpec.production(input_dim, n_classes)
    return ArchSpec.from_dict(
        {"input_dim": input_dim, "n_classes": n_classes, **arch_overrides}
    )


def _config_doc(config, arch=None, hyper=None):
    doc = config.to_dict()
    if arch is not None:
        stripped = {k: v for k, v in arch.to_dict().items()
                    if k not in ("input_dim", "n_classes")}
        doc["architecture"] = stripped
    if hyper is not None:
        doc["baseline"] = hyper.to_dict()
    return doc


def _echo(args, message):
    if not getattr(args, "quiet", False):
        print(message)


def _epoch_logger(args):
    def log(record):
        _echo(args, f"epoch {record.epoch}: ae={record.ae_loss:.6f} "
                    f"cls={record.cls_loss:.6f} adv={record.adv_loss:.6f} "
                    f"total={record.total:.6f} ({record.seconds:.1f}s)")
    return log


# ---------------------------------------------------------------- synth ----

def cmd_synth(args):
    modalities = None
    if args.modalities:
        modalities = []
        for item in args.modalities.split(","):
            name, _, width = item.partition(":")
            if not width:
                raise ConfigError(f"bad modality spec {item!r}; use name:width")
            modalities.append((name.strip(), int(width)))
    fields = {
        "n_drugs": args.n_drugs, "n_classes": args.n_classes, "n_pairs": args.n_pairs,
        "imbalance_exponent": args.imbalance_exponent, "bit_density": args.bit_density,
        "flip_prob": args.flip_prob, "seed": args.seed,
    }
    fields = {k: v for k, v in fields.items() if v is not None}
    if modalities:
        fields["modality_widths"] = tuple(modalities)
    config = SynthConfig(**fields)
    result = gen_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_drug_features(out / "features.jsonl", result.dataset.table)
    write_interactions(out / "interactions.tsv", result.dataset.pairs)
    with (out / "events.tsv").open("w") as fh:
        for event, name in sorted(event_names(config.n_classes).items()):
            fh.write(f"{event}\t{name}\n")
    runio.write_json(out / "config.json", config.to_dict())
    runio.write_manifest(out, "synth", config.to_dict(), config.seed,
                         files=["features.jsonl", "interactions.tsv",
                                "events.tsv", "config.json"])
    _echo(args, f"wrote {len(result.dataset.pairs)} pairs over "
                f"{config.n_classes} classes to {out}")
    return 0


# -------------------------------------------------------- validate-data ----

def cmd_validate_data(args):
    directory = Path(args.directory)
    if not directory.is_dir():
        raise ConfigError(f"not a directory: {directory}")
    manifest = runio.read_manifest(directory)
    if manifest and "files" in manifest:
        for name, digest in manifest["files"].items():
            path = directory / name
            if not path.exists():
                raise ConfigError(f"manifest lists {name} but it is missing")
            actual = runio.sha256_file(path)
            if actual != digest:
                raise ConfigError(
                    f"{name} does not match its manifest digest (corrupted?)"
                )
    dataset = load_dataset(directory)
    if not dataset.pairs:
        raise ConfigError("dataset has no interactions")
    _echo(args, f"ok: {len(dataset.table.drugs)} drugs, {len(dataset.pairs)} pairs, "
                f"{dataset.n_classes} classes, pair width {dataset.table.pair_width}")
    return 0


# ---------------------------------------------------------------- train ----

def cmd_train(args):
    config, arch_overrides, hyper = _load_run_config(args)
    dataset = load_dataset(args.data)
    arch = _resolve_arch(arch_overrides, dataset.table.pair_width, dataset.n_classes)
    split = stratified_kfold(dataset.pairs, config.k_folds, config.seed)
    if not 0 <= args.fold < split.k:
        raise ConfigError(f"--fold must be in [0, {split.k})")
    result = train_fold(config, arch, dataset, split, args.fold,
                        log_fn=_epoch_logger(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _config_doc(config, arch, hyper)
    runio.write_json(out / "config.json", doc)
    (out / "history.jsonl").write_text(result.history.to_jsonl())
    checkpoint.save_model(out, result.model, seed=config.seed,
                          config_hash=runio.config_hash(doc))
    (out / "metrics.json").write_text(result.report.to_json() + "\n")
    if args.aggregate_pairs:
        x_test, y_test, origins = _test_matrix_with_origins(dataset, split, args.fold)
        agg = evaluate_model(result.model, x_test, y_test, dataset.n_classes,
                             origins=origins, aggregate_pairs=True)
        (out / "metrics_pair_aggregated.json").write_text(agg.to_json() + "\n")
    runio.write_manifest(out, "train", doc, config.seed,
                         files=[p.name for p in sorted(out.iterdir())
                                if p.name != "manifest.json"])
    _echo(args, f"held-out fold {args.fold}: acc={result.report.acc:.4f} "
                f"f1_micro={result.report.f1_micro:.4f}")
    return 0


def _test_matrix_with_origins(dataset, split, fold):
    samples = expand_symmetric(split.test_samples(dataset.pairs, fold))
    x, y = pair_matrix(dataset.table, samples)
    origins = ["|".join(s.origin) for s in samples]
    return x, y, origins


# ------------------------------------------------------------------- cv ----

def cmd_cv(args):
    config, arch_overrides, hyper = _load_run_config(args)
    dataset = load_dataset(args.data)
    arch = _resolve_arch(arch_overrides, dataset.table.pair_width, dataset.n_classes)
    result = run_cv(config, arch, dataset, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _config_doc(config, arch, hyper)
    runio.write_json(out / "config.json", doc)
    for fold_result in result.folds:
        fold_dir = out / f"fold{fold_result.fold}"
        fold_dir.mkdir(exist_ok=True)
        (fold_dir / "history.jsonl").write_text(fold_result.history.to_jsonl())
        checkpoint.save_model(fold_dir, fold_result.model, seed=config.seed,
                              config_hash=runio.config_hash(doc))
        (fold_dir / "metrics.json").write_text(fold_result.report.to_json() + "\n")
    payload = {"aggregate": result.aggregate,
               "folds": [r.report.to_dict() for r in result.folds]}
    runio.write_json(out / "metrics.json", payload)
    (out / "table.tsv").write_text(
        render_metrics_table([("ADEP", result.aggregate)], args.averaging))
    runio.write_manifest(out, "cv", doc, config.seed)
    _echo(args, f"cv aggregate acc={result.aggregate['acc']:.4f} "
                f"f1_micro={result.aggregate['f1_micro']:.4f}")
    return 0


# --------------------------------------------------------------- ablate ----

def cmd_ablate(args):
    config, arch_overrides, hyper = _load_run_config(args)
    dataset = load_dataset(args.data)
    arch = _resolve_arch(arch_overrides, dataset.table.pair_width, dataset.n_classes)
    folds = None
    if args.folds:
        folds = sorted({int(f) for f in args.folds.split(",")})
    result = run_ablation(config, arch, dataset, folds=folds, baseline_hyper=hyper)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _config_doc(config, arch, hyper)
    runio.write_json(out / "config.json", doc)
    table = result.to_table(args.averaging)
    (out / "table.tsv").write_text(table)
    runio.write_json(out / "metrics.json", result.to_dict())
    runio.write_manifest(out, "ablate", doc, config.seed)
    _echo(args, table.rstrip("\n"))
    return 0


# ------------------------------------------------------------- baseline ----

def cmd_baseline(args):
    config, arch_overrides, hyper = _load_run_config(args)
    dataset = load_dataset(args.data)
    split = stratified_kfold(dataset.pairs, config.k_folds, config.seed)
    if not 0 <= args.fold < split.k:
        raise ConfigError(f"--fold must be in [0, {split.k})")
    x_train, y_train, x_test, y_test = fold_matrices(dataset, split, args.fold)
    if args.input == "latent":
        if not args.checkpoint:
            raise ConfigError("--input latent requires --checkpoint RUN_DIR")
        model, _ = checkpoint.load_model(args.checkpoint)
        if model.arch.input_dim != dataset.table.pair_width:
            raise ConfigError("checkpoint input width disagrees with the dataset")
        x_train = model.predict_latent(x_train)
        x_test = model.predict_latent(x_test)
    fitted = fit_baseline(args.model, x_train, y_train, dataset.n_classes,
                          hyper=hyper, seed=config.seed)
    _, probs = predict_baseline(fitted, x_test)
    from .metrics import evaluate_predictions

    report = evaluate_predictions(y_test, probs, dataset.n_classes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _config_doc(config, None, hyper)
    doc["baseline_model"] = args.model
    doc["baseline_input"] = args.input
    runio.write_json(out / "config.json", doc)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    save_baseline(out / "baseline.json", out / "baseline.bin", fitted)
    (out / "table.tsv").write_text(
        render_metrics_table([(args.model.upper(), report)], args.averaging))
    runio.write_manifest(out, "baseline", doc, config.seed)
    _echo(args, f"{args.model} fold {args.fold}: acc={report.acc:.4f} "
                f"f1_macro={report.f1_macro:.4f}")
    return 0


# ------------------------------------------------------------ gradcheck ----

def cmd_gradcheck(args):
    if args.arch != "mini":
        raise ConfigError("only --arch mini is supported for gradient checks")
    modes = ("joint", "alternating") if args.mode == "both" else (args.mode,)
    payload = {"tolerance": args.tolerance, "modes": {}}
    worst = 0.0
    for mode in modes:
        report = composite_grad_check(mode=mode, seed=args.seed,
                                      tolerance=args.tolerance)
        payload["modes"][mode] = report.to_dict()
        worst = max(worst, report.max_rel_error)
        _echo(args, f"{mode}: max rel error {report.max_rel_error:.3e} "
                    f"({'PASS' if report.passed else 'FAIL'})")
    payload["max_rel_error"] = worst
    payload["passed"] = worst < args.tolerance
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.json").write_text(text)
        runio.write_manifest(out, "gradcheck",
                             {"seed": args.seed, "tolerance": args.tolerance},
                             args.seed)
    else:
        sys.stdout.write(text)
    return 0 if payload["passed"] else 1


# --------------------------------------------------------------- report ----

def cmd_report(args):
    doc = _read_json_file(args.metrics, what="metrics")
    rows = []
    if "rows" in doc:  # ablation output
        rows = [(row["label"], row["aggregate"]) for row in doc["rows"]]
    elif "aggregate" in doc:  # cv output
        rows = [(args.name, doc["aggregate"])]
    else:  # single evaluation report
        rows = [(args.name, doc)]
    sys.stdout.write(render_metrics_table(rows, args.averaging))
    return 0


# ----------------------------------------------------------------- main ----

def build_parser():
    parser = Parser(prog="adep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True, out=True):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--json", action="store_true",
                       help="machine-readable errors on stderr")
        p.add_argument("--quiet", action="store_true")
        if data:
            p.add_argument("--data", required=True, help="dataset directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    def add_train_overrides(p):
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
        p.add_argument("--k-folds", dest="k_folds", type=int, default=None)
        p.add_argument("--adversarial-mode", dest="adversarial_mode",
                       choices=["joint", "alternating"], default=None)
        p.add_argument("--no-discriminator", dest="no_discriminator",
                       action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n-drugs", "--drugs", dest="n_drugs", type=int, default=None)
    p.add_argument("--n-classes", "--classes", dest="n_classes", type=int, default=None)
    p.add_argument("--n-pairs", "--pairs", dest="n_pairs", type=int, default=None)
    p.add_argument("--imbalance-exponent", dest="imbalance_exponent",
                   type=float, default=None)
    p.add_argument("--modalities", help="comma list of name:width")
    p.add_argument("--bit-density", dest="bit_density", type=float, default=None)
    p.add_argument("--flip-prob", dest="flip_prob", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate-data", help="validate a dataset directory")
    p.add_argument("directory")
    p.add_argument("--json", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("train", help="train one model on one fold split")
    add_common(p)
    add_train_overrides(p)
    p.add_argument("--fold", type=int, default=0, help="held-out fold")
    p.add_argument("--aggregate-pairs", action="store_true",
                   help="also report pair-aggregated metrics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    add_common(p)
    add_train_overrides(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--averaging", choices=["default", "micro", "macro"],
                   default="default")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("ablate", help="discriminator/classifier ablation table")
    add_common(p)
    add_train_overrides(p)
    p.add_argument("--folds", help="comma list of held-out folds (default all)")
    p.add_argument("--averaging", choices=["default", "micro", "macro"],
                   default="default")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("baseline", help="classic classifier on raw or latent input")
    add_common(p)
    p.add_argument("--model", required=True, choices=list(BASELINE_KINDS))
    p.add_argument("--input", choices=["raw", "latent"], default="raw")
    p.add_argument("--checkpoint", help="model run dir (for --input latent)")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--k-folds", dest="k_folds", type=int, default=None)
    p.add_argument("--averaging", choices=["default", "micro", "macro"],
                   default="default")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference check of the objective")
    p.add_argument("--arch", default="mini")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["joint", "alternating", "both"], default="both")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="render a metrics JSON as the standard table")
    p.add_argument("--metrics", required=True)
    p.add_argument("--name", default="ADEP")
    p.add_argument("--averaging", choices=["default", "micro", "macro"],
                   default="default")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def _emit_error(args, exc, parser=None):
    if getattr(args, "json", False):
        payload = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(payload) + "\n")
    else:
        sys.stderr.write(f"error: {exc}\n")
        if parser is not None:
            sys.stderr.write(parser.format_usage())


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    try:
        return args.func(args)
    except (DivergenceError, GradCheckError) as exc:
        _emit_error(args, exc)
        return 2
    except AdepError as exc:
        _emit_error(args, exc)
        return 1
    except FileNotFoundError as exc:
        _emit_error(args, exc)
        return 1
    except OSError as exc:
        _emit_error(args, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
