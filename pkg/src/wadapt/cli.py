"""Command-line interface.

Subcommands: gen-data, train-source, adapt, evaluate, divergence, plot.
Configuration precedence is flags > config file (JSON, one section per
stage) > built-in defaults; every command writes the effective configuration
it ran with (run_config.json) next to its outputs so a run can be replayed.

Exit codes: 0 ok, 2 configuration/usage error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

from . import adapt_gan, adapt_wgan
from .checkpoint import load_network, save_network
from .data import ShiftConfig, generate_synthetic, load_manifest, save_dataset
from .divergence import DivergenceConfig, divergence_block
from .errors import ConfigError, DataError, InputError, NumericError
from .evaluation import EvalReport, comparison_table, evaluate, save_confusion_csv
from .source import SourceConfig, train_source
from .types import AdaptConfig, config_from_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SOURCE_EXTRACTOR_FILE = "extractor_source.udaw"
CLASSIFIER_FILE = "classifier.udaw"
TARGET_EXTRACTOR_FILE = "extractor_target.udaw"
HISTORY_FILE = "history.jsonl"
RUN_CONFIG_FILE = "run_config.json"


def _verbose() -> bool:
    return os.environ.get("WADAPT_VERBOSE", "1") not in ("0", "false", "no")


def _say(*parts):
    if _verbose():
        print(*parts)


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        loaded = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return loaded


def _merge_section(cls, file_cfg: dict, section: str, flag_values: dict, seed):
    """defaults < config-file section < explicit flags; seed threads through."""
    merged = dict(file_cfg.get(section, {}))
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    if seed is not None:
        merged["seed"] = seed
    elif "seed" not in merged and "seed" in file_cfg:
        merged["seed"] = file_cfg["seed"]
    return config_from_dict(cls, merged)


def _write_run_config(out_dir: Path, command: str, config_obj, extra: dict | None = None):
    payload = {"command": command, "config": asdict(config_obj)}
    if extra:
        payload.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_CONFIG_FILE).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _say(f"effective config: {json.dumps(payload, sort_keys=True)}")


def _write_history(path: Path, history: dict):
    header = {"type": "header", **{k: v for k, v in history.items() if k != "epochs"}}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in history["epochs"]:
            fh.write(json.dumps({"type": "epoch", **record}, sort_keys=True) + "\n")


def _require_dataset(data_dir) -> "object":
    manifest = Path(data_dir) / "manifest.csv"
    return load_manifest(manifest)


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_gen_data(args) -> int:
    file_cfg = _load_config_file(args.config)
    flags = {
        "num_classes": args.num_classes,
        "mel_bands": args.mel_bands,
        "time_frames": args.time_frames,
        "samples_per_class_source": args.samples_per_class_source,
        "samples_per_class_target": args.samples_per_class_target,
        "gain_curve_severity": args.severity,
        "noise_std": args.noise_std,
        "offset": args.offset,
    }
    config = _merge_section(ShiftConfig, file_cfg, "shift", flags, args.seed)
    out_dir = Path(args.out)
    dataset = generate_synthetic(config)
    manifest = save_dataset(dataset, out_dir)
    _write_run_config(out_dir, "gen-data", config)
    _say(f"wrote {manifest} ({dataset.num_classes} classes, "
         f"{len(dataset.source.train)}+{len(dataset.source.valid)}+{len(dataset.source.test)} source, "
         f"{len(dataset.target.train)}+{len(dataset.target.valid)}+{len(dataset.target.test)} target)")
    return EXIT_OK


def cmd_train_source(args) -> int:
    file_cfg = _load_config_file(args.config)
    flags = {
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "extractor": args.extractor,
    }
    config = _merge_section(SourceConfig, file_cfg, "source", flags, args.seed)
    dataset = _require_dataset(args.data)
    classifier, extractor, history = train_source(dataset, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_network(extractor, out_dir / SOURCE_EXTRACTOR_FILE)
    save_network(classifier, out_dir / CLASSIFIER_FILE)
    source_history = {
        "stage": "source",
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "best_epoch": history["best_epoch"],
        "best_accuracy": history["best_accuracy"],
        "seed": config.seed,
        "epochs": history["epochs"],
    }
    _write_history(out_dir / HISTORY_FILE, source_history)
    _write_run_config(out_dir, "train-source", config,
                      {"best_epoch": history["best_epoch"],
                       "best_accuracy": history["best_accuracy"]})
    _say(f"best validation accuracy {history['best_accuracy']:.4f} "
         f"at epoch {history['best_epoch']}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    file_cfg = _load_config_file(args.config)
    flags = {
        "learning_rate": args.learning_rate,
        "clip_c": args.clip_c,
        "batch_size": args.batch_size,
        "n_d": args.n_d,
        "max_epochs": args.max_epochs,
        "saturation_window": args.saturation_window,
        "saturation_tol": args.saturation_tol,
    }
    config = _merge_section(AdaptConfig, file_cfg, "adapt", flags, args.seed)
    dataset = _require_dataset(args.data)
    src_dir = Path(args.source_ckpt)
    extractor = load_network(src_dir / SOURCE_EXTRACTOR_FILE)
    classifier = load_network(src_dir / CLASSIFIER_FILE)

    adapt_fn = {"wgan": adapt_wgan.adapt, "gan": adapt_gan.adapt_gan}[args.method]
    adapted, history = adapt_fn(extractor, classifier, dataset.source.train,
                                dataset.target.train.unlabeled(), config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_network(adapted, out_dir / TARGET_EXTRACTOR_FILE)
    # make the output dir self-contained for evaluate/divergence
    shutil.copyfile(src_dir / SOURCE_EXTRACTOR_FILE, out_dir / SOURCE_EXTRACTOR_FILE)
    shutil.copyfile(src_dir / CLASSIFIER_FILE, out_dir / CLASSIFIER_FILE)
    _write_history(out_dir / HISTORY_FILE, history)
    _write_run_config(out_dir, "adapt", config, {"method": args.method})
    _say(f"{args.method} adaptation stopped at epoch {history['stopped_epoch']} "
         f"({history['stop_reason']}); critic updates {history['critic_updates']}, "
         f"generator updates {history['generator_updates']}")
    return EXIT_OK


def _classify_ckpt_dir(path: Path):
    """Returns (kind, paths) where kind is 'adapted' or 'source'."""
    if (path / TARGET_EXTRACTOR_FILE).exists():
        run_cfg = path / RUN_CONFIG_FILE
        method = "wgan"
        if run_cfg.exists():
            method = json.loads(run_cfg.read_text()).get("method", "wgan")
        return "adapted", method
    if (path / SOURCE_EXTRACTOR_FILE).exists():
        return "source", None
    raise DataError(f"{path}: no checkpoints found (expected {SOURCE_EXTRACTOR_FILE} "
                    f"or {TARGET_EXTRACTOR_FILE})")


def cmd_evaluate(args) -> int:
    file_cfg = _load_config_file(args.config)
    div_config = _merge_section(DivergenceConfig, file_cfg, "divergence", {}, args.seed)
    dataset = _require_dataset(args.data)

    source_dir = None
    adapted_dirs = {}
    for d in args.ckpts:
        path = Path(d)
        kind, method = _classify_ckpt_dir(path)
        if kind == "source" and source_dir is None:
            source_dir = path
        elif kind == "adapted":
            if method in adapted_dirs:
                raise ConfigError(f"duplicate adapted checkpoint for method {method!r}")
            adapted_dirs[method] = path
            if source_dir is None:
                source_dir = path  # adapt dirs are self-contained
    if source_dir is None:
        raise ConfigError("evaluate needs at least one checkpoint directory with "
                          "a source extractor")

    extractor = load_network(source_dir / SOURCE_EXTRACTOR_FILE)
    classifier = load_network(source_dir / CLASSIFIER_FILE)
    report = EvalReport(seed=div_config.seed)
    report.config = {
        "data": str(args.data),
        "ckpts": [str(d) for d in args.ckpts],
        "divergence": asdict(div_config),
    }
    report.add_result("non_adapted", "source", evaluate(extractor, classifier, dataset.source.test))
    report.add_result("non_adapted", "target", evaluate(extractor, classifier, dataset.target.test))

    for method, path in sorted(adapted_dirs.items()):
        adapted = load_network(path / TARGET_EXTRACTOR_FILE)
        key = f"adapted_{method}"
        report.add_result(key, "source", evaluate(adapted, classifier, dataset.source.test))
        report.add_result(key, "target", evaluate(adapted, classifier, dataset.target.test))
        if method == "wgan":
            report.divergence = divergence_block(
                extractor, adapted, dataset.source.test.features,
                dataset.target.train.features, div_config)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json())
    for model, domains in report.models.items():
        for domain, res in domains.items():
            save_confusion_csv(res["confusion_normalized"],
                               out_path.parent / f"confusion_{model}_{domain}.csv")

    table, _ = comparison_table({m: {d: r["micro_accuracy"] for d, r in doms.items()}
                                 for m, doms in report.models.items()})
    print(table)
    non = report.models["non_adapted"]
    print(f"non-adapted source accuracy: {non['source']['micro_accuracy']:.4f}")
    _say(f"wrote {out_path}")
    return EXIT_OK


def cmd_divergence(args) -> int:
    file_cfg = _load_config_file(args.config)
    div_config = _merge_section(DivergenceConfig, file_cfg, "divergence", {}, args.seed)
    dataset = _require_dataset(args.data)
    ck = Path(args.ckpts)
    extractor = load_network(ck / SOURCE_EXTRACTOR_FILE)
    adapted_path = ck / TARGET_EXTRACTOR_FILE
    if not adapted_path.exists():
        raise DataError(f"{ck}: divergence needs an adapted checkpoint "
                        f"({TARGET_EXTRACTOR_FILE})")
    adapted = load_network(adapted_path)
    block = divergence_block(extractor, adapted, dataset.source.test.features,
                             dataset.target.train.features, div_config)
    payload = {"divergence": block, "config": asdict(div_config), "ckpts": str(args.ckpts)}
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")))
    print(json.dumps(block, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_path = Path(args.report)
    if not report_path.exists():
        raise DataError(f"report not found: {report_path}")
    report = EvalReport.from_json(report_path.read_text())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for model, domains in report.models.items():
        for domain, res in domains.items():
            fig, ax = plt.subplots(figsize=(5, 4.2))
            mat = res["confusion_normalized"]
            im = ax.imshow(mat, vmin=0.0, vmax=1.0, cmap="viridis")
            ax.set_title(f"{model} / {domain}")
            ax.set_xlabel("predicted class")
            ax.set_ylabel("true class")
            fig.colorbar(im, ax=ax)
            path = out_dir / f"confusion_{model}_{domain}.png"
            fig.savefig(path, dpi=120, bbox_inches="tight")
            plt.close(fig)
            written.append(path)

    for ckpt_dir in report.config.get("ckpts", []):
        hist_path = Path(ckpt_dir) / HISTORY_FILE
        if not hist_path.exists():
            continue
        lines = [json.loads(line) for line in hist_path.read_text().splitlines() if line]
        header = lines[0]
        epochs = [rec for rec in lines[1:] if rec.get("type") == "epoch"]
        if not epochs or "critic_loss" not in epochs[0]:
            continue
        arm = header.get("arm", "adapt")
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [rec["epoch"] for rec in epochs]
        for key in ("critic_loss", "generator_loss", "source_ce", "target_term"):
            ax.plot(xs, [rec[key] for rec in epochs], label=key)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss value")
        ax.set_title(f"{arm} adaptation history")
        ax.legend()
        path = out_dir / f"history_{arm}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    _say(f"wrote {len(written)} figures to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wadapt",
        description="Wasserstein-adversarial unsupervised domain adaptation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="run seed (overrides config file)")

    p = sub.add_parser("gen-data", help="generate the synthetic device-shift dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--mel-bands", type=int)
    p.add_argument("--time-frames", type=int)
    p.add_argument("--samples-per-class-source", type=int)
    p.add_argument("--samples-per-class-target", type=int)
    p.add_argument("--severity", type=float, help="device-shift severity (0 = no shift)")
    p.add_argument("--noise-std", type=float)
    p.add_argument("--offset", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-source", help="stage 1: supervised source training")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (with manifest.csv)")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--extractor", choices=["toy", "full"])
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("adapt", help="stage 2: adversarial adaptation to the target domain")
    common(p)
    p.add_argument("--method", required=True, choices=["wgan", "gan"])
    p.add_argument("--data", required=True)
    p.add_argument("--source-ckpt", required=True, help="directory from train-source")
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--clip-c", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--n-d", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--saturation-window", type=int)
    p.add_argument("--saturation-tol", type=float)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("evaluate", help="build an evaluation report and comparison table")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpts", required=True, nargs="+",
                   help="checkpoint directories (source and/or adapted)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("divergence", help="divergence estimates before/after adaptation")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpts", required=True, help="adapted checkpoint directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("plot", help="confusion heat-maps and adaptation history curves")
    common(p)
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    sys.exit(main())
