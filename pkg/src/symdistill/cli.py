"""Command-line entry point: ``symdistill <subcommand> ...``.

Exit codes: 0 ok, 1 I/O, 2 corpus or config problem, 3 empty supervision. Failures print a
single JSON object ``{"error", "message", "exit_code"}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from dataclasses import fields
from pathlib import Path

from symdistill.config import TrainConfig, dump_kv, read_kv
from symdistill.corpus import (
    ClassTooSmall,
    CoverageGap,
    FormatError,
    NoEditSite,
    generate_corpus,
    load_dataset,
    load_templates,
    save_dataset,
    stratified_split,
)
from symdistill.records import Dataset

EXIT_OK, EXIT_IO, EXIT_CORPUS, EXIT_EMPTY = 0, 1, 2, 3


class EmptySupervision(RuntimeError):
    pass


class EmptyRun(OSError):
    pass


def _exit_code(exc: BaseException) -> int:
    from symdistill.trainer import UnsupervisedExample

    if isinstance(exc, (EmptySupervision, UnsupervisedExample)):
        return EXIT_EMPTY
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (CoverageGap, ClassTooSmall, FormatError, NoEditSite, KeyError, ValueError)):
        return EXIT_CORPUS
    return EXIT_IO


def _fail(exc: BaseException) -> int:
    code = _exit_code(exc)
    message = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
    print(json.dumps({"error": type(exc).__name__, "message": message, "exit_code": code}), file=sys.stderr)
    return code


# --- shared helpers ----------------------------------------------------------

_FLAG_HELP = {
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "lr": "Adam learning rate",
    "seed": "initialisation and shuffle seed",
    "variant": "label_only or reasoning_distilled",
    "lambda_reason": "weight of the reasoning-tag loss",
    "embed_dim": "token embedding width",
    "hidden_dim": "hidden layer width",
    "max_len": "input sequence length (tokens)",
    "min_count": "minimum train-split frequency for a vocabulary token",
    "tag_threshold": "sigmoid threshold for predicting a tag",
    "set_semantics": "compare traces as sets for exact match (true/false)",
}


def _add_train_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value file; flags override it, it overrides defaults")
    for f in fields(TrainConfig):
        if f.name in skip:
            continue
        names = ["--" + f.name.replace("_", "-")]
        if f.name == "lambda_reason":
            names.append("--lambda")
        p.add_argument(*names, dest=f.name, default=None, metavar=f.type.upper() if isinstance(f.type, str) else None,
                       help=f"{_FLAG_HELP[f.name]} (default {f.default})")


def effective_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults, then the config file, then explicit flags."""
    config = TrainConfig()
    if getattr(args, "config", None):
        config = TrainConfig.from_mapping(read_kv(args.config), config)
    flags = {f.name: getattr(args, f.name) for f in fields(TrainConfig) if getattr(args, f.name, None) is not None}
    return TrainConfig.from_mapping(flags, config)


def _load_split(path, ratio: float, seed: int) -> Dataset:
    from symdistill.trainer import ensure_split

    return ensure_split(load_dataset(path), ratio, seed)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- subcommands ---------------------------------------------------------------

def cmd_inject(args) -> int:
    templates = load_templates(args.templates)
    dataset = generate_corpus(templates, args.per_class, args.seed)
    if args.split_ratio is not None:
        dataset = stratified_split(dataset, args.split_ratio, args.split_seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out)
    hist = Counter(e.gold_fix_type.value for e in dataset.examples)
    for name, n in sorted(hist.items()):
        print(f"{name:<18} {n}")
    print(f"{'total':<18} {len(dataset)}")
    return EXIT_OK


def cmd_teach(args) -> int:
    from symdistill.teacher import TeacherEndpointConfig, supervise_dataset

    dataset = load_dataset(args.input)
    endpoint = None
    if args.mode == "llm":
        if not args.endpoint:
            raise ValueError("--mode llm needs --endpoint")
        endpoint = TeacherEndpointConfig(url=args.endpoint, model=args.model, max_concurrency=args.concurrency)
    supervised, report = supervise_dataset(dataset, args.mode, endpoint)
    out = Path(args.out)
    report_path = out.with_name(out.name + ".filter.json")
    _write(report_path, json.dumps(report.to_json(), indent=2) + "\n")
    print(json.dumps({"total": report.total, "retained": report.retained, "rejected": report.to_json()["rejected"]}))
    if report.retained == 0:
        raise EmptySupervision(f"no example survived validation; see {report_path}")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(supervised, out)
    return EXIT_OK


def cmd_train(args) -> int:
    from symdistill.trainer import evaluate_result, fit, save_student, write_run

    config = effective_config(args)
    dataset = _load_split(args.data, args.split_ratio, args.split_seed)
    run_dir = Path(args.run_dir)
    result = fit(dataset, config)
    report = evaluate_result(result, dataset)
    write_run(run_dir, config, [json.dumps(entry) for entry in result.log], report)
    save_student(run_dir / "checkpoints" / "student.json", result)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    from symdistill.trainer import evaluate_result, load_student

    result = load_student(args.checkpoint)
    dataset = _load_split(args.data, args.split_ratio, args.split_seed)
    report = evaluate_result(result, dataset, args.split)
    if args.json:
        _write(Path(args.json), report.dumps())
    else:
        print(report.dumps(), end="")
        print()
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_pair(args) -> int:
    from symdistill.trainer import run_paired_experiment

    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"--seeds must be a comma-separated list of integers, got {args.seeds!r}") from None
    config = effective_config(args)
    dataset = _load_split(args.data, args.split_ratio, args.split_seed)
    report = run_paired_experiment(dataset, config, seeds, Path(args.run_dir))
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_json_distill(args) -> int:
    from symdistill.structured import DecoderConfig, run_structured_study

    changes = {k: getattr(args, k) for k in ("train_size", "epochs", "seed", "lr") if getattr(args, k) is not None}
    config = DecoderConfig(**changes)
    classifier = None if args.no_baseline else TrainConfig(seed=config.seed)
    study = run_structured_study(load_dataset(args.data), config, classifier)
    run_dir = Path(args.run_dir)
    _write(run_dir / "config", dump_kv(config.to_json()))
    _write(run_dir / "log.jsonl", "".join(json.dumps(e) + "\n" for e in study.log))
    _write(run_dir / "report.json", json.dumps(study.to_json(), indent=2) + "\n")
    _write(run_dir / "report.txt", study.to_text())
    print(study.to_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise EmptyRun(f"run directory not found: {run_dir}")
    found = sorted(p for p in [run_dir / "report.txt", *run_dir.glob("*/report.txt")] if p.is_file())
    if not found:
        raise EmptyRun(f"no report.txt under {run_dir}")
    sections = []
    for path in found:
        head = path.parent.name if path.parent != run_dir else run_dir.name
        body = [f"== {head} =="]
        cfg = path.parent / "config"
        if cfg.is_file():
            body.append("config: " + ", ".join(f"{k}={v}" for k, v in read_kv(cfg).items()))
        body.append(path.read_text(encoding="utf-8").rstrip("\n"))
        sections.append("\n".join(body))
    print("\n\n".join(sections))
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split-ratio", type=float, default=0.8,
                   help="train fraction used when the dataset has no split yet (default 0.8)")
    p.add_argument("--split-seed", type=int, default=1, help="seed for that split (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symdistill", description="Fix-type classification with symbolic reasoning distillation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("inject", help="generate a single-bug corpus from program templates")
    p.add_argument("--templates", metavar="PATH", help="template JSON file (default: bundled templates)")
    p.add_argument("--per-class", type=int, default=32, help="examples per fix type (default 32)")
    p.add_argument("--seed", type=int, default=42, help="corpus seed (default 42)")
    p.add_argument("--split-ratio", type=float, default=0.8,
                   help="assign a stratified train/validation split with this train fraction (default 0.8)")
    p.add_argument("--split-seed", type=int, default=1, help="seed for the split (default 1)")
    p.add_argument("--out", required=True, metavar="PATH", help="dataset JSONL to write")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("teach", help="attach teacher supervision and drop invalid examples")
    p.add_argument("--in", dest="input", required=True, metavar="PATH", help="dataset JSONL to read")
    p.add_argument("--mode", choices=("oracle", "llm"), default="oracle", help="teacher source (default oracle)")
    p.add_argument("--endpoint", metavar="URL", help="teacher HTTP endpoint (llm mode)")
    p.add_argument("--model", default="teacher", help="model name sent to the endpoint (default teacher)")
    p.add_argument("--concurrency", type=int, default=4, help="parallel requests in llm mode (default 4)")
    p.add_argument("--out", required=True, metavar="PATH",
                   help="supervised dataset JSONL; the filter report goes to PATH.filter.json")
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("train", help="train one student variant")
    p.add_argument("--data", required=True, metavar="PATH", help="supervised dataset JSONL")
    p.add_argument("--run-dir", default="runs/train", metavar="DIR", help="output directory (default runs/train)")
    _add_split_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True, metavar="PATH", help="student checkpoint")
    p.add_argument("--data", required=True, metavar="PATH", help="supervised dataset JSONL")
    p.add_argument("--split", default="validation", help="split to score (default validation)")
    p.add_argument("--json", metavar="PATH", help="write the report JSON here instead of stdout")
    _add_split_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pair", help="label-only vs. reasoning-distilled over several seeds")
    p.add_argument("--data", required=True, metavar="PATH", help="supervised dataset JSONL")
    p.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated seeds (default 1,2,3,4,5)")
    p.add_argument("--run-dir", default="runs/pair", metavar="DIR", help="output directory (default runs/pair)")
    _add_split_flags(p)
    _add_train_flags(p, skip=("seed", "variant"))
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("json-distill", help="structured JSON target study in the low-data regime")
    p.add_argument("--data", required=True, metavar="PATH", help="supervised dataset JSONL")
    p.add_argument("--train-size", type=int, help="decoder training examples (default 74)")
    p.add_argument("--epochs", type=int, help="decoder epochs (default 120)")
    p.add_argument("--lr", type=float, help="decoder learning rate (default 0.001)")
    p.add_argument("--seed", type=int, help="split, subsample and init seed (default 1)")
    p.add_argument("--no-baseline", action="store_true", help="skip the classification student baseline")
    p.add_argument("--run-dir", default="runs/json", metavar="DIR", help="output directory (default runs/json)")
    p.set_defaults(func=cmd_json_distill)

    p = sub.add_parser("report", help="print a combined summary of a run directory")
    p.add_argument("--run-dir", required=True, metavar="DIR", help="run directory (searched one level deep)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code plus JSON on stderr
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
