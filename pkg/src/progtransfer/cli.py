"""Command-line interface: ``progtransfer <command> [options]``.

Options come from, in increasing priority: built-in defaults, a TOML file
given with ``--config``, ``PROGTRANSFER_<KEY>`` environment variables, and
explicit flags. Machine-readable output goes to stdout, logs to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .executor import ExecutionError, execute
from .kb import KBError, dump_kb, load_kb
from .nn import NonFiniteError
from .program import ProgramSyntaxError, parse_program_text
from .pruning import PoolError, UnresolvedArgument, resolve_argument, search_space_size
from .sketch_parser import ParserModel
from .synthetic import SyntheticConfig, SyntheticDomains, generate_synthetic_domains
from .trainer import (
    DatasetError,
    TrainConfig,
    build_vocabulary,
    dump_dataset,
    evaluate,
    exact_match,
    finetune_hard_em,
    finetune_reinforce,
    format_report,
    load_dataset,
    new_model,
    prepare_model,
    pretrain,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("progtransfer")

ENV_PREFIX = "PROGTRANSFER_"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5
EXIT_EXECUTION = 6
EXIT_NUMERIC = 7


class ConfigError(ValueError):
    pass


class MissingFileError(FileNotFoundError):
    pass


_TRAIN_KEYS = set(TrainConfig.keys())
_SYN_KEYS = {f.name for f in dataclasses.fields(SyntheticConfig)}
_COMMON = {"workers"}
ALLOWED = {
    "gen": _SYN_KEYS | {"out"} | _COMMON,
    "pretrain": _TRAIN_KEYS | {"kb", "dataset"} | _COMMON,
    "finetune": _TRAIN_KEYS | {"kb", "dataset", "model"} | _COMMON,
    "eval": _TRAIN_KEYS | {"kb", "dataset", "model"} | _COMMON,
    "exec": {"kb", "program", "trace"} | _COMMON,
    "prune-stats": {"kb", "dataset"} | _COMMON,
    "transfer": _TRAIN_KEYS | _SYN_KEYS | {"data"} | _COMMON,
}
_PATH_DEFAULTS = {"kb": None, "dataset": None, "model": None, "out": None, "data": None,
                  "program": None, "trace": False, "workers": 0}


def _defaults(command: str) -> dict:
    out = {}
    train = TrainConfig().to_json()
    syn = SyntheticConfig().to_json()
    for key in ALLOWED[command]:
        if key in train:
            out[key] = train[key]
        elif key in syn:
            out[key] = syn[key]
        else:
            out[key] = _PATH_DEFAULTS[key]
    return out


def _coerce(key: str, value, default):
    """Convert an environment string (or TOML value) to the default's type."""
    if isinstance(value, str) and not isinstance(default, str) and default is not None:
        text = value.strip()
        try:
            if isinstance(default, bool):
                if text.lower() in ("1", "true", "yes", "on"):
                    return True
                if text.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(text)
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
            if isinstance(default, (list, tuple)):
                return [float(x) for x in text.split(",")]
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r} as {type(default).__name__}") from None
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def effective_config(command: str, args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    defaults = _defaults(command)
    cfg = dict(defaults)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise MissingFileError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        unknown = sorted(set(data) - set(defaults))
        if unknown:
            raise ConfigError(f"{path}: unknown keys for '{command}': {', '.join(unknown)}")
        for key, value in data.items():
            cfg[key] = _coerce(key, value, defaults[key])
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key in defaults:
            cfg[key] = _coerce(key, value, defaults[key])
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            cfg[key] = value
    return cfg


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return json.dumps(str(value), ensure_ascii=False)


def dump_toml(cfg: dict) -> str:
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in sorted(cfg.items()) if v is not None)


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: v for k, v in cfg.items() if k in _TRAIN_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def synthetic_config(cfg: dict) -> SyntheticConfig:
    try:
        return SyntheticConfig(**{k: v for k, v in cfg.items() if k in _SYN_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _need(cfg: dict, *keys) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _file(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"file not found: {path}")
    return path


def _run_dir(args, cfg: dict, command: str) -> Path:
    if args.run_dir:
        path = Path(args.run_dir)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = Path(args.runs_root) / f"{stamp}-seed{cfg.get('seed', 0)}-{command}"
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.toml").write_text(dump_toml(cfg), encoding="utf-8")
    log.info("run directory %s", path)
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, rows: list) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _workers(cfg: dict) -> int:
    return cfg.get("workers") or os.cpu_count() or 1


def _load_domains(data: Path) -> SyntheticDomains:
    return SyntheticDomains(load_kb(_file(data / "kb_source.json")), load_dataset(_file(data / "source.jsonl")),
                            load_kb(_file(data / "kb_target.json")),
                            load_dataset(_file(data / "target_train.jsonl")),
                            load_dataset(_file(data / "target_dev.jsonl")))


def write_domains(domains: SyntheticDomains, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dump_kb(domains.kb_source, out / "kb_source.json")
    dump_kb(domains.kb_target, out / "kb_target.json")
    dump_dataset(domains.source, out / "source.jsonl")
    dump_dataset(domains.target_train, out / "target_train.jsonl")
    dump_dataset(domains.target_dev, out / "target_dev.jsonl")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args, cfg) -> int:
    syn = synthetic_config(cfg)
    out = Path(cfg["out"]) if cfg.get("out") else _run_dir(args, cfg, "gen")
    domains = generate_synthetic_domains(syn)
    write_domains(domains, out)
    (out / "gen_config.toml").write_text(dump_toml(syn.to_json()), encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_pretrain(args, cfg) -> int:
    _need(cfg, "kb", "dataset")
    tc = train_config(cfg)
    kb = load_kb(_file(cfg["kb"]))
    data = load_dataset(_file(cfg["dataset"]))
    if not data:
        raise DatasetError("pretraining dataset is empty")
    run = _run_dir(args, cfg, "pretrain")
    model = new_model(build_vocabulary(data, [kb]), tc)
    history = pretrain(data, kb, tc, model)
    model.save(run / "model")
    _write_csv(run / "pretrain_loss.csv", history)
    metrics = {"train_exact_match": exact_match(data, kb, model, tc),
               "final_loss": history[-1]["loss"] if history else None}
    _write_json(run / "metrics.json", metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _load_model(cfg) -> ParserModel:
    path = _file(cfg["model"])
    return ParserModel.load(path)


def cmd_finetune(args, cfg) -> int:
    _need(cfg, "kb", "dataset", "model")
    tc = train_config(cfg)
    kb = load_kb(_file(cfg["kb"]))
    data = load_dataset(_file(cfg["dataset"]))
    if not data:
        raise DatasetError("finetuning dataset is empty")
    model = _load_model(cfg)
    run = _run_dir(args, cfg, "finetune")
    prepare_model(model, data, kb)
    fn = finetune_hard_em if tc.strategy == "hard-em" else finetune_reinforce
    history = fn(data, kb, tc, model)
    model.save(run / "model")
    _write_csv(run / "finetune_loss.csv", history)
    _write_json(run / "metrics.json", {"finetune": history})
    print(json.dumps(history[-1] if history else {}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    _need(cfg, "kb", "dataset", "model")
    tc = train_config(cfg)
    kb = load_kb(_file(cfg["kb"]))
    data = load_dataset(_file(cfg["dataset"]))
    if not data:
        raise DatasetError(f"dataset {cfg['dataset']} is empty; nothing to evaluate")
    model = _load_model(cfg)
    prepare_model(model, data, kb)
    report = evaluate(data, kb, model, tc, _workers(cfg))
    run = _run_dir(args, cfg, "eval")
    _write_json(run / "metrics.json", report["metrics"])
    with open(run / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for row in report["examples"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    table = format_report(report["metrics"])
    (run / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def cmd_exec(args, cfg) -> int:
    _need(cfg, "kb", "program")
    kb = load_kb(_file(cfg["kb"]))
    text = cfg["program"]
    if os.path.isfile(text):
        text = Path(text).read_text(encoding="utf-8")
    result = execute(parse_program_text(text), kb, trace=bool(cfg.get("trace")))
    for answer in result.answers:
        print(answer)
    for step in result.trace:
        print(f"[{step.position}] {step.function.name}({step.argument}) -> {step.output}", file=sys.stderr)
    return EXIT_OK


def cmd_prune_stats(args, cfg) -> int:
    _need(cfg, "kb", "dataset")
    kb = load_kb(_file(cfg["kb"]))
    data = load_dataset(_file(cfg["dataset"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "pruned", "unpruned", "ratio", "pruned_no_entity", "unpruned_no_entity", "fallbacks"])
    ratios = []
    for i, ex in enumerate(data):
        if ex.program is None:
            log.warning("skipping %s: no program", ex.qid or i)
            continue
        chosen = [(fn, resolve_argument(fn, arg, kb)) for fn, arg in ex.program]
        chosen = [(fn, ident) for fn, ident in chosen if ident is not None]
        size = search_space_size([fn for fn, _ in chosen], kb, [ident for _, ident in chosen])
        ratios.append(size.ratio)
        w.writerow([ex.qid or i, repr(size.pruned), repr(size.unpruned), repr(size.ratio),
                    repr(size.pruned_no_entity), repr(size.unpruned_no_entity), size.fallbacks])
    if not ratios:
        raise DatasetError("no examples with programs")
    w.writerow(["mean", "", "", repr(sum(ratios) / len(ratios)), "", "", ""])
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_transfer(args, cfg) -> int:
    from .pipeline import run_transfer

    tc = train_config(cfg)
    if cfg.get("data"):
        domains = _load_domains(Path(cfg["data"]))
    else:
        domains = generate_synthetic_domains(synthetic_config(cfg))
    run = _run_dir(args, cfg, "transfer")
    result = run_transfer(domains, tc, workers=_workers(cfg))
    result.model.save(run / "model")
    _write_csv(run / "pretrain_loss.csv", result.pretrain_history)
    _write_csv(run / "finetune_loss.csv", result.finetune_history)
    _write_json(run / "metrics.json", result.metrics)
    table = format_report(result.metrics)
    (run / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "pretrain": cmd_pretrain, "finetune": cmd_finetune, "eval": cmd_eval,
            "exec": cmd_exec, "prune-stats": cmd_prune_stats, "transfer": cmd_transfer}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _flag(p, name, kind=None, help=None, **kw):
    dest = name.replace("-", "_")
    if kind is bool:
        p.add_argument(f"--{name}", dest=dest, action="store_true", default=None, help=help)
    else:
        p.add_argument(f"--{name}", dest=dest, type=kind, default=None, help=help, **kw)


def _train_flags(p, finetune=False):
    g = p.add_argument_group("training")
    _flag(g, "seed", int)
    _flag(g, "epochs", int, "pretraining epochs")
    _flag(g, "batch-size", int)
    _flag(g, "lr-encoder", float, "learning rate of the embedding/encoder group")
    _flag(g, "lr-default", float, "learning rate of all other parameters")
    _flag(g, "weight-decay", float)
    _flag(g, "hidden", int, "hidden and vector size")
    _flag(g, "emb-dim", int)
    _flag(g, "beam", int, "sketch beam size for Hard-EM")
    _flag(g, "topk-args", int, "argument assignments kept per sketch")
    _flag(g, "eval-beam", int, "sketch beam size for evaluation")
    _flag(g, "no-ontology", bool, "disable ontology-guided pruning")
    _flag(g, "no-pretrain-args", bool, "pretrain the sketch parser only")
    if finetune:
        _flag(g, "finetune-epochs", int)
        _flag(g, "strategy", str, choices=["hard-em", "reinforce"])
        _flag(g, "reinforce-samples", int)
        _flag(g, "no-finetune", bool, "skip finetuning")
        _flag(g, "no-pretrain", bool, "skip pretraining")


def _syn_flags(p):
    g = p.add_argument_group("synthetic data")
    _flag(g, "source-size", int)
    _flag(g, "target-size", int)
    _flag(g, "dev-size", int)
    _flag(g, "concepts", int)
    _flag(g, "relations", int)
    _flag(g, "entities-per-concept", int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="progtransfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with option values")
    common.add_argument("--run-dir", help="output directory (default: <runs-root>/<timestamp>-seed<seed>-<cmd>)")
    common.add_argument("--runs-root", default="runs")
    common.add_argument("--workers", type=int, default=None, help="parallel workers (default: all cores)")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate synthetic source/target domains")
    _flag(p, "seed", int)
    _flag(p, "out", str, "output directory")
    _syn_flags(p)

    p = sub.add_parser("pretrain", parents=[common], help="supervised pretraining on question-program pairs")
    _flag(p, "kb", str)
    _flag(p, "dataset", str)
    _train_flags(p)

    p = sub.add_parser("finetune", parents=[common], help="finetune on question-answer pairs")
    _flag(p, "kb", str)
    _flag(p, "dataset", str)
    _flag(p, "model", str, "model directory")
    _train_flags(p, finetune=True)

    p = sub.add_parser("eval", parents=[common], help="F1, Hits@1 and top-k evaluation")
    _flag(p, "kb", str)
    _flag(p, "dataset", str)
    _flag(p, "model", str, "model directory")
    _train_flags(p)

    p = sub.add_parser("exec", parents=[common], help="execute one program")
    _flag(p, "kb", str)
    _flag(p, "program", str, "program text or a file containing it")
    _flag(p, "trace", bool, "print the step trace to stderr")

    p = sub.add_parser("prune-stats", parents=[common], help="search-space sizes with and without pruning (CSV)")
    _flag(p, "kb", str)
    _flag(p, "dataset", str)

    p = sub.add_parser("transfer", parents=[common], help="pretrain, finetune and evaluate in one run")
    _flag(p, "data", str, "directory written by 'gen' (default: generate in memory)")
    _train_flags(p, finetune=True)
    _syn_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = effective_config(args.command, args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (KBError, DatasetError, ProgramSyntaxError, UnresolvedArgument, PoolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExecutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXECUTION
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
