"""End-to-end transfer runs: pretrain on the source, finetune and evaluate on the target."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .sketch_parser import ParserModel
from .synthetic import SyntheticDomains
from .trainer import (
    TrainConfig,
    build_vocabulary,
    evaluate,
    finetune_hard_em,
    finetune_reinforce,
    new_model,
    prepare_model,
    pretrain,
)

log = logging.getLogger(__name__)

__all__ = ["RunResult", "pretrain_source", "run_transfer"]


@dataclass
class RunResult:
    model: ParserModel
    metrics: dict
    examples: list
    pretrain_history: list = field(default_factory=list)
    finetune_history: list = field(default_factory=list)


def pretrain_source(domains: SyntheticDomains, config: TrainConfig,
                    on_epoch: Callable | None = None) -> tuple:
    """Fresh model over the source vocabulary, pretrained unless ``no_pretrain``.

    Only the source KB and source examples are read.
    """
    model = new_model(build_vocabulary(domains.source, [domains.kb_source]), config)
    history = []
    if not config.no_pretrain:
        history = pretrain(domains.source, domains.kb_source, config, model, on_epoch)
    return model, history


def run_transfer(domains: SyntheticDomains, config: TrainConfig, pretrained: ParserModel | None = None,
                 workers: int = 1, on_pretrain: Callable | None = None,
                 on_finetune: Callable | None = None) -> RunResult:
    """Run the configured variant and evaluate on the target dev split.

    ``pretrained`` (cloned, not modified) skips the pretraining stage.
    """
    history = []
    if pretrained is not None:
        model = pretrained.clone()
    else:
        model, history = pretrain_source(domains, config, on_pretrain)
    prepare_model(model, domains.target_train + domains.target_dev, domains.kb_target)
    ft = []
    if not config.no_finetune and config.finetune_epochs:
        fn = finetune_hard_em if config.strategy == "hard-em" else finetune_reinforce
        ft = fn(domains.target_train, domains.kb_target, config, model, on_finetune)
    report = evaluate(domains.target_dev, domains.kb_target, model, config, workers)
    return RunResult(model, report["metrics"], report["examples"], history, ft)
