"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible with
or without ``-s``) before asserting. Criteria 6-10 share one set of training
runs per seed, computed once per session; expect the whole file to take
roughly a quarter of an hour on one core.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import os
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from progtransfer import load_kb, nn
from progtransfer.cli import main as cli_main
from progtransfer.executor import ExecutionError, brute_force_oracle, execute
from progtransfer.pipeline import pretrain_source, run_transfer
from progtransfer.pruning import PoolError, UnresolvedArgument, replay_program, resolve_argument, search_space_size
from progtransfer.randomgen import random_kb, random_program
from progtransfer.sketch_parser import sketch_nll
from progtransfer.synthetic import SyntheticConfig, generate_synthetic_domains
from progtransfer.trainer import TOPK, TrainConfig, batch_loss, build_vocabulary, exact_match, new_model, pretrain

from conftest import FIXTURE1, rel_error
from gradcheck import TOL, check_params, random_item, random_question, random_sketch, tiny_model

SEEDS = (0, 1, 2)
# transfer suite: default synthetic sizes, 30 pretraining epochs, 8 finetuning epochs
SUITE_TRAIN = dict(epochs=30, finetune_epochs=8)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)
        assert ok, f"criterion {n}: {detail}"

    return emit


def _outcome(program, kb):
    try:
        return execute(program, kb)
    except ExecutionError as exc:
        return type(exc)


def _oracle(program, kb):
    try:
        return brute_force_oracle(program, kb)
    except ExecutionError as exc:
        return type(exc)


def test_criterion_01_executor_matches_oracle(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    pairs = mismatches = 0
    while pairs < 10_000:
        kb = random_kb(rng, max_entities=50)
        for _ in range(20):
            program = random_program(kb, rng, max_len=8)
            assert len(program) <= 8
            pairs += 1
            if _outcome(program, kb) != _oracle(program, kb):
                mismatches += 1
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 60,
           f"{pairs} pairs, {mismatches} mismatches, {elapsed:.1f}s (limit 60s)")


def test_criterion_02_pruning_soundness(report):
    domains = generate_synthetic_domains(SyntheticConfig(seed=0, source_size=1000, target_size=1, dev_size=1))
    programs = [ex.program for ex in domains.source]
    fallbacks = outside = 0
    for program in programs:
        try:
            _, pools = replay_program(program, domains.kb_source)
        except (PoolError, UnresolvedArgument):
            outside += 1
            continue
        fallbacks += pools.fallbacks
    report(2, len(programs) == 1000 and fallbacks == 0 and outside == 0,
           f"{len(programs)} gold programs, {fallbacks} fallback events, {outside} arguments outside their pool")


def test_criterion_03_search_space_reduction(report):
    cfg = SyntheticConfig(seed=0, relations=50, concepts=10, source_size=300, target_size=1, dev_size=1,
                          mix=(0.5, 0.5, 0, 0, 0))  # one- and two-hop composition only
    domains = generate_synthetic_domains(cfg)
    kb = domains.kb_source
    ratios = []
    for ex in domains.source:
        chosen = [(fn, resolve_argument(fn, arg, kb)) for fn, arg in ex.program]
        chosen = [(fn, ident) for fn, ident in chosen if ident is not None]
        ratios.append(search_space_size([fn for fn, _ in chosen], kb, [i for _, i in chosen]).ratio)
    mean = float(np.mean(ratios))
    ok = len(kb.relation_labels) >= 50 and len(kb.concept_labels) >= 10 and mean <= 0.10
    report(3, ok, f"{len(kb.relation_labels)} relations, {len(kb.concept_labels)} concepts, "
                  f"{len(ratios)} questions, mean pruned/unpruned ratio {mean:.4f} (bound 0.10)")


def _worst(errs, into, key):
    into[key] = max(into.get(key, 0.0), errs if np.isscalar(errs) else max(errs.values()))


def test_criterion_04_gradient_checks(report):
    rng = np.random.default_rng(4)
    kb = load_kb(FIXTURE1)
    worst = {}
    for _ in range(100):
        # GRU cell
        din, H, B = (int(v) for v in rng.integers(1, 5, 3))
        Wx, Uh, b = rng.normal(0, 0.5, (din, 3 * H)), rng.normal(0, 0.5, (H, 3 * H)), rng.normal(0, 0.5, 3 * H)
        x, h, w = rng.normal(size=(B, din)), rng.normal(size=(B, H)), rng.normal(size=(B, H))
        loss = lambda: float(np.sum(w * nn.gru_forward(x, h, Wx, Uh, b)[0]))  # noqa: E731
        _, cache = nn.gru_forward(x, h, Wx, Uh, b)
        grads = {"Wx": np.zeros_like(Wx), "Uh": np.zeros_like(Uh), "b": np.zeros_like(b)}
        dx, dh = nn.gru_backward(w, cache, Wx, Uh, grads, "")
        for a, t in ((dx, x), (dh, h), (grads["Wx"], Wx), (grads["Uh"], Uh), (grads["b"], b)):
            _worst(rel_error(a, nn.numerical_gradient(loss, t, 1e-5)), worst, "gru")

        # dot-product attention
        T, d = (int(v) for v in rng.integers(1, 5, 2))
        key, mem = rng.normal(size=(B, d)), rng.normal(size=(B, T, d))
        mask = rng.random((B, T)) < 0.7
        mask[:, 0] = True
        wc = rng.normal(size=(B, d))
        loss = lambda: float(np.sum(wc * nn.attention_forward(key, mem, mask)[1]))  # noqa: E731
        _, _, acache = nn.attention_forward(key, mem, mask)
        dkey, dmem = nn.attention_backward(wc, acache)
        _worst(rel_error(dkey, nn.numerical_gradient(loss, key, 1e-5)), worst, "attention")
        _worst(rel_error(dmem, nn.numerical_gradient(loss, mem, 1e-5)), worst, "attention")

        # softmax cross-entropy
        N, K = (int(v) for v in rng.integers(1, 6, 2))
        logits, gold = rng.normal(size=(N, K)) * 2, rng.integers(0, K, N)
        loss = lambda: nn.softmax_xent(logits, gold)[0]  # noqa: E731
        _worst(rel_error(nn.softmax_xent(logits, gold)[1], nn.numerical_gradient(loss, logits, 1e-5)),
               worst, "softmax_xent")

        # full sketch parser and argument parser
        m = tiny_model(rng)
        q, sketch = random_question(rng), random_sketch(kb, rng)
        grads = m.new_grads()
        sketch_nll(q, sketch, m, grads)
        _worst(check_params(m, lambda: sketch_nll(q, sketch, m), grads, rng), worst, "sketch_nll")
        items = [random_item(kb, rng) for _ in range(int(rng.integers(1, 4)))]
        grads = m.new_grads()
        batch_loss(m, kb, items, grads)
        _worst(check_params(m, lambda: sum(batch_loss(m, kb, items)), grads, rng), worst, "sketch+argument loss")
    ok = max(worst.values()) < TOL
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(4, ok, f"100 instances each, worst relative error: {detail} (tolerance {TOL:g})")


def test_criterion_05_overfit(report):
    domains = generate_synthetic_domains(SyntheticConfig(seed=0, source_size=200, target_size=1, dev_size=1))
    cfg = TrainConfig(epochs=300, hidden=64, emb_dim=64, seed=0)
    model = new_model(build_vocabulary(domains.source, [domains.kb_source]), cfg)
    state = {"em": {"sketch": 0.0, "program": 0.0}, "epochs": 0}
    start = time.perf_counter()

    def check(epoch, record):
        state["epochs"] = epoch
        if epoch % 10 == 0 or epoch == cfg.epochs:
            state["em"] = exact_match(domains.source, domains.kb_source, model, cfg)
            return state["em"]["sketch"] >= 0.95 and state["em"]["program"] >= 0.90
        return False

    pretrain(domains.source, domains.kb_source, cfg, model, check)
    elapsed = time.perf_counter() - start
    em = state["em"]
    ok = em["sketch"] >= 0.95 and em["program"] >= 0.90 and state["epochs"] <= 300 and elapsed < 600
    report(5, ok, f"sketch EM {em['sketch']:.3f}, program EM {em['program']:.3f} after {state['epochs']} epochs, "
                  f"{elapsed:.0f}s")


@pytest.fixture(scope="session")
def suite():
    """Per seed: one pretrained model shared by the pretrained-only, Hard-EM and REINFORCE runs."""
    out = {}
    workers = os.cpu_count() or 1
    for seed in SEEDS:
        domains = generate_synthetic_domains(SyntheticConfig(seed=seed))
        base = TrainConfig(seed=seed, **SUITE_TRAIN)
        pre, _ = pretrain_source(domains, base)
        out[seed] = {
            "pretrained": run_transfer(domains, replace(base, no_finetune=True), pre, workers),
            "hard-em": run_transfer(domains, base, pre, workers),
            "reinforce": run_transfer(domains, replace(base, strategy="reinforce"), pre, workers),
            "no-pretrain": run_transfer(domains, replace(base, no_pretrain=True), None, workers),
            "no-ontology": run_transfer(domains, replace(base, no_ontology=True), None, workers),
        }
    return out


def _mean_f1(suite, variant):
    return float(np.mean([suite[s][variant].metrics["f1"] for s in SEEDS]))


def _per_seed(suite, variant):
    return "/".join(f"{suite[s][variant].metrics['f1']:.3f}" for s in SEEDS)


def test_criterion_06_finetuning_helps(suite, report):
    gap = _mean_f1(suite, "hard-em") - _mean_f1(suite, "pretrained")
    report(6, gap >= 0.15, f"Hard-EM F1 {_per_seed(suite, 'hard-em')} vs pretrained-only "
                           f"{_per_seed(suite, 'pretrained')}, mean gap {100 * gap:.1f} points (need 15)")


def test_criterion_07_pretraining_helps(suite, report):
    gap = _mean_f1(suite, "hard-em") - _mean_f1(suite, "no-pretrain")
    report(7, gap >= 0.20, f"Hard-EM F1 {_per_seed(suite, 'hard-em')} vs random init "
                           f"{_per_seed(suite, 'no-pretrain')}, mean gap {100 * gap:.1f} points (need 20)")


def test_criterion_08_ontology_helps(suite, report):
    gap = _mean_f1(suite, "hard-em") - _mean_f1(suite, "no-ontology")
    report(8, gap >= 0.05, f"Hard-EM F1 {_per_seed(suite, 'hard-em')} vs no ontology "
                           f"{_per_seed(suite, 'no-ontology')}, mean gap {100 * gap:.1f} points (need 5)")


def test_criterion_09_topk_monotone(suite, report):
    runs = [r for per_seed in suite.values() for r in per_seed.values()]
    monotone = all(
        all(row["best"][a] <= row["best"][b] for row in r.examples for a, b in zip(TOPK, TOPK[1:]))
        and all(r.metrics["topk_f1"][str(a)] <= r.metrics["topk_f1"][str(b)] for a, b in zip(TOPK, TOPK[1:]))
        for r in runs)
    strict = all(suite[s]["hard-em"].metrics["topk_f1"]["10"] > suite[s]["hard-em"].metrics["topk_f1"]["1"]
                 for s in SEEDS)
    tops = "; ".join("/".join(f"{suite[s]['hard-em'].metrics['topk_f1'][str(k)]:.3f}" for k in TOPK) for s in SEEDS)
    report(9, monotone and strict, f"{len(runs)} runs monotone: {monotone}; Hard-EM top-1/2/5/10 per seed: {tops}")


def test_criterion_10_hard_em_beats_reinforce(suite, report):
    h, r = _mean_f1(suite, "hard-em"), _mean_f1(suite, "reinforce")
    report(10, h >= r, f"Hard-EM mean F1 {h:.3f} ({_per_seed(suite, 'hard-em')}) vs REINFORCE {r:.3f} "
                       f"({_per_seed(suite, 'reinforce')}), 15 executions per example each")


def test_criterion_11_cli_determinism(tmp_path, report, capsys):
    data = tmp_path / "data"
    small = ["--source-size", "40", "--target-size", "16", "--dev-size", "8", "--concepts", "4",
             "--relations", "8", "--entities-per-concept", "4"]
    assert cli_main(["gen", "--seed", "5", "--out", str(data)] + small) == 0
    argv = ["transfer", "--data", str(data), "--seed", "5", "--epochs", "4", "--finetune-epochs", "2",
            "--hidden", "16", "--emb-dim", "16", "--workers", "1"]
    runs = []
    for name in ("a", "b"):
        assert cli_main(argv + ["--run-dir", str(tmp_path / name)]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir()) if p.is_file()})
    runs.append({})
    assert cli_main(["transfer", "--config", str(tmp_path / "a" / "config.toml"),
                     "--run-dir", str(tmp_path / "c")]) == 0
    runs[2] = {p.name: p.read_bytes() for p in sorted((tmp_path / "c").iterdir()) if p.is_file()}
    capsys.readouterr()
    files = sorted(runs[0])
    same = runs[0] == runs[1] == runs[2]
    report(11, same and "metrics.json" in files,
           f"3 runs (2 with flags, 1 from the echoed config) byte-identical over {', '.join(files)}: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
