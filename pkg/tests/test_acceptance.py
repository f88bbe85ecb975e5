"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch

import oracles
from conftest import ACCEPTANCE_LINES, randomize, tiny_encoder_config
from gradcheck import max_relative_error
from eventret.annotation import (ED, QD, LabeledPair, RawTriplet, ScorerSpec, StubLLMClient, annotate, cohen_kappa,
                                 prompt_hash, render_prompt, restore_quadruplets, split_and_cache)
from eventret.annotation.scorers import make_scorer
from eventret.encoder import HiddenStates, encode, encoder_layer, init_encoder, init_encoder_layer, init_mlp, mlp
from eventret.experiments import ablation_seed
from eventret.fusion import (FusionConfig, cosine, cross_attention, ffn_block, fuse, init_cross_attention,
                             init_ffn_block, init_fusion)
from eventret.losses import contrastive_loss, total_loss, triplet_loss
from eventret.metrics import map_at_k, mrr, recall_at_k
from eventret.mining import MemoryBank
from eventret.params import ParameterStore
from eventret.training import TaskKind, select_task
from eventret.vocab import TokenBatch
from pipeline import run_pipeline

HERE = Path(__file__).parent
INSTANCES = 5
GRAD_TOL = 1e-4


def report(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1. gradients

def _store(init, seed: int) -> ParameterStore:
    s = ParameterStore()
    init(s, torch.Generator().manual_seed(seed))
    return randomize(s, seed)


def _weights(seed: int, *shape) -> torch.Tensor:
    return torch.randn(*shape, generator=torch.Generator().manual_seed(10_000 + seed), dtype=torch.float64)


def _encoder_layer_case(i: int) -> float:
    cfg = tiny_encoder_config(hidden_dim=4, num_heads=2, ffn_dim=4)
    p = _store(lambda s, g: init_encoder_layer(s, "L", cfg, g), i)
    x = _weights(i, 1, 3, 4)
    mask = torch.tensor([[True, True, False]])
    r = _weights(i + 1, 1, 3, 4)
    tensors = [t for _, t in p.items()]
    sizes = [t.numel() for t in tensors]
    total = sum(sizes)
    # 136 scalars: each instance checks a 64-entry window of a fixed permutation; the windows cover all entries
    perm = np.random.default_rng(0).permutation(total)
    window = {int(perm[(i * 28 + j) % total]) for j in range(64)}
    entries, start = {}, 0
    for n, size in enumerate(sizes):
        entries[n] = [e - start for e in sorted(window) if start <= e < start + size]
        start += size
    return max_relative_error(lambda: (encoder_layer(x, mask, p, "L", 2)[:, :2] * r[:, :2]).sum(), tensors, entries)


def _cross_attention_case(i: int) -> float:
    p = _store(lambda s, g: init_cross_attention(s, "ca", 4, g), i)
    tgt = HiddenStates(_weights(i, 1, 3, 4), torch.ones(1, 3, dtype=torch.bool))
    src = HiddenStates(_weights(i + 1, 1, 4, 4), torch.tensor([[True, True, True, False]]))
    r = _weights(i + 2, 1, 4)
    return max_relative_error(lambda: (cross_attention(tgt, src, p, "ca", 2) * r).sum(), [t for _, t in p.items()])


def _ffn_case(i: int) -> float:
    p = _store(lambda s, g: init_ffn_block(s, "f", 4, 4, g), i)
    x, r = _weights(i, 2, 4), _weights(i + 1, 2, 4)
    return max_relative_error(lambda: (ffn_block(x, p, "f") * r).sum(), [t for _, t in p.items()])


def _mlp_case(i: int) -> float:
    p = _store(lambda s, g: init_mlp(s, "m", [4, 4, 3], g), i)
    x, r = _weights(i, 2, 4), _weights(i + 1, 2, 3)
    return max_relative_error(lambda: (mlp(x, p, "m") * r).sum(), [t for _, t in p.items()])


def _leaves(i: int, *shapes):
    return [_weights(i + n, *s).requires_grad_(True) for n, s in enumerate(shapes)]


def _triplet_case(i: int) -> float:
    q, pos, neg = _leaves(i, (3, 4), (3, 4), (3, 4))
    with torch.no_grad():  # keep every hinge clear of its kink so central differences stay smooth
        gap = 0.2 - cosine(q, pos) + cosine(q, neg)
        assert torch.all(gap.abs() > 1e-3)
    return max_relative_error(lambda: triplet_loss(cosine(q, pos), cosine(q, neg), 0.2), [q, pos, neg])


def _contrastive_case(i: int) -> float:
    h, hp = _leaves(i, (3, 4), (3, 4))
    return max_relative_error(lambda: contrastive_loss(h, hp, 0.5), [h, hp])


def _total_case(i: int) -> float:
    q, pos, neg, twin = _leaves(i, (2, 4), (2, 4), (2, 4), (2, 4))
    lam = 0.1 + 0.2 * i

    def fn():
        return total_loss(triplet_loss(cosine(q, pos), cosine(q, neg), 1.5), contrastive_loss(pos, twin, 0.5), lam)
    return max_relative_error(fn, [q, pos, neg, twin])


GRAD_CASES = {
    "encoder layer": _encoder_layer_case,
    "cross-attention": _cross_attention_case,
    "FFN block": _ffn_case,
    "fusion MLP": _mlp_case,
    "triplet loss": _triplet_case,
    "contrastive loss": _contrastive_case,
    "total loss": _total_case,
}


def test_criterion_01_gradient_correctness():
    start = time.perf_counter()
    worst = {name: max(case(i) for i in range(INSTANCES)) for name, case in GRAD_CASES.items()}
    elapsed = time.perf_counter() - start
    ok = all(v < GRAD_TOL for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, "gradient check", ok, f"max rel err per op ({INSTANCES} instances each): {detail}; {elapsed:.1f}s")


# ---------------------------------------------------------------- 2. fallback

def test_criterion_02_fallback_identity():
    cfg = tiny_encoder_config(dropout=0.0, vocab_size=30)
    fcfg = FusionConfig(num_heads=2, ffn_dim=12, tower_dim=6)
    mismatches = 0
    for i in range(100):
        gen = torch.Generator().manual_seed(i)
        store = ParameterStore()
        init_encoder(store, "query_encoder", cfg, gen)
        init_fusion(store, cfg.hidden_dim, fcfg, gen)
        p = randomize(store, i, dtype=torch.float32 if i % 2 else torch.float64)
        rng = np.random.default_rng(i)
        B = int(rng.integers(1, 4))
        lens = rng.integers(2, cfg.max_query_len + 1, size=B)
        L = int(lens.max())
        ids = torch.tensor([[2] + rng.integers(4, 30, size=L - 1).tolist() for _ in range(B)])
        mask = torch.tensor([[j < n for j in range(L)] for n in lens])
        hs = encode(TokenBatch(ids, mask), p, cfg)
        absent = fuse(hs, None, p, 2).vector
        itself = fuse(hs, hs, p, 2).vector
        mismatches += not torch.equal(absent, itself)
    report(2, "fallback identity", mismatches == 0, f"{100 - mismatches}/100 draws bitwise equal")


# ---------------------------------------------------------------- 3. loss oracles

def test_criterion_03_loss_oracles():
    d = torch.float64
    margin = 0.25
    zero_gap = float(triplet_loss(torch.tensor([0.5], dtype=d), torch.tensor([0.5], dtype=d), margin))
    full_gap = float(triplet_loss(torch.tensor([0.75], dtype=d), torch.tensor([0.5], dtype=d), margin))
    h = torch.eye(2, dtype=d)
    cl = float(contrastive_loss(h, h.clone(), 1.0))
    want = -math.log(math.e / (math.e + 1))
    t, c = torch.tensor(0.375, dtype=d), torch.tensor(1.25, dtype=d)
    lams = [0.0, 0.25, 0.5, 1.0, 2.0]
    vals = [float(total_loss(t, c, lam)) for lam in lams]
    linear = all(v == float(t) + lam * float(c) for v, lam in zip(vals, lams))
    linear &= vals[1] - vals[0] == vals[2] - vals[1] and vals[3] - vals[2] == 2 * (vals[2] - vals[1])
    ok = zero_gap == margin and full_gap == 0.0 and abs(cl - want) < 1e-9 and linear
    report(3, "loss oracles", ok, f"zero gap -> {zero_gap} (margin {margin}), gap=margin -> {full_gap}, "
                                  f"crafted contrastive err {abs(cl - want):.1e}, linear in lambda: {linear}")


# ---------------------------------------------------------------- 4. mining

def test_criterion_04_negative_mining():
    rng = np.random.default_rng(44)
    bad_topk = 0
    for trial in range(100):
        n = int(rng.integers(1, 1025))
        dim = 8
        bank = MemoryBank(1024, dim)
        embs = rng.normal(size=(n, dim))
        dup = rng.random(n) < 0.1  # exact duplicates exercise the tie-break
        for j in np.flatnonzero(dup):
            embs[j] = embs[int(rng.integers(n))]
        rows = [(f"d{j}", embs[j], f"q{int(rng.integers(0, 50))}") for j in range(n)]
        bank.push_batch(rows)
        entries = [(doc, emb.tolist(), qid, j) for j, (doc, emb, qid) in enumerate(rows)]
        query = rng.normal(size=dim)
        ex_docs = {f"d{int(x)}" for x in rng.integers(0, n, size=3)}
        ex_q = {f"q{int(rng.integers(0, 50))}"}
        for k in (1, 2, 8):
            ref = oracles.brute_topk_hard(entries, query.tolist(), k, ex_docs, ex_q)
            probe = MemoryBank(1024, dim)
            probe.push_batch(rows)
            if ref is None:
                continue
            got = probe.select_topk_hard(query, k, ex_docs, ex_q)
            bad_topk += (got.doc_id, got.index) != (ref[0], ref[3])
    bad_fifo = 0
    for trial in range(1000):
        cap = int(rng.integers(1, 20))
        bank = MemoryBank(cap, 1)
        pushed = []
        for _ in range(int(rng.integers(0, 8))):
            batch = [(f"d{len(pushed) + j}", [1.0], "q") for j in range(int(rng.integers(0, 10)))]
            pushed.extend(b[0] for b in batch)
            bank.push_batch(batch)
            bad_fifo += bank.doc_ids() != pushed[-cap:]
    report(4, "negative mining", bad_topk == 0 and bad_fifo == 0,
           f"top-k mismatches {bad_topk}/300 vs full sort, FIFO suffix violations {bad_fifo} over 1000 sequences")


# ---------------------------------------------------------------- 5. task sampling

def test_criterion_05_task_sampling():
    rng = np.random.default_rng(0)
    draws = [select_task(rng, 0.7) for _ in range(10_000)]
    freq = sum(d is TaskKind.QUERY_CENTRIC for d in draws) / len(draws)
    report(5, "task sampling", 0.68 <= freq <= 0.72, f"query-centric frequency {freq:.4f} with p_q=0.7")


# ---------------------------------------------------------------- 6. metrics

def test_criterion_06_metric_oracles():
    from fractions import Fraction
    cases = json.loads((HERE / "fixtures" / "metrics_cases.json").read_text())
    run, judged = cases["run"], cases["judgments"]
    exp = {k: float(Fraction(v)) for k, v in cases["expected"].items()}
    got = {
        "recall@2": recall_at_k(run, judged, 2), "recall@4": recall_at_k(run, judged, 4),
        "map@2": map_at_k(run, judged, 2), "map@4": map_at_k(run, judged, 4),
        "ap_q1@4": map_at_k({"q1": run["q1"]}, judged, 4),
        "rr_q1": mrr({"q1": run["q1"]}, judged), "rr_q2": mrr({"q2": run["q2"]}, judged),
        "mrr": mrr(run, judged),
    }
    # the references are exact fractions; 1e-15 only absorbs rounding them to float
    wrong = [k for k in exp if abs(got[k] - exp[k]) > 1e-15]
    rng = np.random.default_rng(6)
    non_monotone = 0
    for _ in range(100):
        docs = [f"d{i}" for i in range(40)]
        r = {f"q{j}": list(rng.permutation(docs)[: int(rng.integers(1, 40))]) for j in range(5)}
        jd = {q: {d: int(rng.integers(0, 5)) for d in docs} for q in r}
        for q in jd:
            jd[q]["d0"] = 4
        vals = [recall_at_k(r, jd, k) for k in range(1, 41)]
        non_monotone += any(a > b for a, b in zip(vals, vals[1:]))
    ok = not wrong and non_monotone == 0
    report(6, "metric oracles", ok, f"AP example {got['ap_q1@4']:.4f}, MRR examples {got['rr_q1']}/{got['rr_q2']}, "
                                    f"fixture mismatches {wrong}, recall@k monotonicity violations {non_monotone}/100")


# ---------------------------------------------------------------- 7. kappa

def test_criterion_07_kappa():
    rng = np.random.default_rng(7)
    seq = rng.integers(0, 4, size=50).tolist()
    identical = cohen_kappa(seq, list(seq))
    fixture = cohen_kappa([1, 1, 0, 0], [1, 0, 0, 1])
    bad = 0
    for _ in range(100):
        a = rng.integers(0, 5, size=30).tolist()
        b = [x if rng.random() < 0.6 else int(rng.integers(0, 5)) for x in a]
        base = cohen_kappa(a, b)
        relabel = dict(zip(range(5), rng.permutation(["u", "v", "w", "x", "y"]).tolist()))
        order = rng.permutation(len(a))
        moved = cohen_kappa([relabel[a[i]] for i in order], [relabel[b[i]] for i in order])
        bad += abs(moved - base) > 1e-12
    ok = identical == 1.0 and fixture == 0.0 and bad == 0
    report(7, "kappa oracle", ok, f"identical {identical}, fixture {fixture}, relabel/permute violations {bad}/100")


# ---------------------------------------------------------------- 8. annotation

TEST_ZOO = {"bm25": 3.0, "bow_cosine": 0.45, "coverage": 0.75, "trigram_cosine": 0.5, "idf_coverage": 0.75}
ARITY = {"select_best": 3, "permutation": 3, "pairwise_compare": 2, "multi_class5": 1, "cot_grade": 1}


def test_criterion_08_annotation_pipeline():
    triplets = [RawTriplet(**json.loads(line)) for line in (HERE / "fixtures" / "triplets250.jsonl").open()]
    corpus = sorted({t.doc for t in triplets})
    specs = [ScorerSpec(k, v, make_scorer(k, corpus)) for k, v in TEST_ZOO.items()]
    quorum = 5
    pairs, _ = split_and_cache(triplets)

    # reference tabulation: plain score table, then counts against thresholds
    reference = {}
    for p in pairs:
        pos = sum(spec.scorer(p.left, p.doc) >= spec.threshold for spec in specs)
        neg = len(specs) - pos
        reference[p.key] = "easy_positive" if pos >= quorum else "easy_negative" if neg >= quorum else "hard"

    hard_prompts = {p.key: render_prompt("cot_grade", p.left, [p.doc]) for p in pairs if reference[p.key] == "hard"}
    stub = StubLLMClient({prompt_hash(pr): f"Reasoning.\nAnswer: {len(key[1]) % 5}" for key, pr in hard_prompts.items()})
    result = annotate(triplets, specs, "all", stub, quorum=quorum, concurrency=3, backoff=0.0)
    partition = {p.key: v.outcome.value for p, v in zip(result.pairs, result.votes)}
    partition_ok = len(pairs) == 500 and partition == reference
    counts = {o: list(reference.values()).count(o) for o in ("easy_positive", "easy_negative", "hard")}

    easy_hashes = {prompt_hash(render_prompt("cot_grade", p.left, [p.doc])) for p in pairs if reference[p.key] != "hard"}
    leaked = len(easy_hashes & set(stub.requests))
    requests_ok = leaked == 0 and set(stub.requests) == {prompt_hash(pr) for pr in hard_prompts.values()}

    # split -> label -> restore: every labeled pair comes back once per cached partner with its label intact
    labels = {lp.pair.key: lp.label for lp in result.labeled}
    restored_ok = len(result.labeled) == 500
    qc, ec = restore_quadruplets(result.labeled, result.dicts)
    want_qc = {(t.query_id, e, t.doc_id) for t in triplets for e in result.dicts.query_to_events[t.query_id]}
    want_ec = {(q, t.event_id, t.doc_id) for t in triplets for q in result.dicts.event_to_queries[t.event_id]}
    restored_ok &= {(q.query_id, q.event_id, q.doc_id) for q in qc} == want_qc and len(qc) == len(want_qc)
    restored_ok &= {(q.query_id, q.event_id, q.doc_id) for q in ec} == want_ec and len(ec) == len(want_ec)
    restored_ok &= all(q.label == labels[(QD, q.query_id, q.doc_id)] for q in qc)
    restored_ok &= all(q.label == labels[(ED, q.event_id, q.doc_id)] for q in ec)
    originals = {(t.query_id, t.event_id, t.doc_id) for t in triplets}
    restored_ok &= originals <= want_qc and originals <= want_ec

    golden_q = "coastal   storm road closures"
    golden_docs = ["Storm  closes\tcoastal roads in {Q} county", "Ferry service resumes after the storm",
                   "Power restored to 4,000 homes"]
    golden_bad = [k for k, n in ARITY.items()
                  if render_prompt(k, golden_q, golden_docs[:n]).encode() != (HERE / "golden" / f"{k}.txt").read_bytes()]

    ok = partition_ok and requests_ok and restored_ok and not golden_bad
    report(8, "annotation pipeline", ok,
           f"partition matches reference {partition_ok} {counts}, easy prompts sent to LLM {leaked}, "
           f"round-trip lossless {restored_ok}, golden mismatches {golden_bad}")


# ---------------------------------------------------------------- 9. ablation trend

ABLATION_SEEDS = range(5)


@pytest.mark.slow
def test_criterion_09_ablation_trend():
    start = time.perf_counter()
    wins = 0
    rows = []
    for seed in ABLATION_SEEDS:
        res = ablation_seed(seed)
        err, base = res["err"], res["no_event"]
        win = err["mrr_grade4"] > base["mrr_grade4"] and err["recall@10"] >= base["recall@10"]
        wins += win
        rows.append(f"seed {seed}: mrr {err['mrr_grade4']:.3f} vs {base['mrr_grade4']:.3f}, "
                    f"recall@10 {err['recall@10']:.4f} vs {base['recall@10']:.4f} {'win' if win else 'loss'}")
        print(rows[-1])
    elapsed = time.perf_counter() - start
    ok = wins >= 4 and elapsed < 30 * 60
    report(9, "ablation trend (fused vs query-only)", ok,
           f"{wins}/5 seeds favour the fused tower; {elapsed / 60:.1f} min; " + "; ".join(rows))


# ---------------------------------------------------------------- 10. reproducibility

def test_criterion_10_reproducibility(tmp_path):
    a = run_pipeline(tmp_path / "a", seed=9)
    b = run_pipeline(tmp_path / "b", seed=9)
    names = ("stage1", "stage2", "report", "run")
    same = {n: a[n].read_bytes() == b[n].read_bytes() for n in names}
    report(10, "reproducibility", all(same.values()),
           "byte-identical " + ", ".join(f"{n}={v}" for n, v in same.items()))
