import itertools

import numpy as np
import pytest
import torch

import oracles
from conftest import tiny_encoder_config
from eventret.annotation.records import R_ED, R_QD, LabeledQuadruplet
from eventret.fusion import FusionConfig
from eventret.model import ModelConfig, RetrievalModel
from eventret.params import ParameterStore, backward
from eventret.training import (Quadruplet, TaskKind, TrainConfig, Trainer, TrainingData, coarse_training_data,
                               fine_training_data, grade_triplets, select_task, train_stage1)
from eventret.vocab import build_vocab

TOPICS = ["storm coast flood", "budget council vote", "ferry harbour strike", "match final goal",
          "fire forest smoke", "bank rates inflation"]


def _docs():
    return {f"d{t}{j}": f"{TOPICS[t]} report {j} {'update' if j % 2 else 'news'}" for t in range(6) for j in range(4)}


def _data(static_negatives: bool) -> TrainingData:
    docs = _docs()
    qc, ec = [], []
    for t, topic in enumerate(TOPICS):
        words = topic.split()
        for j in range(4):
            neg = f"d{(t + 1) % 6}{j}" if static_negatives else None
            qc.append(Quadruplet(f"q{t}", words[0], topic, f"d{t}{j}", docs[f"d{t}{j}"], neg,
                                 docs[neg] if neg else None))
            ec.append(Quadruplet(f"q{t}", words[0], topic, f"d{t}{j}", docs[f"d{t}{j}"], neg,
                                 docs[neg] if neg else None))
    return TrainingData(qc, ec, docs)


def _model(seed=0, variant="err") -> RetrievalModel:
    docs = _docs()
    vocab = build_vocab(list(docs.values()), 64)
    cfg = ModelConfig(tiny_encoder_config(vocab_size=64, max_doc_len=10), FusionConfig(num_heads=2, ffn_dim=16,
                                                                                        tower_dim=8), variant)
    return RetrievalModel.initialize(cfg, vocab, seed)


def _cfg(**kw) -> TrainConfig:
    base = dict(batch_size=4, max_steps=5, lr=1e-3, warmup_steps=2, seed=3, lam=0.1, tau=0.05, hard_k=2)
    base.update(kw)
    return TrainConfig(**base)


def standalone_step_loss(model_params: ParameterStore, model: RetrievalModel, data: TrainingData, rec: dict,
                         cfg: TrainConfig) -> float:
    """Recompute a logged step's loss from its record with float64 scalar arithmetic."""
    m = RetrievalModel(model.cfg, model_params, model.vocab)
    pool = data.query_centric if rec["task"] == TaskKind.QUERY_CENTRIC.value else data.event_centric
    by_key = {}
    for q in pool:
        by_key.setdefault((q.query_id, q.positive_id), q)
    quads = [by_key[(qid, pid)] for qid, pid in zip(rec["queries"], rec["positives"])]
    seeds = rec["seeds"]
    with torch.no_grad():
        q = m.embed_queries([x.query for x in quads], [x.event for x in quads], seeds["query"]).vector
        pos = m.embed_documents([x.positive for x in quads], seeds["positive"])
        neg = m.embed_documents([data.docs[n["doc_id"]] for n in rec["negatives"]], seeds["negative"])
        twin = m.embed_documents([x.positive for x in quads], seeds["positive_twin"])
    qv, pv, nv, tv = (oracles.tolist(t) for t in (q, pos, neg, twin))
    s_pos = [oracles.cosine(a, b) for a, b in zip(qv, pv)]
    s_neg = [oracles.cosine(a, b) for a, b in zip(qv, nv)]
    hinge = oracles.triplet(s_pos, s_neg, cfg.margin)
    cl = oracles.contrastive(pv, tv, cfg.tau)
    return hinge + cfg.lam * cl


@pytest.mark.parametrize("static", [True, False])
def test_step_loss_matches_standalone_oracle(static):
    model = _model()
    data = _data(static)
    cfg = _cfg()
    trainer = Trainer(model, cfg)
    for step in range(4):
        before = model.params.copy()
        rec = trainer.step(data, step, 4, 2, 1)
        assert all(n["kind"] == ("static" if static else "random") for n in rec["negatives"])
        ref = standalone_step_loss(before, model, data, rec, cfg)
        assert rec["loss"] == pytest.approx(ref, rel=1e-5, abs=1e-6)


def test_task_selection_edges():
    rng = np.random.default_rng(0)
    assert all(select_task(rng, 1.0) is TaskKind.QUERY_CENTRIC for _ in range(200))
    assert all(select_task(rng, 0.0) is TaskKind.EVENT_CENTRIC for _ in range(200))
    with pytest.raises(ValueError):
        select_task(rng, 1.5)


def test_grade_triplets_matches_brute_force(rng):
    for _ in range(30):
        grades = {f"d{i}": int(rng.integers(0, 5)) for i in range(int(rng.integers(1, 7)))}
        brute = {(a, b) for a, b in itertools.permutations(grades, 2) if grades[a] > grades[b]}
        got = grade_triplets(grades)
        assert len(got) == len(set(got)) and set(got) == brute


def _lq(qid, did, label, graded, kind=R_QD, prov="llm"):
    return LabeledQuadruplet(qid, f"query {qid}", "e1", "event one", did, f"doc {did}", label, kind, prov, graded)


def test_coarse_data_binarises_grades():
    qc = [_lq("q1", "d1", 1, False, prov="voting"), _lq("q1", "d2", 0, False, prov="voting"),
          _lq("q1", "d3", 3, True), _lq("q1", "d4", 2, True)]
    ec = [_lq("q1", "d5", 4, True, R_ED)]
    data = coarse_training_data(qc, ec, {})
    assert [q.positive_id for q in data.query_centric] == ["d1", "d3"]
    assert [q.positive_id for q in data.event_centric] == ["d5"]
    assert all(q.negative_id is None for q in data.query_centric)
    assert set(data.docs) == {"d1", "d3", "d5"}


def test_fine_data_caps_pairs_and_is_seeded():
    qc = [_lq("q1", f"d{i}", i % 5, True) for i in range(10)]
    a = fine_training_data(qc, [], {}, 5, np.random.default_rng(0))
    b = fine_training_data(qc, [], {}, 5, np.random.default_rng(0))
    full = fine_training_data(qc, [], {}, 1000, np.random.default_rng(0))
    assert len(a.query_centric) == 5 and a.query_centric == b.query_centric
    assert len(full.query_centric) == len(grade_triplets({f"d{i}": i % 5 for i in range(10)}))
    assert all(q.negative_id is not None for q in full.query_centric)
    assert full.positives["q1"] == {f"d{i}" for i in range(10) if i % 5 >= 2}


def test_quadruplet_validation():
    with pytest.raises(ValueError):
        Quadruplet("q", " ", None, "d", "doc")
    with pytest.raises(ValueError):
        Quadruplet("q", "query", None, "d", "doc", "d", "doc")


def test_training_is_deterministic():
    logs, params = [], []
    for _ in range(2):
        model = _model()
        res = train_stage1(model, _data(False), _cfg(max_steps=6))
        logs.append(res.log)
        params.append(model.params)
    assert logs[0] == logs[1]
    assert params[0].equal(params[1])


def test_warmup_schedule():
    model = _model()
    res = train_stage1(model, _data(True), _cfg(max_steps=5, warmup_steps=4, lr=1e-3))
    assert [r["lr"] for r in res.log] == pytest.approx([2.5e-4, 5e-4, 7.5e-4, 1e-3, 1e-3])
    res = train_stage1(_model(), _data(True), _cfg(max_steps=20, warmup_steps=None))
    assert res.log[0]["lr"] == pytest.approx(5e-4) and res.log[1]["lr"] == pytest.approx(1e-3)


def test_bank_mining_starts_once_full_and_avoids_positives():
    model = _model()
    data = _data(False)
    res = train_stage1(model, data, _cfg(max_steps=12, batch_size=4), bank_factor=2)
    kinds = [[n["kind"] for n in r["negatives"]] for r in res.log]
    assert set(kinds[0]) == {"random"} and set(kinds[1]) == {"random"}
    assert any("mined" in k for k in kinds[2:])
    for r in res.log:
        for qid, n in zip(r["queries"], r["negatives"]):
            assert n["doc_id"] not in data.positives[qid]


def test_loss_decreases_on_tiny_problem():
    model = _model(seed=1)
    res = train_stage1(model, _data(True), _cfg(max_steps=300, batch_size=8, lr=3e-3, warmup_steps=10, lam=0.0))
    first = np.mean([r["loss"] for r in res.log[:15]])
    last = np.mean([r["loss"] for r in res.log[-15:]])
    assert last < 0.5 * first


def test_empty_dataset_rejected():
    with pytest.raises(ValueError, match="empty dataset"):
        train_stage1(_model(), TrainingData([], [], {}), _cfg())


def test_untouched_parameters_get_zero_gradients():
    model = _model(variant="no_event")
    pos = model.embed_documents(["storm coast flood"])
    loss = pos.sum()
    model.params.zero_grad()
    backward(loss, model.params)
    assert torch.count_nonzero(model.params.grad("query_proj.0.w")) == 0
    assert torch.count_nonzero(model.params.grad("doc_proj.0.w")) > 0
    with pytest.raises(RuntimeError, match="no recorded computation"):
        backward(torch.tensor(1.0), model.params)


def test_config_validation():
    for bad in (dict(margin=0), dict(p_q=1.2), dict(tau=0), dict(lam=-1), dict(batch_size=0), dict(hard_k=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
