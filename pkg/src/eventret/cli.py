"""Command-line entry point: ``eventret <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .annotation import HTTPChatClient, LabeledQuadruplet, RawTriplet, ScorerSpec, StubLLMClient, annotate
from .annotation.scorers import make_scorer
from .config import RunConfig, load_config
from .events import (EventIndex, FilterRules, HashedBowEmbedder, LinearRanker, associate, build_event_index,
                     rank_and_select, read_titles)
from .index import DocIndex, build_index
from .jsonio import read_jsonl, read_tsv, write_json, write_jsonl, write_tsv
from .metrics import evaluate, judgments_from_rows, run_from_rows
from .model import RetrievalModel, load_model, save_model
from .synth import synth_corpus
from .training import TrainConfig, coarse_training_data, fine_training_data, train_stage1, train_stage2
from .vocab import build_vocab

logger = logging.getLogger("eventret")

_DOC_FIELDS = {"doc_id": str, "text": str}
_QUERY_FIELDS = {"query_id": str, "text": str}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run config")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def _config(args) -> RunConfig:
    return load_config(args.config, seed=args.seed, variant=getattr(args, "variant", None))


def _model_embedder(model: RetrievalModel):
    return lambda texts: model.embed_queries_eval(list(texts)).vector.numpy()


def cmd_synth(args) -> int:
    corpus = synth_corpus(args.seed or 0, args.queries, args.events, args.docs, args.test_fraction, args.split_by)
    corpus.write(args.out)
    print(f"wrote {len(corpus.queries)} queries, {len(corpus.events)} events, {len(corpus.docs)} docs to {args.out}")
    return 0


def cmd_events_build(args) -> int:
    cfg = _config(args)
    ev = cfg.event
    titles = read_titles(args.titles)
    if args.checkpoint and ev.embedder == "model":
        model, _ = load_model(args.checkpoint)
        embed, kind = _model_embedder(model), "model"
    else:
        embed, kind = HashedBowEmbedder(cfg.fusion.tower_dim), "hashed"
    index = build_event_index(titles, FilterRules(ev.min_len, ev.max_len, list(ev.blocklist)), ev.sim_threshold,
                              embed, embedder=kind)
    index.save(args.out)
    print(f"{len(titles)} titles -> {len(index)} events in {args.out}")
    return 0


def _scorers(cfg: RunConfig, corpus: list[str]) -> list[ScorerSpec]:
    return [ScorerSpec(s["name"], float(s["threshold"]), make_scorer(s["kind"], corpus))
            for s in cfg.annotation.scorers]


def cmd_annotate(args) -> int:
    cfg = _config(args)
    an = cfg.annotation
    rows = read_jsonl(args.triplets, {k: str for k in ("query_id", "query", "event_id", "event", "doc_id", "doc")})
    triplets = [RawTriplet(**{k: r[k] for k in ("query_id", "query", "event_id", "event", "doc_id", "doc")})
                for r in rows]
    corpus = ([d["text"] for d in read_jsonl(args.docs, _DOC_FIELDS)] if args.docs
              else sorted({t.doc for t in triplets}))
    client = None
    if args.stage != "coarse":
        client = StubLLMClient.from_file(args.stub) if args.stub else HTTPChatClient.from_env(an.timeout)
    result = annotate(triplets, _scorers(cfg, corpus), args.stage, client, an.quorum, an.instruction,
                      an.concurrency, an.retries, an.backoff)
    out = Path(args.out)
    write_jsonl(out / "votes.jsonl", [
        {"kind": p.kind, "left_id": p.left_id, "doc_id": p.doc_id, "outcome": v.outcome.value,
         "votes": list(v.votes), "scores": list(v.scores)} for p, v in zip(result.pairs, result.votes)])
    write_jsonl(out / "labeled_pairs.jsonl", [
        {"kind": lp.pair.kind, "left_id": lp.pair.left_id, "doc_id": lp.pair.doc_id, "label": lp.label,
         "provenance": lp.provenance, "graded": lp.graded} for lp in result.labeled])
    write_jsonl(out / "unlabeled.jsonl", [{"kind": p.kind, "left_id": p.left_id, "doc_id": p.doc_id}
                                          for p in result.unlabeled])
    write_jsonl(out / "query_centric.jsonl", [q.to_dict() for q in result.query_centric])
    write_jsonl(out / "event_centric.jsonl", [q.to_dict() for q in result.event_centric])
    write_jsonl(out / "llm_audit.jsonl", result.audit)
    write_json(out / "recovery.json", {"query_to_events": result.dicts.query_to_events,
                                       "event_to_queries": result.dicts.event_to_queries})
    summary = {"stage": args.stage, "pairs": len(result.pairs), **result.counts(),
               "labeled": len(result.labeled), "unlabeled": len(result.unlabeled),
               "query_centric": len(result.query_centric), "event_centric": len(result.event_centric)}
    write_json(out / "summary.json", summary)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def _load_quads(directory: Path) -> tuple[list[LabeledQuadruplet], list[LabeledQuadruplet]]:
    return ([LabeledQuadruplet.from_dict(r) for r in read_jsonl(directory / "query_centric.jsonl")],
            [LabeledQuadruplet.from_dict(r) for r in read_jsonl(directory / "event_centric.jsonl")])


def cmd_train(args) -> int:
    cfg = _config(args)
    tcfg = cfg.train
    if args.max_steps is not None:
        tcfg = TrainConfig(**{**tcfg.__dict__, "max_steps": args.max_steps})
    docs = {d["doc_id"]: d["text"] for d in read_jsonl(args.docs, _DOC_FIELDS)}
    qc, ec = _load_quads(Path(args.data))
    if args.stage == 1:
        if args.init:
            model, _ = load_model(args.init)
        else:
            texts = list(docs.values()) + [q.query for q in qc + ec] + [q.event for q in qc + ec]
            vocab = build_vocab(texts, cfg.encoder.vocab_size)
            model = RetrievalModel.initialize(cfg.model, vocab, cfg.seed)
        data = coarse_training_data(qc, ec, docs)
        result = train_stage1(model, data, tcfg, bank_factor=cfg.bank.factor)
    else:
        if not args.init:
            raise ValueError("stage 2 needs --init with a stage-1 checkpoint")
        model, _ = load_model(args.init)
        data = fine_training_data(qc, ec, docs, tcfg.stage2_max_pairs_per_group, np.random.default_rng(cfg.seed))
        result = train_stage2(model, data, tcfg, bank_factor=cfg.bank.factor)
    out = Path(args.out)
    save_model(out / "model.ckpt", result.model, cfg.seed, {"stage": args.stage})
    result.model.vocab.save(out / "vocab.txt")
    write_jsonl(out / "train_log.jsonl", result.log)
    write_json(out / "manifest.json", {**result.manifest, "config": cfg.to_dict()})
    last = result.log[-1]
    print(f"stage {args.stage}: {len(result.log)} steps, final loss {last['loss']:.4f}")
    return 0


def cmd_index_build(args) -> int:
    model, _ = load_model(args.checkpoint)
    docs = read_jsonl(args.docs, _DOC_FIELDS)
    index = build_index(model, docs)
    index.save(args.out)
    print(f"indexed {len(index)} docs into {args.out}")
    return 0


def _resolve_events(cfg: RunConfig, model: RetrievalModel, queries: list[dict], args) -> list[str | None]:
    """Per query: explicit event text, then event-id lookup, then association over the event index."""
    lookup = {}
    if args.events_file:
        lookup = {r["event_id"]: r["text"] for r in read_jsonl(args.events_file, {"event_id": str, "text": str})}
    index = EventIndex.load(args.event_index) if args.event_index else None
    ev = cfg.event
    ranker = LinearRanker(ev.w_rel, ev.w_rec, ev.w_pop)
    out: list[str | None] = []
    pending = []
    for i, q in enumerate(queries):
        if q.get("event"):
            out.append(q["event"])
        elif q.get("event_id") in lookup:
            out.append(lookup[q["event_id"]])
        else:
            out.append(None)
            pending.append(i)
    if index is not None and len(index) and pending:
        texts = [queries[i]["text"] for i in pending]
        if index.embedder == "model":
            vecs = model.embed_queries_eval(texts).vector.numpy()
        else:
            vecs = HashedBowEmbedder(index.matrix.shape[1])(texts)
        latest = max(r.found_time for r in index.records)
        for i, v in zip(pending, vecs):
            cands = associate(v, index, ev.candidates)
            now = float(queries[i].get("time", latest))
            best = rank_and_select(cands, now, ranker, ev.half_life_hours, ev.floor)
            out[i] = best.text if best is not None else None
    return out


def cmd_search(args) -> int:
    cfg = _config(args)
    model, _ = load_model(args.checkpoint)
    index = DocIndex.load(args.index)
    if args.query:
        queries = [{"query_id": "q0", "text": args.query, **({"event": args.event} if args.event else {})}]
    else:
        queries = read_jsonl(args.queries, _QUERY_FIELDS)
        if args.split:
            queries = [q for q in queries if q.get("split") == args.split]
    if not queries:
        raise ValueError("no queries to search")
    events = _resolve_events(cfg, model, queries, args)
    fused = model.embed_queries_eval([q["text"] for q in queries], events)
    k = args.k or cfg.eval.search_k
    hits = index.search_many(fused.vector.numpy(), k)
    rows = [(q["query_id"], did, rank, f"{s:.6f}") for q, hs in zip(queries, hits)
            for rank, (did, s) in enumerate(hs, 1)]
    if args.out:
        write_tsv(args.out, rows)
        write_jsonl(str(args.out) + ".provenance.jsonl", [
            {"query_id": q["query_id"], "event": e, "provenance": p}
            for q, e, p in zip(queries, events, fused.provenance)])
    else:
        for r in rows:
            print("\t".join(str(x) for x in r))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    run = run_from_rows(read_tsv(args.run, 4))
    judged = judgments_from_rows(read_tsv(args.judgments, 3))
    report = evaluate(run, judged, args.k or cfg.eval.ks, cfg.eval.min_grade, cfg.eval.event_grade)
    report = {k: round(v, 6) for k, v in report.items()}
    if args.out:
        write_json(args.out, report)
    for k in sorted(report):
        print(f"{k}\t{report[k]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventret", description="Event-aware dense retrieval toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--events", type=int, default=20)
    p.add_argument("--docs", type=int, default=5000)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--split-by", choices=("record", "time"), default="record",
                   help="hold out random queries or the latest events")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("events-build", help="filter, cluster and index a title stream")
    p.add_argument("--titles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="embed with the model's query tower instead of hashed words")
    _add_common(p)
    p.set_defaults(func=cmd_events_build)

    p = sub.add_parser("annotate", help="vote, LLM-grade and restore training quadruplets")
    p.add_argument("--triplets", required=True)
    p.add_argument("--stage", choices=("coarse", "fine", "all"), default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--docs", help="document collection for lexical statistics")
    p.add_argument("--stub", help="JSON fixture of canned LLM replies keyed by prompt sha256")
    _add_common(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--data", required=True, help="annotation output directory")
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint to continue from (required for stage 2)")
    p.add_argument("--variant", choices=("err", "no_event"))
    p.add_argument("--max-steps", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index-build", help="embed and index documents")
    p.add_argument("--docs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("search", help="retrieve documents for queries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--queries", help="JSONL with query_id, text and optional event / event_id / time")
    src.add_argument("--query", help="single query text")
    p.add_argument("--event", help="event text for --query")
    p.add_argument("--events-file", help="JSONL of event_id, text used to resolve query event ids")
    p.add_argument("--event-index", help="event index directory for association")
    p.add_argument("--split", help="only queries whose split field matches")
    p.add_argument("--k", type=int)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score a run against graded judgments")
    p.add_argument("--run", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
