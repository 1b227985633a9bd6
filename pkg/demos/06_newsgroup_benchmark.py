"""Full-corpus run: train on the 20-newsgroup by-date split and reproduce
the headline numbers. Needs the dataset on disk; prints placement help
and exits cleanly when it is absent."""

import os
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from engagement.config import RunConfig
from engagement.pipeline import build_artifacts, load_corpus, make_engine
from engagement.score import PromptEvent, ScoreLedger

root = os.environ.get("ENGAGEMENT_NEWSGROUP20_ROOT")
if root is None:
    for candidate in ("data/20news-bydate", "data/20news"):
        if Path(candidate).is_dir():
            root = candidate
            break
if root is None or not Path(root).is_dir():
    print("20-newsgroup corpus not found.")
    print("Set ENGAGEMENT_NEWSGROUP20_ROOT or unpack 20news-bydate.tar.gz under data/.")
    sys.exit(0)

config = RunConfig(
    corpus_kind="newsgroup20", corpus_path=str(root),
    max_features=50_000, reduced_dims=768,
)
started = perf_counter()
train_corpus = load_corpus(config, split="train")
built = build_artifacts(config, train_corpus)
engine = make_engine(built)
print(f"trained on {len(train_corpus.documents)} documents, "
      f"{len(engine.class_ids)} classes in {perf_counter() - started:.1f}s")

test_corpus = load_corpus(config, split="test")
subject = "HST Servicing Mission Scheduled for 11 Days"
hst = next(d for d in test_corpus.documents
           if d.class_id == "sci.space" and subject in d.body)
score = engine.score_event(PromptEvent("hst", hst.body))
order = np.argsort(score.prob.values)[::-1]
print("\nsingle document (HST servicing mission):")
for k in order[:5]:
    print(f"  {score.prob.class_ids[k]:25s} {score.prob.values[k]:.4f}")

score = engine.score_event(PromptEvent("sky", "Why the sky is blue?"))
order = np.argsort(score.prob.values)[::-1]
print("\nprompt 'Why the sky is blue?':")
for k in order[:5]:
    print(f"  {score.prob.class_ids[k]:25s} {score.prob.values[k]:.4f}")

space_docs = [d for d in test_corpus.documents if d.class_id == "sci.space"]
ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
started = perf_counter()
for doc in space_docs:
    ledger.ingest_score(engine.score_event(PromptEvent(doc.doc_id, doc.body)))
print(f"\ningested {len(space_docs)} sci.space test documents "
      f"in {perf_counter() - started:.1f}s")
sums = dict(zip(ledger.class_ids, ledger.prob_sums))
for cid in sorted(sums, key=sums.get, reverse=True)[:5]:
    print(f"  {cid:25s} prob_sum={sums[cid]:7.1f}")
print(f"  total mass {ledger.prob_sums.sum():.6f} over {ledger.total_events} events")

vector = built.internal_embedder.embed(hst.body)
sims = built.centroids.similarity_scores(vector)
order = np.argsort(sims)[::-1]
print("\nmean cosine to the HST document (top 3, bottom 2):")
for k in list(order[:3]) + list(order[-2:]):
    print(f"  {built.centroids.class_ids[k]:25s} {sims[k]:+.4f}")
