"""Train on a tiny synthetic corpus, score prompt events, print the report."""

import numpy as np

from engagement.config import RunConfig
from engagement.corpus import Corpus, Document
from engagement.pipeline import build_artifacts, make_engine
from engagement.score import PromptEvent, ScoreLedger, normalize

# three providers, each with its own signature vocabulary plus shared filler
rng = np.random.default_rng(0)
classes = ["astronomy", "cooking", "woodwork"]
shared = [f"common{j}" for j in range(10)]
docs = []
for cname in classes:
    signature = [f"{cname}word{j}" for j in range(30)]
    for d in range(40):
        words = list(rng.choice(signature, size=28)) + list(rng.choice(shared, size=12))
        rng.shuffle(words)
        docs.append(Document(f"{cname}-{d}", cname, cname, body=" ".join(words)))
corpus = Corpus.from_documents(docs)

config = RunConfig(corpus_kind="manifest", corpus_path="inline", reduced_dims=16, epochs=25)
built = build_artifacts(config, corpus)
engine = make_engine(built)
print("trained", len(engine.class_ids), "classes, fingerprint", engine.fingerprint[:12])
print("holdout accuracy", built.train_result.held_out_accuracy)

events = [
    PromptEvent("e1", "astronomyword3 astronomyword7 tell me about astronomyword12"),
    PromptEvent("e2", "how do I season cookingword5 with cookingword9", weight=2.0),
    PromptEvent("e3", "woodworkword1 joints and woodworkword22 finish"),
    PromptEvent("e4", "common0 common1 common2"),  # nothing distinctive
]

ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
for event in events:
    score = engine.score_event(event)
    ledger.ingest_score(score)
    top = score.prob.argmax_class()
    print(f"{event.event_id}: argmax={top:10s} p={max(score.prob.values):.4f}")

report = normalize(ledger)
print("\nper-class engagement over", report.total_events, "events")
for cid, psum, pshare in zip(report.class_ids, report.prob_sums, report.prob_shares):
    print(f"  {cid:10s} prob_sum={psum:7.4f} share={pshare:.4f}")
print("shares sum to", f"{report.prob_shares.sum():.12f}")
