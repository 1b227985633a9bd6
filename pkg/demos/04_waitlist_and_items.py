"""Score a not-yet-trained provider and individual training items."""

import numpy as np

from engagement.allocate import (
    ItemScoreAccumulator,
    allocate_with_waitlist,
    event_sim_shares,
    score_item_multitask,
    score_waitlist,
    waitlist_similarity_row,
)
from engagement.config import RunConfig
from engagement.corpus import Corpus, Document
from engagement.pipeline import build_artifacts, make_engine
from engagement.score import PromptEvent, ScoreLedger, normalize

rng = np.random.default_rng(4)
classes = ["maps", "poetry", "recipes"]
docs = []
for cname in classes:
    signature = [f"{cname}sig{j}" for j in range(30)]
    for d in range(40):
        docs.append(Document(f"{cname}-{d}", cname, cname, body=" ".join(rng.choice(signature, size=25))))
corpus = Corpus.from_documents(docs)
built = build_artifacts(RunConfig(corpus_path="inline", reduced_dims=16, epochs=25), corpus)
engine = make_engine(built)

ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
scores = []
for i in range(60):
    cname = classes[int(rng.integers(0, 3))]
    body = " ".join(rng.choice([f"{cname}sig{j}" for j in range(30)], size=8))
    score = engine.score_event(PromptEvent(f"e{i}", body))
    ledger.ingest_score(score)
    scores.append(score)
report = normalize(ledger)

# a waitlisted provider hands over sample documents; its row over the trained
# classes transfers their shares
sample_docs = [" ".join(rng.choice([f"poetrysig{j}" for j in range(30)], size=20)) for _ in range(5)]
row = waitlist_similarity_row(sample_docs, built.centroids, engine.embedder)
entries = score_waitlist(report, {"verse-archive": row})
entry = entries["verse-archive"]
print("waitlist provider verse-archive")
print("  similarity row", {c: round(v, 3) for c, v in entry.similarity_row.items()})
print(f"  transferred share W = {entry.score:.4f} (uniform baseline {1 / 3:.4f})")

main_pool, side_pool = allocate_with_waitlist(100_000, report, entries, 0.10)
print("  main pool", main_pool.shares)
print("  waitlist pool", side_pool.shares)

# one training item with a known class profile, folded event by event
item = ItemScoreAccumulator("sonnet-042", {"maps": 0.05, "poetry": 0.90, "recipes": 0.05})
for score in scores:
    item.ingest_score(score)
result = item.result()
print(f"\nitem {result.item_id}: prob_score={result.prob_score:.3f} over {result.event_count} events")

# the same idea when classes carry [belongs, not-belongs] pairs
pair_events = []
for score in scores[:10]:
    shares = event_sim_shares(score)
    if shares is None:
        continue
    pair_events.append((score.event_id, {c: [p, 1.0 - p] for c, p in shares.items()}))
pair_item = {c: [0.9, 0.1] if c == "poetry" else [0.05, 0.95] for c in classes}
multi = score_item_multitask(pair_item, pair_events)
print(f"pair-profile score {multi.score:.3f} over {multi.event_count} events")
