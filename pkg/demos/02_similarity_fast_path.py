"""Centroid similarity in one matvec versus the literal mean of cosines."""

from time import perf_counter

import numpy as np

from engagement.corpus import Corpus, Document
from engagement.embed import CentroidSet, InternalEmbedder, fit_reducer, fit_vocabulary, tfidf_matrix
from engagement.score import brute_force_similarity

rng = np.random.default_rng(1)
classes = [f"provider{c}" for c in range(5)]
docs = []
for cname in classes:
    signature = [f"{cname}term{j}" for j in range(40)]
    for d in range(200):
        words = rng.choice(signature, size=30)
        docs.append(Document(f"{cname}-{d}", cname, cname, body=" ".join(words)))
corpus = Corpus.from_documents(docs)

bodies = [d.body for d in corpus.documents]
vocab = fit_vocabulary(corpus)
basis = fit_reducer(tfidf_matrix(bodies, vocab), 32, seed=0)
embedder = InternalEmbedder(vocab, basis)

members = {}
for doc in corpus.documents:
    members.setdefault(doc.class_id, []).append(embedder.embed(doc.body))
centroids = CentroidSet.from_vectors(members)
print("centroids:", len(centroids.class_ids), "classes x", centroids.dims, "dims,",
      int(centroids.counts.sum()), "member vectors")

query = embedder.embed("provider2term4 provider2term11 provider0term3")

fast = centroids.similarity_scores(query)
slow = brute_force_similarity(query, members)
worst = max(abs(fast[i] - slow[c]) for i, c in enumerate(centroids.class_ids))
print("max |fast - brute| =", f"{worst:.3e}")

reps = 2000
t0 = perf_counter()
for _ in range(reps):
    centroids.similarity_scores(query)
fast_cost = (perf_counter() - t0) / reps

t0 = perf_counter()
for _ in range(20):
    brute_force_similarity(query, members)
slow_cost = (perf_counter() - t0) / 20

print(f"fast path  {fast_cost * 1e6:9.1f} us/query  (one {len(classes)}x{centroids.dims} matvec)")
print(f"brute force{slow_cost * 1e6:9.1f} us/query  ({len(docs)} cosines)")
print(f"speedup    {slow_cost / fast_cost:9.1f}x")
