"""Acceptance suite: one test per shipped claim, each at its stated tolerance.

Criteria 1-5 and the timing half of 6 reproduce published-corpus results and
need the Newsgroup20 / Reuters-21578 trees on disk (see README for
placement); they skip with an explicit reason otherwise. Everything else is
synthetic and always runs. The terminal summary prints one line per
criterion.
"""

from __future__ import annotations

import math
from time import perf_counter

import numpy as np
import pytest
from conftest import (
    make_synthetic_corpus,
    newsgroup_root,
    requires_newsgroup,
    requires_reuters,
    reuters_root,
)

from engagement.allocate import (
    largest_remainder,
    score_item,
    score_item_multitask,
    score_waitlist,
    waitlist_similarity_row,
)
from engagement.classify import ProbVector, TrainConfig, loss_and_grad, train
from engagement.config import RunConfig
from engagement.ledger_store import EventLog, load_snapshot, replay, snapshot
from engagement.pipeline import build_artifacts, load_corpus, make_engine
from engagement.score import (
    EventScore,
    PromptEvent,
    ScoreLedger,
    brute_force_similarity,
    normalize,
)

HST_SUBJECT = "HST Servicing Mission Scheduled for 11 Days"
SKY_PROMPT = "Why the sky is blue?"


# ------------------------------------------------------- corpus-backed setup


@pytest.fixture(scope="session")
def ng_train():
    """Train the default pipeline on the by-date train split, timed."""
    config = RunConfig(
        corpus_kind="newsgroup20",
        corpus_path=str(newsgroup_root()),
        max_features=50_000,
        reduced_dims=768,
    )
    started = perf_counter()
    corpus = load_corpus(config, split="train")
    built = build_artifacts(config, corpus)
    elapsed = perf_counter() - started
    return built, make_engine(built), corpus, elapsed


@pytest.fixture(scope="session")
def ng_test_corpus():
    config = RunConfig(corpus_kind="newsgroup20", corpus_path=str(newsgroup_root()))
    return load_corpus(config, split="test")


@pytest.fixture(scope="session")
def hst_document(ng_test_corpus):
    """The sci.space test document located by its Subject line."""
    matches = [
        d
        for d in ng_test_corpus.documents
        if d.class_id == "sci.space" and HST_SUBJECT in d.body
    ]
    if len(matches) > 1:
        # the Subject recurs in follow-ups; the original discusses re-boosting
        narrowed = [d for d in matches if "re-boost" in d.body]
        matches = narrowed or matches[:1]
    assert matches, "document with the HST servicing-mission subject not found"
    return matches[0]


@pytest.fixture(scope="session")
def ng_space_ledger(ng_train, ng_test_corpus):
    """All sci.space test documents ingested as unit-weight events."""
    _, engine, _, _ = ng_train
    docs = [d for d in ng_test_corpus.documents if d.class_id == "sci.space"]
    ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
    for doc in docs:
        ledger.ingest_score(engine.score_event(PromptEvent(doc.doc_id, doc.body)))
    return ledger, len(docs)


@pytest.fixture(scope="session")
def reuters_train():
    config = RunConfig(
        corpus_kind="reuters21578",
        corpus_path=str(reuters_root()),
        reduced_dims=64,  # probabilities drive this check, not the embedding
    )
    corpus = load_corpus(config, split="train")
    built = build_artifacts(config, corpus)
    return config, built, make_engine(built)


# ------------------------------------------------------------- criteria 1-5


@requires_newsgroup
def test_criterion_01_single_document_rank(ng_train, hst_document):
    """The HST document scores argmax sci.space at >= 0.85, trained in <= 5 min."""
    _, engine, _, elapsed = ng_train
    score = engine.score_event(PromptEvent("hst", hst_document.body))
    prob = dict(zip(score.prob.class_ids, score.prob.values))
    top = max(prob, key=prob.get)
    assert top == "sci.space", f"argmax class is {top!r}"
    assert prob["sci.space"] >= 0.85, f"sci.space probability {prob['sci.space']:.4f}"
    assert elapsed <= 300.0, f"training took {elapsed:.1f}s, budget is 300s"


@requires_newsgroup
def test_criterion_02_aggregate_class_sum(ng_train, ng_space_ledger):
    """394 sci.space test events: sci.space sum is max and >= 0.70 x 394."""
    _, engine, _, _ = ng_train
    ledger, n_docs = ng_space_ledger
    assert n_docs == 394, f"expected 394 sci.space test documents, found {n_docs}"
    sums = dict(zip(ledger.class_ids, ledger.prob_sums))
    top = max(sums, key=sums.get)
    assert top == "sci.space", f"largest class sum is {top!r}"
    assert sums["sci.space"] >= 0.70 * 394, f"sci.space sum {sums['sci.space']:.1f}"
    total = float(ledger.prob_sums.sum())
    assert total == pytest.approx(394.0, abs=1e-6), f"total probability mass {total!r}"


@requires_newsgroup
def test_criterion_03_prompt_rank(ng_train):
    """sci.space sits in the classifier's top-2 classes for the sky prompt."""
    _, engine, _, _ = ng_train
    score = engine.score_event(PromptEvent("sky", SKY_PROMPT))
    prob = dict(zip(score.prob.class_ids, score.prob.values))
    top2 = sorted(prob, key=prob.get, reverse=True)[:2]
    assert "sci.space" in top2, f"top-2 classes are {top2}"


@requires_reuters
def test_criterion_04_many_class_aggregate(reuters_train):
    """Combined-class count in [400, 520]; earn leads over its 1041 test docs."""
    config, built, engine = reuters_train
    n_classes = len(built.classifier.class_ids)
    assert 400 <= n_classes <= 520, f"trained {n_classes} classes"

    test_corpus = load_corpus(config, split="test")
    earn_docs = [d for d in test_corpus.documents if d.class_id == "earn"]
    assert len(earn_docs) == 1041, f"found {len(earn_docs)} earn-only test documents"
    ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
    for doc in earn_docs:
        ledger.ingest_score(engine.score_event(PromptEvent(doc.doc_id, doc.body)))
    sums = dict(zip(ledger.class_ids, ledger.prob_sums))
    top = max(sums, key=sums.get)
    assert top == "earn", f"largest class sum is {top!r}"
    assert sums["earn"] >= 0.60 * 1041, f"earn sum {sums['earn']:.1f}"


@requires_newsgroup
def test_criterion_05_similarity_rank(ng_train, hst_document):
    """Mean-cosine ranking puts sci.space first for the HST document, with
    at least one genuinely negative class."""
    built, engine, _, _ = ng_train
    assert built.internal_embedder is not None
    assert built.internal_embedder.basis.projection.shape[0] == 768
    vector = built.internal_embedder.embed(hst_document.body)
    sims = built.centroids.similarity_scores(vector)
    assert len(built.centroids.class_ids) == 20
    top = built.centroids.class_ids[int(np.argmax(sims))]
    assert top == "sci.space", f"highest mean cosine is {top!r}"
    assert float(sims.min()) < 0.0, "no class has negative mean cosine"


# --------------------------------------------- criterion 6: centroid oracle


def test_criterion_06_equivalence(built_small, engine_small, synth_corpus):
    """Fast-path similarities match the literal mean-of-cosines oracle to
    relative 1e-9 on every class, across 120 random prompts."""
    embedder = built_small.internal_embedder
    members: dict[str, list] = {}
    for doc in synth_corpus.documents:
        members.setdefault(doc.class_id, []).append(embedder.embed(doc.body))

    vocab = [f"class{c}sig{j:02d}" for c in "abc" for j in range(30)]
    vocab += [f"common{j:02d}" for j in range(10)]
    rng = np.random.default_rng(6)
    for _ in range(120):
        words = rng.choice(vocab, size=int(rng.integers(3, 12)))
        event = PromptEvent(f"p{_}", " ".join(words))
        score = engine_small.score_event(event)
        assert score.sims is not None
        oracle = brute_force_similarity(embedder.embed(event.prompt), members)
        for cid, fast in zip(score.prob.class_ids, score.sims):
            assert math.isclose(fast, oracle[cid], rel_tol=1e-9, abs_tol=1e-12)


@requires_newsgroup
def test_criterion_06_timing(ng_train, ng_test_corpus):
    """One-matvec scoring is >= 10x cheaper per event than the full sweep."""
    built, _, train_corpus, _ = ng_train
    embedder = built.internal_embedder
    members: dict[str, list] = {}
    for doc in train_corpus.documents:
        vec = embedder.embed(doc.body)
        if not vec.is_zero:
            members.setdefault(doc.class_id, []).append(vec)

    prompts = [d.body for d in ng_test_corpus.documents[:20]]
    vectors = [embedder.embed(p) for p in prompts]
    vectors = [v for v in vectors if not v.is_zero]

    repeats = 50  # the fast path is microseconds; average away timer noise
    started = perf_counter()
    for _ in range(repeats):
        for v in vectors:
            built.centroids.similarity_scores(v)
    fast = (perf_counter() - started) / (repeats * len(vectors))

    started = perf_counter()
    for v in vectors:
        brute_force_similarity(v, members)
    brute = (perf_counter() - started) / len(vectors)
    assert brute >= 10.0 * fast, f"fast {fast * 1e6:.1f}us vs brute {brute * 1e6:.1f}us"


# ------------------------------------------------- criteria 7-8: allocation


def test_criterion_07_allocation_exactness_fuzz():
    """1000 random apportionments: exact totals, no negatives, error <= 1 unit."""
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 501))
        total = int(rng.integers(0, 10**9 + 1))
        weights = rng.dirichlet(np.full(n, float(rng.uniform(0.2, 3.0))))
        scores = {f"c{i:03d}": float(w) for i, w in enumerate(weights)}
        shares = largest_remainder(total, scores)
        assert sum(shares.values()) == total
        assert min(shares.values()) >= 0
        weight_sum = sum(scores.values())
        for key, score in scores.items():
            quota = total * score / weight_sum
            assert abs(shares[key] - quota) <= 1.0 + 1e-6


def test_criterion_08_waitlist_properties(built_small, engine_small, synth_corpus):
    """Uniform row scores 1/C; a cloned-class provider beats it; bounds hold."""
    by_class: dict[str, list[str]] = {}
    for doc in synth_corpus.documents:
        by_class.setdefault(doc.class_id, []).append(doc.body)

    # a ledger tilted toward classa, fed from its own training text
    ledger = ScoreLedger(engine_small.class_ids, engine_small.fingerprint)
    plan = [("classa", 10), ("classb", 3), ("classc", 3)]
    for cname, count in plan:
        for i in range(count):
            event = PromptEvent(f"{cname}-{i}", by_class[cname][i])
            ledger.ingest_score(engine_small.score_event(event))
    report = normalize(ledger)

    n = len(report.class_ids)
    uniform_row = {c: 1.0 / n for c in report.class_ids}
    clone_row = waitlist_similarity_row(
        by_class["classa"][:10], built_small.centroids, engine_small.embedder
    )
    entries = score_waitlist(report, {"uniform": uniform_row, "clone": clone_row})
    assert entries["uniform"].score == pytest.approx(1.0 / n, abs=1e-12)
    assert entries["clone"].score > entries["uniform"].score

    rng = np.random.default_rng(8)
    for _ in range(1000):
        k = int(rng.integers(2, 21))
        classes = [f"c{i:02d}" for i in range(k)]
        shares = {c: float(p) for c, p in zip(classes, rng.dirichlet(np.ones(k)))}
        row = {c: float(s) for c, s in zip(classes, rng.dirichlet(np.ones(k)))}
        got = score_waitlist(shares, {"w": row})["w"].score
        assert min(shares.values()) - 1e-12 <= got <= max(shares.values()) + 1e-12


# ------------------------------------------------ criterion 9: item scoring


def test_criterion_09_item_score_oracle():
    """Profile and pair-profile item scores match literal double sums to
    1e-12; degenerate pairs reduce pair scoring to plain profile scoring."""
    classes = ("x", "y", "z")
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        item_prob = {c: float(v) for c, v in zip(classes, rng.dirichlet(np.ones(3)))}
        item_sim = {c: float(v) for c, v in zip(classes, rng.dirichlet(np.ones(3)))}
        events = []
        for p in range(10):
            prob_row = {c: float(v) for c, v in zip(classes, rng.dirichlet(np.ones(3)))}
            sim_row = {c: float(v) for c, v in zip(classes, rng.dirichlet(np.ones(3)))}
            events.append((f"e{p}", prob_row, sim_row))

        # per-event and accumulated profile scores against explicit sums
        single = score_item(item_prob, item_sim, events[:1])
        want_one = sum(item_prob[c] * events[0][1][c] for c in classes)
        assert math.isclose(single.prob_score, want_one, rel_tol=1e-12, abs_tol=1e-15)

        got = score_item(item_prob, item_sim, events)
        want_prob = sum(
            item_prob[c] * prob_row[c] for _, prob_row, _ in events for c in classes
        )
        want_sim = sum(
            item_sim[c] * sim_row[c] for _, _, sim_row in events for c in classes
        )
        assert math.isclose(got.prob_score, want_prob, rel_tol=1e-12, abs_tol=1e-15)
        assert math.isclose(got.sim_score, want_sim, rel_tol=1e-12, abs_tol=1e-15)

        # pair profiles: [belongs, not-belongs] dotted per class and summed
        item_pairs = {c: [item_prob[c], 1.0 - item_prob[c]] for c in classes}
        pair_events = [
            (eid, {c: [row[c], 1.0 - row[c]] for c in classes})
            for eid, row, _ in events
        ]
        got_pairs = score_item_multitask(item_pairs, pair_events)
        want_pairs = sum(
            item_prob[c] * row[c] + (1.0 - item_prob[c]) * (1.0 - row[c])
            for _, row, _ in events
            for c in classes
        )
        assert math.isclose(got_pairs.score, want_pairs, rel_tol=1e-12, abs_tol=1e-15)

        # degenerate pairs [1, 0] keep only the belongs side: the pair score
        # collapses to the plain profile score under an all-ones profile
        degenerate = {c: [1.0, 0.0] for c in classes}
        got_reduced = score_item_multitask(degenerate, pair_events)
        plain = score_item(
            {c: 1.0 for c in classes}, None, [(e, row, None) for e, row, _ in events]
        )
        assert math.isclose(
            got_reduced.score, plain.prob_score, rel_tol=1e-12, abs_tol=1e-15
        )


# -------------------------------------- criterion 10: replay and durability


def _synthetic_score(i: int, rng) -> EventScore:
    sims = rng.uniform(-1.0, 1.0, 3) if rng.uniform() > 0.1 else None
    return EventScore(
        f"ev{i:05d}",
        ProbVector(("alpha", "beta", "gamma"), rng.dirichlet(np.ones(3))),
        sims,
        float(rng.uniform(0.5, 2.0)),
        "concat",
    )


def _ledger_state(ledger: ScoreLedger) -> tuple:
    return (
        ledger.prob_sums.tobytes(),
        ledger.sim_sums.tobytes(),
        ledger.total_events,
        ledger.sim_events,
        ledger.total_weight,
        ledger.event_ids,
    )


def test_criterion_10_determinism_and_durability(tmp_path):
    """10k-event replay is bit-identical; snapshot+tail matches full replay;
    truncation at any byte keeps the intact prefix readable."""
    path = tmp_path / "events.log"
    log = EventLog(path, "fp-acceptance", fsync=False)
    rng = np.random.default_rng(10)
    snap_path = tmp_path / "snap.json"
    for i in range(10_000):
        log.append_score(_synthetic_score(i, rng))
        if i == 4_999:
            mid = EventLog(path)
            snapshot(replay(mid), snap_path)
            mid.close()
    log.close()

    first = replay(EventLog(path))
    second = replay(EventLog(path))
    assert _ledger_state(first) == _ledger_state(second)

    resumed = replay(EventLog(path), base=load_snapshot(snap_path))
    np.testing.assert_allclose(resumed.prob_sums, first.prob_sums, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(resumed.sim_sums, first.sim_sums, rtol=1e-9, atol=1e-12)
    assert resumed.total_events == first.total_events
    assert resumed.total_weight == pytest.approx(first.total_weight, rel=1e-9)

    # fault injection: cut the file at sampled offsets plus a dense band over
    # the final record; the prefix of complete records must replay untouched.
    # (a byte-exhaustive sweep on a small log lives in the store's own tests)
    blob = path.read_bytes()
    newlines = np.flatnonzero(np.frombuffer(blob, dtype=np.uint8) == 0x0A)
    header_end = int(newlines[0]) + 1
    last_start = int(newlines[-2]) + 1
    cuts = sorted(
        {int(c) for c in rng.integers(header_end, len(blob), size=50)}
        | {int(c) for c in rng.integers(last_start, len(blob) + 1, size=30)}
    )
    record_ends = newlines[1:]
    for cut in cuts:
        complete = int(np.searchsorted(record_ends, cut))
        mutilated = tmp_path / "cut.log"
        mutilated.write_bytes(blob[:cut])
        reopened = EventLog(mutilated)
        records = list(reopened.records())
        reopened.close()
        assert len(records) == complete, f"cut at byte {cut}"
        assert [seq for seq, _ in records] == list(range(1, complete + 1))


# ---------------------------------------- criterion 11: classifier numerics


def test_criterion_11_classifier_numerics():
    """Analytic gradients track central differences to 1e-4; 10k probability
    vectors each sum to 1 within 1e-9."""
    rng = np.random.default_rng(11)
    X = rng.standard_normal((30, 8))
    y = rng.integers(0, 4, size=30)
    W = rng.standard_normal((4, 8)) * 0.4
    b = rng.standard_normal(4) * 0.2
    _, gw, gb = loss_and_grad(W, b, X, y, 1e-3)
    h = 1e-6
    fd_w = np.zeros_like(W)
    for idx in np.ndindex(*W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        fd_w[idx] = (
            loss_and_grad(Wp, b, X, y, 1e-3)[0] - loss_and_grad(Wm, b, X, y, 1e-3)[0]
        ) / (2 * h)
    fd_b = np.zeros_like(b)
    for j in range(b.size):
        bp, bm = b.copy(), b.copy()
        bp[j] += h
        bm[j] -= h
        fd_b[j] = (
            loss_and_grad(W, bp, X, y, 1e-3)[0] - loss_and_grad(W, bm, X, y, 1e-3)[0]
        ) / (2 * h)
    np.testing.assert_allclose(gw, fd_w, rtol=1e-4, atol=1e-10)
    np.testing.assert_allclose(gb, fd_b, rtol=1e-4, atol=1e-10)

    centers = rng.normal(size=(7, 16)) * 4.0
    features = np.concatenate([c + rng.normal(size=(60, 16)) for c in centers])
    labels = [f"k{i}" for i in range(7) for _ in range(60)]
    model = train(
        features,
        labels,
        TrainConfig(epochs=8, holdout_fraction=0.0, seed=0),
        feature_space="reduced-dense",
    ).model

    scales = rng.choice([0.1, 1.0, 10.0, 1e3], size=10_000)
    probes = rng.standard_normal((10_000, 16)) * scales[:, None]
    P = model.predict_proba_matrix(probes)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, rtol=0.0, atol=1e-9)
    assert P.min() >= 0.0
    # the one-row path agrees with the matrix path
    for row in (0, 4_999, 9_999):
        single = model.predict_proba(probes[row])
        np.testing.assert_allclose(single.values, P[row], atol=1e-12)
