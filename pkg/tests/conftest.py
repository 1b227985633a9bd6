"""Shared fixtures: synthetic corpora, trained pipelines, dataset gating."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from engagement.config import RunConfig
from engagement.corpus import Corpus, Document
from engagement.pipeline import BuiltArtifacts, build_artifacts, make_engine
from engagement.score import ScoringEngine

NEWSGROUP_ENV = "ENGAGEMENT_NEWSGROUP20_ROOT"
REUTERS_ENV = "ENGAGEMENT_REUTERS_ROOT"
_DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def make_synthetic_corpus(
    n_classes: int = 3,
    docs_per_class: int = 40,
    signature_words: int = 30,
    shared_words: int = 10,
    words_per_doc: int = 40,
    seed: int = 0,
    split: str = "train",
) -> Corpus:
    """Corpus with per-class signature vocabularies plus shared filler."""
    rng = np.random.default_rng(seed)
    class_names = [f"class{chr(ord('a') + c)}" for c in range(n_classes)]
    shared = [f"common{j:02d}" for j in range(shared_words)]
    documents = []
    for ci, cname in enumerate(class_names):
        signature = [f"{cname}sig{j:02d}" for j in range(signature_words)]
        for d in range(docs_per_class):
            # roughly 70% signature tokens, 30% shared filler
            n_sig = int(round(words_per_doc * 0.7))
            words = list(rng.choice(signature, size=n_sig))
            words += list(rng.choice(shared, size=words_per_doc - n_sig))
            rng.shuffle(words)
            documents.append(
                Document(
                    doc_id=f"{cname}/{d:03d}",
                    provider_id=cname,
                    class_id=cname,
                    body=" ".join(words),
                )
            )
    return Corpus.from_documents(documents, split=split)


def small_config(**overrides) -> RunConfig:
    defaults = dict(
        corpus_kind="manifest",
        corpus_path="unused.jsonl",
        reduced_dims=16,
        epochs=25,
        batch_size=32,
        holdout_fraction=0.1,
        train_seed=0,
        reducer_seed=0,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


@pytest.fixture(scope="session")
def synth_corpus() -> Corpus:
    return make_synthetic_corpus()


@pytest.fixture(scope="session")
def built_small(synth_corpus) -> BuiltArtifacts:
    return build_artifacts(small_config(), synth_corpus)


@pytest.fixture(scope="session")
def engine_small(built_small) -> ScoringEngine:
    return make_engine(built_small)


def _dataset_root(env_var: str, *candidates: str) -> Path | None:
    override = os.environ.get(env_var)
    if override:
        path = Path(override)
        return path if path.is_dir() else None
    for name in candidates:
        path = _DATA_DIR / name
        if path.is_dir():
            return path
    return None


def newsgroup_root() -> Path | None:
    return _dataset_root(NEWSGROUP_ENV, "20news-bydate", "20news")


def reuters_root() -> Path | None:
    root = _dataset_root(REUTERS_ENV, "reuters21578", "reuters-21578")
    if root is not None and not list(root.glob("*.sgm")):
        return None
    return root


requires_newsgroup = pytest.mark.skipif(
    newsgroup_root() is None,
    reason=f"Newsgroup20 corpus not found (set {NEWSGROUP_ENV} or place it under data/)",
)
requires_reuters = pytest.mark.skipif(
    reuters_root() is None,
    reason=f"Reuters-21578 corpus not found (set {REUTERS_ENV} or place it under data/)",
)


# ---------------------------------------------------------------------------
# Acceptance summary: one pass/fail line per criterion at the end of the run.

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or "test_criterion" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
            _ACCEPTANCE[name] = ("SKIP", reason)
            return
        outcome = "PASS" if report.passed else "FAIL"
        if hasattr(report, "wasxfail"):
            outcome = "XFAIL"
        _ACCEPTANCE[name] = (outcome, "")
    elif report.when == "setup" and report.skipped:
        reason = ""
        if isinstance(report.longrepr, tuple):
            reason = report.longrepr[2]
        _ACCEPTANCE[name] = ("SKIP", reason)
    elif report.when == "setup" and report.failed:
        _ACCEPTANCE[name] = ("ERROR", "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, reason = _ACCEPTANCE[name]
        label = name.replace("test_", "").replace("_", " ")
        line = f"{outcome:5s} {label}"
        if reason:
            line += f" [{reason}]"
        terminalreporter.write_line(line)
