"""Corpus model: documents grouped into provider classes.

A class is the unit the classifier and the ledger see. It is either a
single provider or a declared grouping of providers (for multi-topic
corpora the group label is the sorted topic list joined with "-").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IngestionError
from .text import count_tokens, token_spans


@dataclass
class Document:
    doc_id: str
    provider_id: str
    class_id: str
    body: str = ""
    vector: np.ndarray | None = None
    decode_replaced: bool = False

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise IngestionError("document has an empty doc_id")
        if not self.class_id:
            raise IngestionError(f"document {self.doc_id!r} has an empty class_id")
        if not self.provider_id:
            raise IngestionError(f"document {self.doc_id!r} has an empty provider_id")
        if self.vector is not None:
            vec = np.asarray(self.vector, dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise IngestionError(f"document {self.doc_id!r} vector must be 1-D and non-empty")
            if not np.all(np.isfinite(vec)):
                raise IngestionError(f"document {self.doc_id!r} vector has non-finite entries")
            self.vector = vec
        if not self.body and self.vector is None:
            raise IngestionError(f"document {self.doc_id!r} has neither body text nor a vector")

    def token_count(self) -> int:
        return count_tokens(self.body)


@dataclass(frozen=True)
class ProviderClass:
    class_id: str
    provider_ids: tuple[str, ...]
    doc_count: int

    def __post_init__(self) -> None:
        if not self.class_id:
            raise IngestionError("provider class has an empty class_id")
        if not self.provider_ids:
            raise IngestionError(f"class {self.class_id!r} lists no providers")
        if self.doc_count < 0:
            raise IngestionError(f"class {self.class_id!r} has a negative doc_count")


@dataclass
class Corpus:
    documents: tuple[Document, ...]
    classes: tuple[ProviderClass, ...]
    split: str = "train"

    def __post_init__(self) -> None:
        self.documents = tuple(self.documents)
        self.classes = tuple(self.classes)
        self.validate()

    @classmethod
    def from_documents(
        cls,
        documents: Iterable[Document],
        split: str = "train",
        groupings: Mapping[str, Sequence[str]] | None = None,
    ) -> "Corpus":
        """Build a corpus, deriving the class table from the documents.

        `groupings` optionally declares the provider list behind a grouped
        class label; classes not listed there get the providers observed on
        their documents.
        """
        docs = tuple(documents)
        by_class: dict[str, list[Document]] = {}
        for doc in docs:
            by_class.setdefault(doc.class_id, []).append(doc)
        classes = []
        for class_id in sorted(by_class):
            members = by_class[class_id]
            if groupings and class_id in groupings:
                providers = tuple(sorted(set(groupings[class_id])))
            else:
                providers = tuple(sorted({d.provider_id for d in members}))
            classes.append(ProviderClass(class_id, providers, len(members)))
        return cls(docs, tuple(classes), split)

    def validate(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise IngestionError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        declared = {c.class_id: c for c in self.classes}
        if len(declared) != len(self.classes):
            raise IngestionError("duplicate class_id in class table")
        counts: dict[str, int] = {c: 0 for c in declared}
        for doc in self.documents:
            if doc.class_id not in declared:
                raise IngestionError(
                    f"document {doc.doc_id!r} references undeclared class {doc.class_id!r}"
                )
            counts[doc.class_id] += 1
        for class_id, pc in declared.items():
            if pc.doc_count != counts[class_id]:
                raise IngestionError(
                    f"class {class_id!r} declares {pc.doc_count} documents, found {counts[class_id]}"
                )
        dims = {doc.vector.size for doc in self.documents if doc.vector is not None}
        if len(dims) > 1:
            raise IngestionError(f"documents carry vectors of mixed dimensions {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.documents)

    def class_ids(self) -> tuple[str, ...]:
        return tuple(sorted(c.class_id for c in self.classes))

    def documents_by_class(self) -> dict[str, list[Document]]:
        out: dict[str, list[Document]] = {c: [] for c in self.class_ids()}
        for doc in self.documents:
            out[doc.class_id].append(doc)
        return out


def derive_combined_class(topics: Sequence[str]) -> str:
    """Label for a document tagged with several topics.

    Topics are deduplicated, sorted lexicographically, and joined with "-",
    so the label is independent of tag order.
    """
    cleaned = sorted({t for t in topics if t})
    if not cleaned:
        raise IngestionError("cannot derive a class label from an empty topic list")
    return "-".join(cleaned)


def truncate_documents(corpus: Corpus, target_tokens: int) -> Corpus:
    """Return a corpus whose document bodies hold at most `target_tokens` tokens.

    Longer bodies keep the prefix through the end of the target-th token;
    shorter bodies pass through untouched. Vector-only documents are
    untouched as well.
    """
    if target_tokens < 1:
        raise IngestionError(f"target_tokens must be >= 1, got {target_tokens}")
    docs = []
    for doc in corpus.documents:
        if not doc.body:
            docs.append(doc)
            continue
        spans = token_spans(doc.body)
        if len(spans) <= target_tokens:
            docs.append(doc)
            continue
        cut = spans[target_tokens - 1][1]
        docs.append(replace(doc, body=doc.body[:cut]))
    return Corpus(tuple(docs), corpus.classes, corpus.split)


def partition_by_provider(corpus: Corpus, provider_to_class: Mapping[str, str]) -> Corpus:
    """Relabel every document's class via a provider -> class mapping.

    The mapping must cover every provider_id present in the corpus; anything
    uncovered is an error naming the missing providers.
    """
    missing = sorted({d.provider_id for d in corpus.documents} - set(provider_to_class))
    if missing:
        raise IngestionError(f"provider mapping does not cover providers: {missing}")
    groupings: dict[str, set[str]] = {}
    for provider, class_id in provider_to_class.items():
        if not class_id:
            raise IngestionError(f"provider {provider!r} maps to an empty class_id")
        groupings.setdefault(class_id, set()).add(provider)
    docs = tuple(
        replace(doc, class_id=provider_to_class[doc.provider_id]) for doc in corpus.documents
    )
    used = {d.class_id for d in docs}
    return Corpus.from_documents(
        docs, corpus.split, {c: sorted(p) for c, p in groupings.items() if c in used}
    )


def load_manifest(path: str | Path, split: str = "train") -> Corpus:
    """Read a JSONL manifest: one document per line.

    Each record carries doc_id, provider_id, class_id, and either a `body`
    string or a `vector` list of floats.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"manifest not found: {path}")
    docs: list[Document] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(rec, dict):
                raise IngestionError(f"{path}:{lineno}: record is not an object")
            for key in ("doc_id", "provider_id", "class_id"):
                if key not in rec:
                    raise IngestionError(f"{path}:{lineno}: missing key {key!r}")
            vector = rec.get("vector")
            body = rec.get("body", "")
            try:
                docs.append(
                    Document(
                        doc_id=str(rec["doc_id"]),
                        provider_id=str(rec["provider_id"]),
                        class_id=str(rec["class_id"]),
                        body=str(body) if body else "",
                        vector=np.asarray(vector, dtype=np.float64) if vector is not None else None,
                    )
                )
            except IngestionError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    try:
        return Corpus.from_documents(docs, split)
    except IngestionError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def save_manifest(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            rec: dict[str, object] = {
                "doc_id": doc.doc_id,
                "provider_id": doc.provider_id,
                "class_id": doc.class_id,
            }
            if doc.vector is not None:
                rec["vector"] = [float(x) for x in doc.vector]
            else:
                rec["body"] = doc.body
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
