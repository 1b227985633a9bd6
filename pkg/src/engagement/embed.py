"""Internal embedding pipeline: vocabulary, TF-IDF, reduced basis, centroids.

Text becomes a sparse TF-IDF vector over a fixed vocabulary, then a dense
low-dimensional vector via a mean-centered truncated SVD basis. Per-class
centroids (means of unit-normalized member vectors) make similarity scoring
against a prompt a single matrix-vector product.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .errors import EmbeddingError
from .hashing import digest_parts
from .text import tokenize

FORMAT_VERSION = 1


# ---------------------------------------------------------------- vocabulary


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Fixed term list with document frequencies, ordered lexicographically."""

    terms: tuple[str, ...]
    dfs: np.ndarray  # int64, document frequency per term
    n_docs: int
    min_df: int = 1
    max_features: int | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)
    _idf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.terms:
            raise EmbeddingError("vocabulary is empty")
        if list(self.terms) != sorted(self.terms):
            raise EmbeddingError("vocabulary terms must be lexicographically sorted")
        dfs = np.asarray(self.dfs, dtype=np.int64)
        if dfs.shape != (len(self.terms),):
            raise EmbeddingError("dfs length does not match term count")
        if self.n_docs < 1 or np.any(dfs < 1) or np.any(dfs > self.n_docs):
            raise EmbeddingError("document frequencies must lie in [1, n_docs]")
        object.__setattr__(self, "dfs", dfs)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})
        idf = np.log((1.0 + self.n_docs) / (1.0 + dfs)) + 1.0
        object.__setattr__(self, "_idf", idf)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def idf(self) -> np.ndarray:
        return self._idf

    def transform(self, text: str) -> dict[int, float]:
        """Sparse L2-normalized TF-IDF map for one text; {} when all tokens are OOV."""
        counts = Counter(tokenize(text))
        pairs = [(self._index[t], tf) for t, tf in counts.items() if t in self._index]
        if not pairs:
            return {}
        pairs.sort()
        idx = np.array([i for i, _ in pairs], dtype=np.int64)
        weights = np.array([tf for _, tf in pairs], dtype=np.float64) * self._idf[idx]
        weights /= np.linalg.norm(weights)
        return {int(i): float(w) for i, w in zip(idx, weights)}

    def digest(self) -> str:
        return digest_parts(
            "vocabulary",
            "\n".join(self.terms),
            self.dfs,
            self.n_docs,
            self.min_df,
            self.max_features,
        )


def _bodies(source: Corpus | Iterable[str]) -> list[str]:
    if isinstance(source, Corpus):
        return [doc.body for doc in source.documents if doc.body]
    return [t for t in source]


def fit_vocabulary(
    source: Corpus | Iterable[str],
    min_df: int = 1,
    max_features: int | None = None,
) -> Vocabulary:
    """Count document frequencies and fix the term list.

    Terms below `min_df` are dropped; if `max_features` is set, the
    highest-df terms are kept (ties broken lexicographically) and the
    survivors re-sorted lexicographically.
    """
    if min_df < 1:
        raise EmbeddingError(f"min_df must be >= 1, got {min_df}")
    if max_features is not None and max_features < 1:
        raise EmbeddingError(f"max_features must be >= 1, got {max_features}")
    bodies = _bodies(source)
    if not bodies:
        raise EmbeddingError("no text documents to fit a vocabulary on")
    df_counts: Counter[str] = Counter()
    for body in bodies:
        df_counts.update(set(tokenize(body)))
    if not df_counts:
        raise EmbeddingError("corpus has no extractable tokens")
    kept = [(t, c) for t, c in df_counts.items() if c >= min_df]
    if not kept:
        raise EmbeddingError(f"no terms reach min_df={min_df}")
    if max_features is not None and len(kept) > max_features:
        kept.sort(key=lambda tc: (-tc[1], tc[0]))
        kept = kept[:max_features]
    kept.sort(key=lambda tc: tc[0])
    terms = tuple(t for t, _ in kept)
    dfs = np.array([c for _, c in kept], dtype=np.int64)
    return Vocabulary(terms, dfs, n_docs=len(bodies), min_df=min_df, max_features=max_features)


def tfidf_transform(text: str, vocab: Vocabulary) -> dict[int, float]:
    """L2-normalized TF-IDF weights keyed by term index; {} if every token is OOV."""
    return vocab.transform(text)


def tfidf_matrix(source: Corpus | Sequence[str], vocab: Vocabulary) -> sp.csr_matrix:
    """Row-per-document sparse TF-IDF matrix (rows follow document order).

    For a Corpus, only documents with bodies produce rows; callers needing
    row/document alignment should pass the body list explicitly.
    """
    bodies = _bodies(source)
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for body in bodies:
        wmap = vocab.transform(body)
        indices.extend(wmap.keys())
        data.extend(wmap.values())
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(bodies), len(vocab)),
    )


# ------------------------------------------------------------- reduced basis


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """Rank-k projection: x -> projection @ (x - centering)."""

    projection: np.ndarray  # (k, F), rows orthonormal
    centering: np.ndarray  # (F,), training mean

    def __post_init__(self) -> None:
        proj = np.ascontiguousarray(self.projection, dtype=np.float64)
        cent = np.ascontiguousarray(self.centering, dtype=np.float64)
        if proj.ndim != 2 or proj.shape[0] < 1:
            raise EmbeddingError("projection must be a (k, F) matrix")
        if cent.shape != (proj.shape[1],):
            raise EmbeddingError("centering vector length does not match projection columns")
        if not (np.all(np.isfinite(proj)) and np.all(np.isfinite(cent))):
            raise EmbeddingError("basis contains non-finite values")
        object.__setattr__(self, "projection", proj)
        object.__setattr__(self, "centering", cent)
        object.__setattr__(self, "_center_offset", proj @ cent)

    @property
    def k(self) -> int:
        return self.projection.shape[0]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    def orthonormality_error(self) -> float:
        gram = self.projection @ self.projection.T
        return float(np.max(np.abs(gram - np.eye(self.k))))

    def project_map(self, weights: Mapping[int, float]) -> np.ndarray:
        """Project a sparse weight map (already in this basis's input space)."""
        if not weights:
            raise EmbeddingError("cannot project an empty weight map")
        idx = np.fromiter(weights.keys(), dtype=np.int64, count=len(weights))
        vals = np.fromiter(weights.values(), dtype=np.float64, count=len(weights))
        if idx.min() < 0 or idx.max() >= self.input_dim:
            raise EmbeddingError("weight map index out of range for this basis")
        return self.projection[:, idx] @ vals - self._center_offset

    def project_dense(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise EmbeddingError(f"expected a vector of dim {self.input_dim}, got {x.shape}")
        return self.projection @ (x - self.centering)

    def digest(self) -> str:
        return digest_parts("reduced-basis", self.projection, self.centering)


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive (stable convention)."""
    anchor = np.argmax(np.abs(rows), axis=1)
    signs = np.sign(rows[np.arange(rows.shape[0]), anchor])
    signs[signs == 0] = 1.0
    return rows * signs[:, None]


def fit_reducer(
    matrix: sp.spmatrix | np.ndarray,
    k: int,
    *,
    seed: int = 0,
    oversample: int = 32,
    power_iterations: int = 1,
    dense_cutoff: int = 20_000_000,
) -> ReducedBasis:
    """Top-k right singular directions of the mean-centered matrix.

    Small inputs take the exact dense SVD; larger ones a seeded randomized
    range-finder that centers implicitly (Xc @ v == X @ v - (mu @ v) * 1),
    so the sparse matrix is never densified. Deterministic for a fixed
    (matrix, k, seed, oversample, power_iterations).
    """
    if sp.issparse(matrix):
        X = matrix.tocsr().astype(np.float64)
        if not np.all(np.isfinite(X.data)):
            raise EmbeddingError("matrix contains non-finite values")
    else:
        X = np.asarray(matrix, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise EmbeddingError("matrix contains non-finite values")
    n, n_features = X.shape
    if not 1 <= k <= min(n, n_features):
        raise EmbeddingError(f"k must lie in [1, {min(n, n_features)}], got {k}")
    mu = np.asarray(X.mean(axis=0), dtype=np.float64).ravel()

    if n * n_features <= dense_cutoff:
        dense = X.toarray() if sp.issparse(X) else X
        _, _, vt = np.linalg.svd(dense - mu, full_matrices=False)
        return ReducedBasis(_fix_signs(vt[:k]), mu)

    rng = np.random.default_rng(seed)
    width = min(min(n, n_features), k + oversample)
    omega = rng.standard_normal((n_features, width))
    Y = X @ omega - mu @ omega  # implicit centering, row broadcast
    del omega
    for _ in range(power_iterations):
        Q, _ = np.linalg.qr(Y)
        Z = X.T @ Q - np.outer(mu, Q.sum(axis=0))
        Qz, _ = np.linalg.qr(Z)
        del Z
        Y = X @ Qz - mu @ Qz
        del Qz
    Q, _ = np.linalg.qr(Y)
    B = (X.T @ Q).T - np.outer(Q.sum(axis=0), mu)  # B = Q^T Xc, (width, F)
    _, _, vt = np.linalg.svd(B, full_matrices=False)
    return ReducedBasis(_fix_signs(vt[:k]), mu)


# ---------------------------------------------------------------- embeddings


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    source_tag: str

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise EmbeddingError("embedding values must be a non-empty 1-D array")
        if not np.all(np.isfinite(vals)):
            raise EmbeddingError("embedding contains non-finite values")
        if not self.source_tag:
            raise EmbeddingError("embedding needs a source tag")
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> int:
        return self.values.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def unit(self) -> np.ndarray:
        n = self.norm
        if n == 0.0:
            raise EmbeddingError("zero vector has no direction")
        return self.values / n


def _check_comparable(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if a.source_tag != b.source_tag:
        raise EmbeddingError(
            f"cannot compare vectors from different spaces: {a.source_tag!r} vs {b.source_tag!r}"
        )
    if a.dims != b.dims:
        raise EmbeddingError(f"dimension mismatch: {a.dims} vs {b.dims}")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    _check_comparable(a, b)
    if a.is_zero or b.is_zero:
        raise EmbeddingError("cosine is undefined for a zero vector")
    return float(np.dot(a.values, b.values) / (a.norm * b.norm))


@dataclass(frozen=True)
class ClassCentroid:
    """Mean of the unit-normalized nonzero member vectors of one class."""

    class_id: str
    vector: EmbeddingVector
    member_count: int  # nonzero members only


def class_centroid(class_id: str, vectors: Sequence[EmbeddingVector]) -> ClassCentroid:
    nonzero = [v for v in vectors if not v.is_zero]
    if not nonzero:
        raise EmbeddingError(f"class {class_id!r} has no nonzero vectors to average")
    first = nonzero[0]
    for v in nonzero[1:]:
        _check_comparable(first, v)
    units = np.stack([v.unit() for v in nonzero])
    mean = units.mean(axis=0)
    return ClassCentroid(class_id, EmbeddingVector(mean, first.source_tag), len(nonzero))


@dataclass(frozen=True, eq=False)
class CentroidSet:
    """All class centroids stacked for one-matvec similarity scoring."""

    class_ids: tuple[str, ...]
    matrix: np.ndarray  # (C, d), row i is the centroid of class_ids[i]
    counts: np.ndarray  # int64, nonzero member count per class
    source_tag: str

    def __post_init__(self) -> None:
        if not self.class_ids:
            raise EmbeddingError("centroid set has no classes")
        if list(self.class_ids) != sorted(self.class_ids):
            raise EmbeddingError("centroid class_ids must be sorted")
        mat = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if mat.shape[0] != len(self.class_ids):
            raise EmbeddingError("centroid matrix rows do not match class count")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.class_ids),) or np.any(counts < 1):
            raise EmbeddingError("centroid counts must be positive, one per class")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_vectors(
        cls, vectors_by_class: Mapping[str, Sequence[EmbeddingVector]]
    ) -> "CentroidSet":
        centroids = [class_centroid(c, vectors_by_class[c]) for c in sorted(vectors_by_class)]
        return cls.from_centroids(centroids)

    @classmethod
    def from_centroids(cls, centroids: Sequence[ClassCentroid]) -> "CentroidSet":
        ordered = sorted(centroids, key=lambda c: c.class_id)
        tags = {c.vector.source_tag for c in ordered}
        if len(tags) != 1:
            raise EmbeddingError(f"centroids mix embedding spaces: {sorted(tags)}")
        return cls(
            class_ids=tuple(c.class_id for c in ordered),
            matrix=np.stack([c.vector.values for c in ordered]),
            counts=np.array([c.member_count for c in ordered], dtype=np.int64),
            source_tag=tags.pop(),
        )

    @property
    def dims(self) -> int:
        return self.matrix.shape[1]

    def similarity_scores(self, vector: EmbeddingVector) -> np.ndarray:
        """Per-class mean cosine between `vector` and class members, one matvec.

        centroid_i @ (v / |v|) equals the mean over the class's nonzero
        members of cos(v, member), because each centroid is the mean of
        unit member vectors.
        """
        if vector.source_tag != self.source_tag:
            raise EmbeddingError(
                f"vector space {vector.source_tag!r} does not match centroids "
                f"{self.source_tag!r}"
            )
        if vector.dims != self.dims:
            raise EmbeddingError(f"dimension mismatch: {vector.dims} vs {self.dims}")
        return self.matrix @ vector.unit()

    def digest(self) -> str:
        return digest_parts(
            "centroids", "\n".join(self.class_ids), self.matrix, self.counts, self.source_tag
        )


# ------------------------------------------------------------ text embedders


@dataclass(frozen=True, eq=False)
class InternalEmbedder:
    """TF-IDF then reduced-basis projection; the package's native text embedding."""

    vocab: Vocabulary
    basis: ReducedBasis

    def __post_init__(self) -> None:
        if self.basis.input_dim != len(self.vocab):
            raise EmbeddingError(
                f"basis expects {self.basis.input_dim} features, vocabulary has {len(self.vocab)}"
            )

    source_tag = "internal"

    @property
    def dims(self) -> int:
        return self.basis.k

    def embed(self, text: str) -> EmbeddingVector:
        """Embed one text; all-OOV or empty text yields the flagged zero vector."""
        wmap = self.vocab.transform(text)
        if not wmap:
            return EmbeddingVector(np.zeros(self.basis.k), self.source_tag)
        return EmbeddingVector(self.basis.project_map(wmap), self.source_tag)

    def embed_by_class(self, corpus: Corpus) -> dict[str, list[EmbeddingVector]]:
        """Embed every text document, grouped by class (vector-only docs rejected)."""
        out: dict[str, list[EmbeddingVector]] = {}
        for doc in corpus.documents:
            if not doc.body:
                raise EmbeddingError(
                    f"document {doc.doc_id!r} has no body; internal embedding needs text"
                )
            out.setdefault(doc.class_id, []).append(self.embed(doc.body))
        return out

    def digest(self) -> str:
        return digest_parts("internal-embedder", self.vocab.digest(), self.basis.digest())


# ---------------------------------------------------------------- persistence


def _npz_path(path: str | Path) -> Path:
    # np.savez appends .npz when missing; normalize so save and load agree.
    path = Path(path)
    return path if path.suffix == ".npz" else Path(str(path) + ".npz")


def _pack_terms(terms: Sequence[str]) -> np.ndarray:
    return np.frombuffer("\n".join(terms).encode("utf-8"), dtype=np.uint8)


def _unpack_terms(packed: np.ndarray) -> tuple[str, ...]:
    return tuple(packed.tobytes().decode("utf-8").split("\n"))


def save_embedder(embedder: InternalEmbedder, path: str | Path) -> None:
    np.savez_compressed(
        _npz_path(path),
        format_version=np.int64(FORMAT_VERSION),
        kind=np.frombuffer(b"internal-embedder", dtype=np.uint8),
        terms=_pack_terms(embedder.vocab.terms),
        dfs=embedder.vocab.dfs,
        n_docs=np.int64(embedder.vocab.n_docs),
        min_df=np.int64(embedder.vocab.min_df),
        max_features=np.int64(-1 if embedder.vocab.max_features is None else embedder.vocab.max_features),
        projection=embedder.basis.projection,
        centering=embedder.basis.centering,
    )


def _open_artifact(path: str | Path, kind: str) -> np.lib.npyio.NpzFile:
    path = _npz_path(path)
    if not path.is_file():
        raise EmbeddingError(f"artifact not found: {path}")
    data = np.load(path, allow_pickle=False)
    version = int(data["format_version"])
    if version != FORMAT_VERSION:
        raise EmbeddingError(f"{path}: unsupported format_version {version}")
    stored_kind = data["kind"].tobytes().decode("utf-8")
    if stored_kind != kind:
        raise EmbeddingError(f"{path}: expected a {kind} artifact, found {stored_kind}")
    return data


def load_embedder(path: str | Path) -> InternalEmbedder:
    data = _open_artifact(path, "internal-embedder")
    max_features = int(data["max_features"])
    vocab = Vocabulary(
        terms=_unpack_terms(data["terms"]),
        dfs=data["dfs"],
        n_docs=int(data["n_docs"]),
        min_df=int(data["min_df"]),
        max_features=None if max_features < 0 else max_features,
    )
    basis = ReducedBasis(data["projection"], data["centering"])
    return InternalEmbedder(vocab, basis)


def save_centroids(centroids: CentroidSet, path: str | Path) -> None:
    np.savez_compressed(
        _npz_path(path),
        format_version=np.int64(FORMAT_VERSION),
        kind=np.frombuffer(b"centroid-set", dtype=np.uint8),
        class_ids=_pack_terms(centroids.class_ids),
        matrix=centroids.matrix,
        counts=centroids.counts,
        source_tag=np.frombuffer(centroids.source_tag.encode("utf-8"), dtype=np.uint8),
    )


def load_centroids(path: str | Path) -> CentroidSet:
    data = _open_artifact(path, "centroid-set")
    return CentroidSet(
        class_ids=_unpack_terms(data["class_ids"]),
        matrix=data["matrix"],
        counts=data["counts"],
        source_tag=data["source_tag"].tobytes().decode("utf-8"),
    )
