"""Client for an external embedding endpoint, with a content-hash disk cache.

The endpoint contract is one POST per text: request body {"text": ...},
response body {"vector": [floats]} with a fixed, declared dimension.
Responses are cached by content hash so repeated texts never re-hit the
network; transient failures get bounded retries, malformed payloads and
dimension mismatches fail hard.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed import EmbeddingVector
from .errors import ExternalEmbedderError
from .hashing import digest_parts


@dataclass(frozen=True)
class ExternalEmbedder:
    name: str
    url: str
    dims: int
    cache_dir: Path | None = None
    timeout: float = 10.0
    max_retries: int = 3
    retry_wait: float = 0.5

    def __post_init__(self) -> None:
        if not self.name:
            raise ExternalEmbedderError("external embedder needs a name")
        if self.dims < 1:
            raise ExternalEmbedderError(f"dims must be >= 1, got {self.dims}")
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))

    @property
    def source_tag(self) -> str:
        return f"external:{self.name}"

    def _cache_path(self, text: str) -> Path | None:
        if self.cache_dir is None:
            return None
        key = hashlib.sha256(f"{self.name}:{self.dims}:{text}".encode("utf-8")).hexdigest()
        return self.cache_dir / f"{key}.json"

    def _as_vector(self, raw: object, origin: str) -> EmbeddingVector:
        try:
            values = np.asarray(raw, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ExternalEmbedderError(f"{origin}: vector is not numeric") from exc
        if values.ndim != 1:
            raise ExternalEmbedderError(f"{origin}: vector is not 1-D")
        if values.size != self.dims:
            raise ExternalEmbedderError(
                f"{origin}: got {values.size} dimensions, embedder {self.name!r} "
                f"declares {self.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise ExternalEmbedderError(f"{origin}: vector has non-finite entries")
        return EmbeddingVector(values, self.source_tag)

    def _fetch(self, text: str) -> list[float]:
        payload = json.dumps({"text": text}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}, method="POST"
        )
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    body = resp.read()
                break
            except urllib.error.HTTPError as exc:
                if 400 <= exc.code < 500:
                    raise ExternalEmbedderError(
                        f"embedding endpoint rejected the request: HTTP {exc.code}"
                    ) from exc
                last_error = exc
            except (urllib.error.URLError, OSError) as exc:
                last_error = exc
            if attempt + 1 < self.max_retries:
                time.sleep(self.retry_wait * (attempt + 1))
        else:
            raise ExternalEmbedderError(
                f"embedding endpoint unreachable after {self.max_retries} attempts: {last_error}"
            )
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ExternalEmbedderError("embedding endpoint returned invalid JSON") from exc
        if not isinstance(doc, dict) or "vector" not in doc:
            raise ExternalEmbedderError('embedding endpoint response lacks a "vector" field')
        return doc["vector"]

    def embed(self, text: str) -> EmbeddingVector:
        cache_path = self._cache_path(text)
        if cache_path is not None and cache_path.is_file():
            try:
                cached = json.loads(cache_path.read_text(encoding="utf-8"))
                return self._as_vector(cached["vector"], f"cache entry {cache_path.name}")
            except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError):
                # unreadable cache entry is a miss, not an outage; refetch and overwrite
                pass
        raw = self._fetch(text)
        vector = self._as_vector(raw, "endpoint response")
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = cache_path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"vector": [float(x) for x in vector.values]}), "utf-8")
            os.replace(tmp, cache_path)
        return vector

    def digest(self) -> str:
        return digest_parts("external-embedder", self.name, self.url, self.dims)


def external_embed(text: str, embedder: ExternalEmbedder) -> EmbeddingVector:
    """Embed one text via the endpoint (cache-first)."""
    return embedder.embed(text)
