"""Run configuration: one flat record, fully serialized into fingerprints.

Every knob that changes scoring lives here, so a config digest plus the
artifact digests pin down exactly what produced a ledger.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import EngagementError
from .hashing import digest_parts

HOME_ENV_VAR = "ENGAGEMENT_LEDGER_HOME"


@dataclass(frozen=True)
class RunConfig:
    # corpus
    corpus_kind: str = "manifest"  # manifest | newsgroup20 | reuters21578
    corpus_path: str = ""
    truncate_tokens: int | None = None
    # vocabulary / internal embedding
    min_df: int = 1
    max_features: int | None = None
    reduced_dims: int = 768
    reducer_seed: int = 0
    reducer_oversample: int = 32
    reducer_power_iterations: int = 1
    # external embedding (None url means internal)
    external_name: str | None = None
    external_url: str | None = None
    external_dims: int | None = None
    external_cache_dir: str | None = None
    # classifier
    feature_space: str = "tfidf-sparse"  # tfidf-sparse | reduced-dense
    epochs: int = 30
    learning_rate: float = 0.5
    l2_penalty: float = 1e-5
    batch_size: int = 128
    holdout_fraction: float = 0.1
    lr_decay: float = 0.0
    train_seed: int = 0
    # scoring / allocation
    source_mode: str = "concat"
    blend_alpha: float = 0.5
    waitlist_pool_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.corpus_kind not in ("manifest", "newsgroup20", "reuters21578"):
            raise EngagementError(f"unknown corpus_kind {self.corpus_kind!r}")
        if self.feature_space not in ("tfidf-sparse", "reduced-dense"):
            raise EngagementError(f"unknown feature_space {self.feature_space!r}")
        if self.source_mode not in ("prompt", "response", "concat", "mean"):
            raise EngagementError(f"unknown source_mode {self.source_mode!r}")
        if not 0.0 <= self.blend_alpha <= 1.0:
            raise EngagementError("blend_alpha must lie in [0, 1]")
        if not 0.0 <= self.waitlist_pool_fraction < 1.0:
            raise EngagementError("waitlist_pool_fraction must lie in [0, 1)")
        external_bits = (self.external_name, self.external_url, self.external_dims)
        if any(x is not None for x in external_bits) and not all(
            x is not None for x in external_bits
        ):
            raise EngagementError(
                "external embedding needs external_name, external_url, and external_dims together"
            )

    @property
    def uses_external_embedder(self) -> bool:
        return self.external_url is not None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise EngagementError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise EngagementError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise EngagementError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise EngagementError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def digest(self) -> str:
        return digest_parts("run-config", json.dumps(self.to_dict(), sort_keys=True))


def resolve_home(cli_value: str | None) -> Path:
    """Artifact/ledger home: --home flag wins, then the environment variable."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(HOME_ENV_VAR)
    if env:
        return Path(env)
    raise EngagementError(
        f"no ledger home given; pass --home or set {HOME_ENV_VAR}"
    )
