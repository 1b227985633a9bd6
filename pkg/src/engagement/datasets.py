"""Loaders for the two public benchmark corpora.

Both return plain `Corpus` objects; nothing downstream knows where a corpus
came from. Loaders are deterministic: directories and files are walked in
sorted order and record ids are stable.
"""

from __future__ import annotations

import html
import logging
import re
from pathlib import Path

from .corpus import Corpus, Document, derive_combined_class
from .errors import IngestionError

log = logging.getLogger(__name__)

_SPLITS = ("train", "test")


def _resolve_split_dir(root: Path, split: str) -> Path:
    candidates = [root / f"20news-bydate-{split}", root / split]
    for cand in candidates:
        if cand.is_dir():
            return cand
    raise IngestionError(
        f"newsgroup20 split directory not found; tried: {', '.join(str(c) for c in candidates)}"
    )


def load_newsgroup20(root_path: str | Path, split: str = "train") -> Corpus:
    """Load the by-date newsgroup corpus: one directory per group, one file per message.

    Files that do not decode as UTF-8 are decoded with byte replacement and
    the document is flagged (`decode_replaced`), never dropped.
    """
    if split not in _SPLITS:
        raise IngestionError(f"split must be one of {_SPLITS}, got {split!r}")
    root = Path(root_path)
    if not root.is_dir():
        raise IngestionError(f"newsgroup20 root not found: {root}")
    split_dir = _resolve_split_dir(root, split)
    group_dirs = sorted(p for p in split_dir.iterdir() if p.is_dir())
    if not group_dirs:
        raise IngestionError(f"no newsgroup directories under {split_dir}")
    docs: list[Document] = []
    for group_dir in group_dirs:
        group = group_dir.name
        files = sorted(p for p in group_dir.iterdir() if p.is_file())
        for path in files:
            raw = path.read_bytes()
            try:
                body = raw.decode("utf-8")
                replaced = False
            except UnicodeDecodeError:
                body = raw.decode("utf-8", errors="replace")
                replaced = True
            if not body.strip():
                continue
            docs.append(
                Document(
                    doc_id=f"{group}/{path.name}",
                    provider_id=group,
                    class_id=group,
                    body=body,
                    decode_replaced=replaced,
                )
            )
    if not docs:
        raise IngestionError(f"no documents found under {split_dir}")
    return Corpus.from_documents(docs, split)


_REUTERS_OPEN = re.compile(r"<REUTERS\b([^>]*)>")
_ATTR = re.compile(r'(\w+)="([^"]*)"')
_TOPICS_BLOCK = re.compile(r"<TOPICS>(.*?)</TOPICS>", re.DOTALL)
_D_TAG = re.compile(r"<D>(.*?)</D>", re.DOTALL)
_TEXT_BLOCK = re.compile(r"<TEXT([^>]*)>(.*?)</TEXT>", re.DOTALL)
_TITLE = re.compile(r"<TITLE>(.*?)</TITLE>", re.DOTALL)
_BODY = re.compile(r"<BODY>(.*?)</BODY>", re.DOTALL)


def _clean(fragment: str) -> str:
    return html.unescape(fragment).strip()


def parse_reuters_sgml(sgml: str) -> tuple[list[dict], int]:
    """Parse one .sgm file into record dicts; returns (records, skipped_count).

    A record dict has keys: newid, lewissplit, topics_attr, topics (list),
    body (str, possibly empty). Malformed records (unclosed, stray close,
    missing NEWID) are skipped and counted, never raised.
    """
    records: list[dict] = []
    skipped = 0
    chunks = sgml.split("</REUTERS>")
    tail = chunks.pop() if chunks else sgml
    skipped += len(_REUTERS_OPEN.findall(tail))
    for chunk in chunks:
        opens = list(_REUTERS_OPEN.finditer(chunk))
        if not opens:
            skipped += 1  # close tag with no opening
            continue
        skipped += len(opens) - 1  # earlier openings never closed
        last = opens[-1]
        attrs = dict(_ATTR.findall(last.group(1)))
        if "NEWID" not in attrs:
            skipped += 1
            continue
        inner = chunk[last.end():]
        topics_m = _TOPICS_BLOCK.search(inner)
        topics = [_clean(t) for t in _D_TAG.findall(topics_m.group(1))] if topics_m else []
        topics = [t for t in topics if t]
        body = ""
        text_m = _TEXT_BLOCK.search(inner)
        if text_m:
            text_attrs = dict(_ATTR.findall(text_m.group(1)))
            content = text_m.group(2)
            if text_attrs.get("TYPE") == "UNPROC":
                body = _clean(content)
            else:
                title_m = _TITLE.search(content)
                body_m = _BODY.search(content)
                parts = [m.group(1) for m in (title_m, body_m) if m]
                body = _clean("\n".join(parts)) if parts else _clean(content)
        records.append(
            {
                "newid": attrs["NEWID"],
                "lewissplit": attrs.get("LEWISSPLIT", ""),
                "topics_attr": attrs.get("TOPICS", ""),
                "topics": topics,
                "body": body,
            }
        )
    return records, skipped


def load_reuters21578(root_path: str | Path, split: str = "train") -> Corpus:
    """Load the newswire corpus from its SGML distribution (reut2-*.sgm files).

    Split selection follows the modified Apte convention: the LEWISSPLIT
    attribute picks the side and only records with TOPICS=\"YES\" and at
    least one topic tag are kept. Multi-topic documents get a combined class
    label (sorted topics joined with \"-\"); the topic list is recorded as
    the class's provider grouping.
    """
    if split not in _SPLITS:
        raise IngestionError(f"split must be one of {_SPLITS}, got {split!r}")
    root = Path(root_path)
    if not root.is_dir():
        raise IngestionError(f"reuters root not found: {root}")
    sgm_files = sorted(root.glob("*.sgm"))
    if not sgm_files:
        raise IngestionError(f"no .sgm files under {root}")
    wanted = "TRAIN" if split == "train" else "TEST"
    docs: list[Document] = []
    groupings: dict[str, list[str]] = {}
    skipped_total = 0
    for path in sgm_files:
        records, skipped = parse_reuters_sgml(path.read_bytes().decode("latin-1"))
        skipped_total += skipped
        for rec in records:
            if rec["lewissplit"] != wanted or rec["topics_attr"] != "YES":
                continue
            if not rec["topics"]:
                continue  # unlabeled records carry no attribution target
            if not rec["body"]:
                skipped_total += 1
                continue
            class_id = derive_combined_class(rec["topics"])
            groupings[class_id] = sorted(set(rec["topics"]))
            docs.append(
                Document(
                    doc_id=f"reuters-{rec['newid']}",
                    provider_id=class_id,
                    class_id=class_id,
                    body=rec["body"],
                )
            )
    if skipped_total:
        log.warning("reuters loader skipped %d unusable records", skipped_total)
    if not docs:
        raise IngestionError(f"no usable {split} documents under {root}")
    return Corpus.from_documents(docs, split, groupings)
