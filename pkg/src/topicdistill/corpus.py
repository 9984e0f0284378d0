"""Corpus ingestion: tokenization, vocabulary building, TF vectorization.

The tokenizer is deliberately simple (lowercase, split on anything outside
a-z, drop tokens shorter than 2 characters) and is part of the documented
recipe: published lexicon sizes for the reference corpora are approximate
under it, not exact.  Stopwords are kept.  TF vectors hold raw counts.

All functions here are pure; `Vocabulary` and `Dataset` are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyVocabularyError,
    ParseError,
    UnknownSplitError,
)

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]+")


@dataclass(frozen=True)
class RawDocument:
    id: str
    label: str
    text: str


@dataclass(frozen=True)
class Vocabulary:
    """Word list ordered by descending corpus frequency (ties: lexicographic)."""

    words: tuple[str, ...]
    index: dict[str, int] = field(repr=False)
    min_freq: int = 1

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index


@dataclass(frozen=True)
class TfVector:
    """Sparse term-frequency vector: ascending word indices, counts >= 1."""

    indices: np.ndarray  # int64, strictly ascending
    counts: np.ndarray  # int64, all >= 1
    total: int

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def to_dense(self, size: int) -> np.ndarray:
        dense = np.zeros(size, dtype=np.float64)
        dense[self.indices] = self.counts
        return dense

    def as_dict(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.indices, self.counts)}


@dataclass(frozen=True)
class Dataset:
    vocabulary: Vocabulary
    train: list[tuple[TfVector, str]]
    test: list[tuple[TfVector, str]]
    labels: tuple[str, ...]
    train_ids: tuple[str, ...] = ()
    test_ids: tuple[str, ...] = ()


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non a-z character, drop tokens of length < 2."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def build_vocabulary(docs, min_word_freq: int) -> Vocabulary:
    """Vocabulary of tokens whose total frequency across docs >= min_word_freq.

    Ordered by descending frequency, then lexicographically for ties, so the
    construction is deterministic.
    """
    if min_word_freq < 1:
        raise ValueError("min_word_freq must be >= 1")
    freq = Counter()
    for doc in docs:
        freq.update(tokenize(doc.text))
    kept = [(w, c) for w, c in freq.items() if c >= min_word_freq]
    if not kept:
        raise EmptyVocabularyError(
            f"no token reaches frequency {min_word_freq} in {len(freq)} distinct tokens"
        )
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    words = tuple(w for w, _ in kept)
    return Vocabulary(words=words, index={w: i for i, w in enumerate(words)}, min_freq=min_word_freq)


def filter_documents(docs, min_length: int):
    """Keep documents with at least min_length tokens, preserving order."""
    if min_length < 0:
        raise ValueError("min_length must be >= 0")
    return [d for d in docs if len(tokenize(d.text)) >= min_length]


def vectorize(doc: RawDocument, vocab: Vocabulary) -> TfVector:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped.

    A document whose tokens are all out of vocabulary yields an empty vector
    (flagged via TfVector.is_empty, not an error).
    """
    counts = Counter(vocab.index[t] for t in tokenize(doc.text) if t in vocab.index)
    if not counts:
        log.debug("document %s has no in-vocabulary token", doc.id)
        return TfVector(
            indices=np.empty(0, dtype=np.int64),
            counts=np.empty(0, dtype=np.int64),
            total=0,
        )
    idx = np.array(sorted(counts), dtype=np.int64)
    cnt = np.array([counts[int(i)] for i in idx], dtype=np.int64)
    return TfVector(indices=idx, counts=cnt, total=int(cnt.sum()))


def read_jsonl(path) -> list[tuple[RawDocument, str]]:
    """Read a JSONL corpus; returns (document, split) pairs in file order."""
    out = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            missing = [k for k in ("id", "label", "text", "split") if k not in obj]
            if missing:
                raise ParseError(f"missing fields: {', '.join(missing)}", line=lineno)
            doc_id = str(obj["id"])
            label = str(obj["label"])
            if not label:
                raise ParseError("empty label", line=lineno)
            if doc_id in seen_ids:
                raise ParseError(f"duplicate document id {doc_id!r}", line=lineno)
            seen_ids.add(doc_id)
            out.append((RawDocument(id=doc_id, label=label, text=str(obj["text"])), obj["split"]))
    return out


def load_dataset(path, format: str = "jsonl", split_spec=("train", "test"),
                 *, min_doc_len: int = 0, min_word_freq: int = 1) -> Dataset:
    """Load a JSONL corpus into a Dataset.

    Pipeline: length filter -> vocabulary (built from the training split
    only) -> vectorization of both splits against that vocabulary.  The
    result is deterministic for identical input bytes.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    train_name, test_name = split_spec
    records = read_jsonl(path)

    train_docs, test_docs = [], []
    for doc, split in records:
        if split == train_name:
            train_docs.append(doc)
        elif split == test_name:
            test_docs.append(doc)
        else:
            raise UnknownSplitError(
                f"document {doc.id!r} has unknown split {split!r} "
                f"(expected {train_name!r} or {test_name!r})"
            )

    train_docs = filter_documents(train_docs, min_doc_len)
    test_docs = filter_documents(test_docs, min_doc_len)
    vocab = build_vocabulary(train_docs, min_word_freq)

    train = [(vectorize(d, vocab), d.label) for d in train_docs]
    test = [(vectorize(d, vocab), d.label) for d in test_docs]
    n_empty = sum(v.is_empty for v, _ in train) + sum(v.is_empty for v, _ in test)
    if n_empty:
        log.warning("%d documents have no in-vocabulary tokens", n_empty)

    labels = tuple(sorted({d.label for d in train_docs} | {d.label for d in test_docs}))
    return Dataset(
        vocabulary=vocab,
        train=train,
        test=test,
        labels=labels,
        train_ids=tuple(d.id for d in train_docs),
        test_ids=tuple(d.id for d in test_docs),
    )


# ---------------------------------------------------------------------------
# Dataset bundle on disk: vocab.txt, {train,test}.tf, {train,test}.ids, meta.json


def _write_tf(path, pairs):
    with open(path, "w", encoding="utf-8") as fh:
        for vec, label in pairs:
            cells = [label]
            cells += [f"{int(i)}:{int(c)}" for i, c in zip(vec.indices, vec.counts)]
            fh.write(" ".join(cells) + "\n")


def _read_tf(path, vocab_size: int):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                raise ParseError("empty TF line", line=lineno)
            label = parts[0]
            idx, cnt = [], []
            prev = -1
            for cell in parts[1:]:
                try:
                    i_s, c_s = cell.split(":")
                    i, c = int(i_s), int(c_s)
                except ValueError as exc:
                    raise ParseError(f"bad index:count cell {cell!r}", line=lineno) from exc
                if i <= prev:
                    raise ParseError("indices not strictly ascending", line=lineno)
                if c < 1:
                    raise ParseError(f"count {c} < 1", line=lineno)
                if i >= vocab_size:
                    raise ParseError(f"index {i} >= vocabulary size {vocab_size}", line=lineno)
                prev = i
                idx.append(i)
                cnt.append(c)
            idx_arr = np.array(idx, dtype=np.int64)
            cnt_arr = np.array(cnt, dtype=np.int64)
            pairs.append((TfVector(indices=idx_arr, counts=cnt_arr, total=int(cnt_arr.sum())), label))
    return pairs


def save_bundle(dataset: Dataset, out_dir, thresholds: dict | None = None) -> None:
    """Write a dataset bundle directory (vocab, TF lines, ids, metadata)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab.txt").write_text("\n".join(dataset.vocabulary.words) + "\n", encoding="utf-8")
    _write_tf(out / "train.tf", dataset.train)
    _write_tf(out / "test.tf", dataset.test)
    (out / "train.ids").write_text("".join(f"{i}\n" for i in dataset.train_ids), encoding="utf-8")
    (out / "test.ids").write_text("".join(f"{i}\n" for i in dataset.test_ids), encoding="utf-8")
    meta = {
        "vocab_size": len(dataset.vocabulary),
        "min_word_freq": dataset.vocabulary.min_freq,
        "train_documents": len(dataset.train),
        "test_documents": len(dataset.test),
        "empty_train_vectors": sum(v.is_empty for v, _ in dataset.train),
        "empty_test_vectors": sum(v.is_empty for v, _ in dataset.test),
        "labels": list(dataset.labels),
    }
    if thresholds:
        meta.update(thresholds)
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(bundle_dir) -> Dataset:
    """Load a bundle previously written by save_bundle."""
    root = Path(bundle_dir)
    words = tuple(
        w for w in (root / "vocab.txt").read_text(encoding="utf-8").splitlines() if w
    )
    if len(set(words)) != len(words):
        raise ParseError(f"duplicate words in {root / 'vocab.txt'}")
    with open(root / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    vocab = Vocabulary(
        words=words,
        index={w: i for i, w in enumerate(words)},
        min_freq=int(meta.get("min_word_freq", 1)),
    )
    train = _read_tf(root / "train.tf", len(vocab))
    test = _read_tf(root / "test.tf", len(vocab))
    train_ids = tuple((root / "train.ids").read_text(encoding="utf-8").split())
    test_ids = tuple((root / "test.ids").read_text(encoding="utf-8").split())
    if len(train_ids) != len(train) or len(test_ids) != len(test):
        raise DimensionMismatchError(
            f"id files do not match TF files in {root} "
            f"({len(train_ids)}/{len(train)} train, {len(test_ids)}/{len(test)} test)"
        )
    labels = tuple(meta.get("labels") or sorted({lb for _, lb in train + test}))
    return Dataset(
        vocabulary=vocab,
        train=train,
        test=test,
        labels=labels,
        train_ids=train_ids,
        test_ids=test_ids,
    )
