#!/usr/bin/env python3
"""Regenerate the bundled sample corpus (deterministic).

Writes src/topicdistill/data/sample_corpus.jsonl: 210 synthetic labeled
documents over 3 classes.  Each class draws most of its words from two
class-specific latent topics (disjoint across classes) plus a shared pool,
so topic mixtures separate the classes while the word counts stay noisy
enough to make inference non-trivial.  Documents are long (130-230 tokens)
because the teacher needs long documents to infer confident mixtures.
"""

import json
from pathlib import Path

import numpy as np

SEED = 20240811
N_TOPICS = 6
WORDS_PER_TOPIC = 45
N_COMMON = 40
CLASSES = ("metals", "markets", "sports")
CLASS_TOPICS = {"metals": (0, 1), "markets": (2, 3), "sports": (4, 5)}
TRAIN_PER_CLASS = 50
TEST_PER_CLASS = 20
DOC_LEN_RANGE = (130, 231)
TOPIC_MASS = 0.8  # rest goes to the common pool

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _make_words(rng, count, taken):
    words = []
    while len(words) < count:
        syllables = rng.integers(2, 4)
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _zipf(n):
    p = 1.0 / (np.arange(n) + 2.0)
    return p / p.sum()


def main():
    rng = np.random.default_rng(SEED)
    taken = set()
    topic_slices = [_make_words(rng, WORDS_PER_TOPIC, taken) for _ in range(N_TOPICS)]
    common = _make_words(rng, N_COMMON, taken)

    vocab = [w for sl in topic_slices for w in sl] + common
    word_index = {w: i for i, w in enumerate(vocab)}
    v = len(vocab)

    # Topic-word distributions: Zipf over the topic's own slice, a shuffled
    # Zipf over the shared pool.
    beta = np.zeros((N_TOPICS, v))
    for t, sl in enumerate(topic_slices):
        own = _zipf(WORDS_PER_TOPIC)
        for r, w in enumerate(sl):
            beta[t, word_index[w]] = TOPIC_MASS * own[r]
        shared = _zipf(N_COMMON)
        rng.shuffle(shared)
        for r, w in enumerate(common):
            beta[t, word_index[w]] = (1.0 - TOPIC_MASS) * shared[r]

    docs = []
    doc_id = 0
    for label in CLASSES:
        own = CLASS_TOPICS[label]
        alpha = np.full(N_TOPICS, 0.15)
        alpha[list(own)] = 3.0
        for j in range(TRAIN_PER_CLASS + TEST_PER_CLASS):
            theta = rng.dirichlet(alpha)
            length = int(rng.integers(*DOC_LEN_RANGE))
            topics = rng.choice(N_TOPICS, size=length, p=theta)
            words = [vocab[rng.choice(v, p=beta[t])] for t in topics]
            split = "train" if j < TRAIN_PER_CLASS else "test"
            docs.append({
                "id": f"doc-{doc_id:04d}",
                "label": label,
                "text": " ".join(words),
                "split": split,
            })
            doc_id += 1

    out = Path(__file__).resolve().parents[1] / "src" / "topicdistill" / "data" / "sample_corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    print(f"wrote {len(docs)} documents ({v} distinct words) to {out}")


if __name__ == "__main__":
    main()
