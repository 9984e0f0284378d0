import numpy as np
import pytest

from topicdistill import corpus
from topicdistill._kernels import available_backends
from topicdistill.data import sample_corpus_path

# Thresholds used everywhere the bundled sample corpus is prepared.
SAMPLE_MIN_DOC_LEN = 100
SAMPLE_MIN_WORD_FREQ = 5


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test once per built kernel backend."""
    return request.param


@pytest.fixture(scope="session")
def sample_dataset():
    return corpus.load_dataset(
        str(sample_corpus_path()),
        min_doc_len=SAMPLE_MIN_DOC_LEN,
        min_word_freq=SAMPLE_MIN_WORD_FREQ,
    )


def make_tf(counts_by_index: dict[int, int]) -> corpus.TfVector:
    """TfVector from a {word index: count} dict."""
    if not counts_by_index:
        return corpus.TfVector(
            indices=np.empty(0, dtype=np.int64),
            counts=np.empty(0, dtype=np.int64),
            total=0,
        )
    idx = np.array(sorted(counts_by_index), dtype=np.int64)
    cnt = np.array([counts_by_index[int(i)] for i in idx], dtype=np.int64)
    return corpus.TfVector(indices=idx, counts=cnt, total=int(cnt.sum()))


def random_tf(rng, vocab_size, max_distinct=12, max_count=6) -> corpus.TfVector:
    n = int(rng.integers(1, min(max_distinct, vocab_size) + 1))
    idx = np.sort(rng.choice(vocab_size, size=n, replace=False)).astype(np.int64)
    cnt = rng.integers(1, max_count + 1, size=n).astype(np.int64)
    return corpus.TfVector(indices=idx, counts=cnt, total=int(cnt.sum()))


def random_lda_model(rng, k, v):
    from topicdistill.lda import LdaModel

    alpha = rng.uniform(0.2, 3.0, size=k)
    rows = rng.dirichlet(np.full(v, 0.5), size=k)
    rows = np.maximum(rows, 1e-12)
    rows /= rows.sum(axis=1, keepdims=True)
    return LdaModel(alpha=alpha, log_beta=np.log(rows))
