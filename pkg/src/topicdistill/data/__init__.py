"""Bundled sample data."""

from importlib import resources


def sample_corpus_path():
    """Path to the bundled synthetic 3-class corpus (JSONL, ~200 documents)."""
    return resources.files(__package__) / "sample_corpus.jsonl"
