"""Neuron-level topic discovery on a trained student network.

Each vocabulary word is fed to the network as a one-hot input and every
hidden neuron's post-tanh activation is recorded; a neuron's profile is the
words that activate it most.  Ranking uses the signed activation (an
absolute-value mode exists as an option) with ties broken by ascending word
index, so profiles are fully deterministic.  For the deeper variant, the
strongest incoming weights per second-layer neuron are also reported to
show how first-layer word groups merge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .distill import MlpModel
from .errors import DimensionMismatchError


@dataclass(frozen=True)
class NeuronProfile:
    layer: int  # 1-based hidden layer index
    neuron: int  # 0-based within the layer
    top_words: tuple[tuple[str, float], ...]  # (word, activation), descending


@dataclass
class ProbeReport:
    profiles: list[NeuronProfile]
    vocab_size: int
    hidden_dims: tuple[int, ...]


def _hidden_activation_matrix(model: MlpModel, scale: float) -> list[np.ndarray]:
    """Per hidden layer, the (units, V) activations of all one-hot inputs.

    Column w of the first matrix is tanh(scale * W1[:, w] + b1); deeper
    layers chain on the previous layer's columns.  l1 input normalization
    maps a one-hot of any magnitude to the unit one-hot.
    """
    eff_scale = 1.0 if model.input_norm == "l1" else scale
    mats = []
    w1, b1 = model.weights[0], model.biases[0]
    act = np.tanh(eff_scale * w1 + b1[:, None])
    mats.append(act)
    for w, b in zip(model.weights[1:-1], model.biases[1:-1]):
        act = np.tanh(w @ act + b[:, None])
        mats.append(act)
    return mats


def probe_activations(model: MlpModel, word_index: int, scale: float = 1.0) -> list[np.ndarray]:
    """Post-tanh activations of every hidden layer for one word's one-hot input."""
    v = model.architecture.input_dim
    if not 0 <= word_index < v:
        raise IndexError(f"word index {word_index} outside [0, {v})")
    x = np.zeros(v)
    x[word_index] = scale
    if model.input_norm == "l1" and scale > 0:
        x[word_index] = 1.0
    acts = []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.tanh(w @ a + b)
        acts.append(a)
    return acts


def _rank(activations: np.ndarray, n: int, mode: str) -> np.ndarray:
    key = np.abs(activations) if mode == "abs" else activations
    # stable sort on (-key, index) gives descending activation with
    # ascending-index tie-break
    order = np.lexsort((np.arange(key.size), -key))
    return order[:n]


def top_words(model: MlpModel, vocab: Vocabulary, layer: int, neuron: int,
              n: int = 10, scale: float = 1.0, mode: str = "signed") -> NeuronProfile:
    """Profile one hidden neuron by its n most-activating words."""
    mats = _hidden_activation_matrix(model, scale)
    if not 1 <= layer <= len(mats):
        raise IndexError(f"hidden layer {layer} outside [1, {len(mats)}]")
    if not 0 <= neuron < mats[layer - 1].shape[0]:
        raise IndexError(
            f"neuron {neuron} outside [0, {mats[layer - 1].shape[0]}) in layer {layer}"
        )
    acts = mats[layer - 1][neuron]
    picked = _rank(acts, n, mode)
    return NeuronProfile(
        layer=layer,
        neuron=neuron,
        top_words=tuple((vocab.words[w], float(acts[w])) for w in picked),
    )


def probe_report(model: MlpModel, vocab: Vocabulary, n: int = 10,
                 scale: float = 1.0, mode: str = "signed") -> ProbeReport:
    """Profiles for every hidden neuron in every hidden layer."""
    if len(vocab) != model.architecture.input_dim:
        raise DimensionMismatchError(
            f"vocabulary size {len(vocab)} vs model input {model.architecture.input_dim}"
        )
    mats = _hidden_activation_matrix(model, scale)
    profiles = []
    for layer_idx, mat in enumerate(mats, start=1):
        for neuron in range(mat.shape[0]):
            acts = mat[neuron]
            picked = _rank(acts, n, mode)
            profiles.append(NeuronProfile(
                layer=layer_idx,
                neuron=neuron,
                top_words=tuple((vocab.words[w], float(acts[w])) for w in picked),
            ))
    return ProbeReport(
        profiles=profiles,
        vocab_size=len(vocab),
        hidden_dims=model.architecture.hidden_dims,
    )


def strongest_edges(model: MlpModel, n: int = 5) -> list[tuple[int, list[tuple[int, float]]]]:
    """Per second-hidden-layer neuron, the first-layer neurons feeding it hardest.

    Ranked by signed incoming weight, ties by ascending source index; only
    meaningful for the two-hidden-layer variant (empty list otherwise).
    """
    if len(model.weights) < 3:
        return []
    w2 = model.weights[1]  # (H2, H1)
    edges = []
    for j in range(w2.shape[0]):
        row = w2[j]
        order = np.lexsort((np.arange(row.size), -row))[:n]
        edges.append((j, [(int(i), float(row[i])) for i in order]))
    return edges


def write_probe_tsv(report: ProbeReport, path) -> None:
    """One line per neuron: layer, neuron, then word:activation pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in report.profiles:
            cells = [str(p.layer), str(p.neuron)]
            cells += [f"{w}:{a:.6f}" for w, a in p.top_words]
            fh.write("\t".join(cells) + "\n")


def write_edges_tsv(edges, path) -> None:
    """One line per second-layer neuron: neuron, then source:weight pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        for neuron, sources in edges:
            cells = [str(neuron)]
            cells += [f"{i}:{w:.6f}" for i, w in sources]
            fh.write("\t".join(cells) + "\n")
