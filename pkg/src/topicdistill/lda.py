"""LDA teacher: variational EM training and per-document inference.

Per-document inference runs coordinate ascent on the variational parameters
(gamma, phi):

    phi_ni  ∝  exp(digamma(gamma_i)) * beta_{i, w_n}
    gamma_i =  alpha_i + sum_n count_n * phi_ni

initialized at gamma_i = alpha_i + total/K and uniform phi, stopping when
the mean absolute gamma change falls below tol.  The topic mixture is the
Dirichlet mean theta = gamma / sum(gamma), which is strictly positive.

Training alternates that E-step with an M-step that re-estimates each topic
row from the accumulated count*phi mass plus a small pseudo-count, keeping
every word probability strictly positive.  alpha stays fixed (symmetric
50/K by default).  Everything is deterministic given the seed; random state
only enters through the optional random topic initialization, which is the
default because identical rows are a fixed point of the updates.

Topic mixtures and variational parameters are plain float64 ndarrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .corpus import TfVector
from .errors import (
    DegenerateTopicError,
    DimensionMismatchError,
    DomainError,
    LengthMismatchError,
    ParseError,
)

MODEL_FORMAT_VERSION = 1
DEFAULT_E_TOL = 1e-5
DEFAULT_E_MAX_ITER = 100
DEFAULT_EM_TOL = 1e-4
DEFAULT_EM_MAX_ITER = 50
DEFAULT_SMOOTHING = 1e-3


@dataclass(frozen=True)
class LdaConfig:
    """Teacher training/inference knobs; alpha=None means symmetric 50/K."""

    alpha: float | None = None
    init: str = "random"
    seed: int = 0
    e_tol: float = DEFAULT_E_TOL
    e_max_iter: int = DEFAULT_E_MAX_ITER
    em_tol: float = DEFAULT_EM_TOL
    em_max_iter: int = DEFAULT_EM_MAX_ITER
    smoothing: float = DEFAULT_SMOOTHING


@dataclass(eq=False)
class LdaModel:
    """Topic count K, Dirichlet prior alpha (K,), log topic-word matrix (K, V)."""

    alpha: np.ndarray
    log_beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.ascontiguousarray(self.alpha, dtype=np.float64)
        self.log_beta = np.ascontiguousarray(self.log_beta, dtype=np.float64)
        if self.alpha.ndim != 1 or self.log_beta.ndim != 2:
            raise DimensionMismatchError("alpha must be 1-D and log_beta 2-D")
        if self.log_beta.shape[0] != self.alpha.shape[0]:
            raise DimensionMismatchError(
                f"alpha has {self.alpha.shape[0]} entries but log_beta has "
                f"{self.log_beta.shape[0]} rows"
            )
        if self.K < 2:
            raise ValueError("need at least 2 topics")
        if not np.all(self.alpha > 0):
            raise DomainError("every alpha entry must be positive")
        row_sums = np.exp(self.log_beta).sum(axis=1)
        if not np.allclose(row_sums, 1.0, rtol=0, atol=1e-8):
            worst = float(np.abs(row_sums - 1.0).max())
            raise ValueError(f"topic rows must sum to 1 (worst deviation {worst:.3g})")

    @property
    def K(self) -> int:
        return self.alpha.shape[0]

    @property
    def V(self) -> int:
        return self.log_beta.shape[1]

    # Transposed copies laid out so a document word's topic column is
    # contiguous, which is what the inference kernel iterates over.
    @cached_property
    def beta_t(self) -> np.ndarray:
        return np.ascontiguousarray(np.exp(self.log_beta).T)

    @cached_property
    def log_beta_t(self) -> np.ndarray:
        return np.ascontiguousarray(self.log_beta.T)


@dataclass
class VariationalState:
    """Per-document variational parameters after inference."""

    gamma: np.ndarray  # (K,)
    phi: np.ndarray  # (N, K), one row per distinct document word
    iterations: int
    converged: bool
    elbo_trace: list[float] | None = None


def digamma(x: float) -> float:
    """Digamma via recurrence past 6 plus a 6-term asymptotic series."""
    if x <= 0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    return _kernels.get_backend().digamma(float(x))


def estimate_theta(gamma: np.ndarray) -> np.ndarray:
    """Topic mixture as the Dirichlet mean gamma / sum(gamma)."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if not np.all(gamma > 0):
        raise DomainError("gamma entries must be positive")
    return gamma / gamma.sum()


def _check_doc(model: LdaModel, v: TfVector) -> None:
    if v.indices.size:
        lo, hi = int(v.indices.min()), int(v.indices.max())
        if lo < 0 or hi >= model.V:
            raise DimensionMismatchError(
                f"document references word index {hi if hi >= model.V else lo}, "
                f"vocabulary size is {model.V}"
            )


def infer(model: LdaModel, v: TfVector, tol: float = DEFAULT_E_TOL,
          max_iter: int = DEFAULT_E_MAX_ITER, *, track_elbo: bool = False,
          backend: str | None = None) -> tuple[np.ndarray, VariationalState]:
    """Infer a document's topic mixture; returns (theta, VariationalState).

    Deterministic: no randomness enters the updates.  With track_elbo, the
    state carries the bound at initialization and after each sweep.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    _check_doc(model, v)
    kern = _kernels.get_backend(backend)
    try:
        gamma, phi, iterations, converged, trace = kern.infer_doc(
            model.beta_t, model.log_beta_t, model.alpha,
            v.indices, v.counts.astype(np.float64), tol, max_iter,
            track_elbo,
        )
    except FloatingPointError as exc:
        raise DomainError(str(exc)) from exc
    state = VariationalState(gamma=gamma, phi=phi, iterations=iterations,
                             converged=converged, elbo_trace=trace)
    return estimate_theta(gamma), state


def elbo(model: LdaModel, v: TfVector, state: VariationalState,
         backend: str | None = None) -> float:
    """Variational lower bound on the document log likelihood at `state`."""
    _check_doc(model, v)
    if state.gamma.shape[0] != model.K or state.phi.shape != (v.indices.size, model.K):
        raise DimensionMismatchError("variational state does not match model/document")
    kern = _kernels.get_backend(backend)
    return float(kern.elbo_doc(
        model.log_beta_t, model.alpha, v.indices,
        v.counts.astype(np.float64), state.gamma, state.phi,
    ))


def _as_alpha(alpha, k: int) -> np.ndarray:
    if alpha is None:
        alpha = 50.0 / k
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise DimensionMismatchError(f"alpha must be scalar or length {k}")
    if not np.all(arr > 0):
        raise DomainError("alpha entries must be positive")
    return arr


def _init_beta(k: int, v: int, init: str, seed: int) -> np.ndarray:
    if init == "random":
        rng = np.random.default_rng(seed)
        rows = rng.gamma(100.0, 1.0 / 100.0, size=(k, v))
    elif init == "uniform":
        # Identical rows are a fixed point of EM; only useful for diagnostics.
        rows = np.ones((k, v))
    else:
        raise ValueError(f"unknown init {init!r} (expected 'random' or 'uniform')")
    return rows / rows.sum(axis=1, keepdims=True)


def train_em(docs, vocab_size: int, K: int, *, alpha=None,
             em_tol: float = DEFAULT_EM_TOL, em_max_iter: int = DEFAULT_EM_MAX_ITER,
             e_tol: float = DEFAULT_E_TOL, e_max_iter: int = DEFAULT_E_MAX_ITER,
             seed: int = 0, init: str = "random", smoothing: float = DEFAULT_SMOOTHING,
             backend: str | None = None, return_history: bool = False):
    """Fit topic-word distributions by variational EM over TF vectors.

    `docs` is a sequence of TfVector (labels are irrelevant here); the
    corpus bound recorded per EM iteration is the sum of per-document
    bounds under the beta the E-step ran with.  Stops once the relative
    bound improvement drops below em_tol.

    Returns the LdaModel, or (model, bound_history) with return_history.
    """
    docs = list(docs)
    if not docs:
        raise ValueError("empty corpus")
    if K < 2:
        raise ValueError("need at least 2 topics")
    if em_max_iter < 1:
        raise ValueError("em_max_iter must be >= 1")
    if smoothing < 0:
        raise DomainError("smoothing must be >= 0")
    alpha_arr = _as_alpha(alpha, K)
    kern = _kernels.get_backend(backend)

    beta = _init_beta(K, vocab_size, init, seed)
    history: list[float] = []
    prev_bound = None
    word_arrays = [(d.indices, d.counts.astype(np.float64)) for d in docs]

    for _ in range(em_max_iter):
        beta_t = np.ascontiguousarray(beta.T)
        with np.errstate(divide="ignore"):
            log_beta_t = np.ascontiguousarray(np.log(beta).T)
        sstats = np.zeros((K, vocab_size))
        bound = 0.0
        for words, counts in word_arrays:
            try:
                _, _, _, doc_bound = kern.infer_doc_collect(
                    beta_t, log_beta_t, alpha_arr, words, counts,
                    e_tol, e_max_iter, sstats,
                )
            except FloatingPointError as exc:
                raise DomainError(str(exc)) from exc
            bound += doc_bound
        history.append(bound)

        if prev_bound is not None and bound - prev_bound < em_tol * abs(prev_bound):
            break
        prev_bound = bound

        unnorm = sstats + smoothing
        row_mass = unnorm.sum(axis=1)
        if not np.all(np.isfinite(row_mass)) or np.any(row_mass <= 0):
            raise DegenerateTopicError(
                "a topic row has no mass after smoothing; check the smoothing value"
            )
        beta = unnorm / row_mass[:, None]

    model = LdaModel(alpha=alpha_arr, log_beta=np.log(beta))
    return (model, history) if return_history else model


# ---------------------------------------------------------------------------
# Serialization


def save_model(model: LdaModel, path) -> None:
    """Versioned JSON; float repr round-trips bit-exactly."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "K": model.K,
        "V": model.V,
        "alpha": model.alpha.tolist(),
        "log_beta": model.log_beta.ravel().tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> LdaModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {version!r}")
    k, v = int(payload["K"]), int(payload["V"])
    alpha = np.array(payload["alpha"], dtype=np.float64)
    log_beta = np.array(payload["log_beta"], dtype=np.float64).reshape(k, v)
    return LdaModel(alpha=alpha, log_beta=log_beta)


def write_theta_tsv(path, ids, thetas) -> None:
    """One line per document: id, then the K mixture entries (full precision)."""
    if len(ids) != len(thetas):
        raise LengthMismatchError(f"{len(ids)} ids vs {len(thetas)} mixtures")
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, theta in zip(ids, thetas):
            fh.write(doc_id + "\t" + "\t".join(repr(float(t)) for t in theta) + "\n")


def read_theta_tsv(path) -> tuple[list[str], np.ndarray]:
    ids: list[str] = []
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2:
                raise ParseError("expected id and at least one value", line=lineno)
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError("ragged theta row", line=lineno)
            ids.append(parts[0])
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    arr = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return ids, arr
