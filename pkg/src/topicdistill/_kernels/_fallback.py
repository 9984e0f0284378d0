"""Pure NumPy implementation of the per-document inference kernel.

Mirrors the compiled core in `_core.pyx` function by function; the two are
interchangeable (`topicdistill._kernels.get_backend`).  All arrays are
float64; word ids are int64.  Inputs are trusted here: dimension and
domain checks live in the calling module.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "numpy"

# Asymptotic expansion of digamma after shifting the argument above this
# point; coefficients are B_2n/2n through n=6, giving ~1e-12 absolute error.
_SHIFT = 6.0


def digamma(x):
    """Digamma for scalars or arrays of positive floats (recurrence + series)."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    y = np.atleast_1d(arr).copy()
    acc = np.zeros_like(y)
    while True:
        small = y < _SHIFT
        if not small.any():
            break
        acc[small] -= 1.0 / y[small]
        y[small] += 1.0
    inv = 1.0 / y
    inv2 = inv * inv
    tail = inv2 * (
        1.0 / 12.0
        - inv2
        * (
            1.0 / 120.0
            - inv2
            * (
                1.0 / 252.0
                - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0)))
            )
        )
    )
    out = acc + np.log(y) - 0.5 * inv - tail
    return float(out[0]) if scalar else out


def _lgamma_sum(arr):
    return sum(math.lgamma(v) for v in arr)


def elbo_doc(log_beta_t, alpha, words, counts, gamma, phi):
    """Variational lower bound on one document's log likelihood.

    log_beta_t is the (V, K) transpose of the topic-word log probabilities;
    phi is (N, K) with one row per distinct document word.  Zero phi entries
    contribute nothing (0 log 0 = 0).
    """
    dg = digamma(gamma)
    elog_theta = dg - digamma(float(gamma.sum()))

    val = 0.0
    if len(words):
        lb = log_beta_t[words, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = elog_theta[None, :] + lb - np.log(phi)
        inner = np.where(phi > 0.0, inner, 0.0)
        val += float((counts[:, None] * phi * inner).sum())

    alpha_sum = float(alpha.sum())
    val += math.lgamma(alpha_sum) - _lgamma_sum(alpha)
    val += float(((alpha - 1.0) * elog_theta).sum())
    val -= math.lgamma(float(gamma.sum())) - _lgamma_sum(gamma)
    val -= float(((gamma - 1.0) * elog_theta).sum())
    return val


def infer_doc(beta_t, log_beta_t, alpha, words, counts, tol, max_iter, track_elbo=False):
    """Coordinate-ascent inference for one document.

    Sweeps alternate a full phi update (phi_ni ∝ exp(digamma(gamma_i)) *
    beta_iw) with a gamma update (gamma = alpha + counts @ phi), starting
    from gamma = alpha + total/K and uniform phi, until the mean absolute
    gamma change drops below tol.

    Returns (gamma, phi, iterations, converged, elbo_trace).  The trace,
    when requested, holds the bound at initialization and after each sweep.
    """
    k = alpha.shape[0]
    n = words.shape[0]
    total = float(counts.sum())
    gamma = alpha + total / k
    phi = np.full((n, k), 1.0 / k)

    trace = None
    if track_elbo:
        trace = [elbo_doc(log_beta_t, alpha, words, counts, gamma, phi)]

    b = beta_t[words, :] if n else np.zeros((0, k))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        e_theta = np.exp(digamma(gamma))
        phi = b * e_theta[None, :]
        norm = phi.sum(axis=1)
        if n and not np.all(norm > 0.0):
            bad = int(words[int(np.argmin(norm))])
            raise FloatingPointError(
                f"word {bad} has zero probability under every topic"
            )
        if n:
            phi /= norm[:, None]
        new_gamma = alpha + counts @ phi if n else alpha.copy()
        delta = float(np.abs(new_gamma - gamma).mean())
        gamma = new_gamma
        if track_elbo:
            trace.append(elbo_doc(log_beta_t, alpha, words, counts, gamma, phi))
        if delta < tol:
            converged = True
            break
    return gamma, phi, iterations, converged, trace


def infer_doc_collect(beta_t, log_beta_t, alpha, words, counts, tol, max_iter, sstats):
    """E-step variant: accumulates count*phi into sstats (K, V) columns.

    Returns (gamma, iterations, converged, elbo) with the bound evaluated at
    the final variational state.
    """
    gamma, phi, iterations, converged, _ = infer_doc(
        beta_t, log_beta_t, alpha, words, counts, tol, max_iter
    )
    if len(words):
        np.add.at(sstats, (slice(None), words), (counts[:, None] * phi).T)
    bound = elbo_doc(log_beta_t, alpha, words, counts, gamma, phi)
    return gamma, iterations, converged, bound
