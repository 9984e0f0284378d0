"""Independent reference implementations used to compute expected values.

Everything here is deliberately written against scipy/mpmath primitives and
plain loops, sharing no code with the package, so a bug in the package
cannot hide in its own oracle.
"""

import itertools
import math

import numpy as np
import scipy.special as sp


def fixed_point_inference(alpha, beta, words, counts, tol=1e-12, max_iter=2000):
    """Per-document variational fixed point, iterated in isolation.

    alpha: (K,), beta: (K, V) row-stochastic, words/counts: parallel lists.
    Returns (theta, gamma, phi).
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    words = np.asarray(words, dtype=int)
    counts = np.asarray(counts, dtype=float)
    k = alpha.size
    gamma = alpha + counts.sum() / k
    phi = np.full((words.size, k), 1.0 / k)
    for _ in range(max_iter):
        old = gamma.copy()
        weights = np.exp(sp.digamma(gamma))
        phi = weights[None, :] * beta[:, words].T
        phi = phi / phi.sum(axis=1, keepdims=True)
        gamma = alpha + (counts[:, None] * phi).sum(axis=0)
        if np.abs(gamma - old).mean() < tol:
            break
    return gamma / gamma.sum(), gamma, phi


def elbo_reference(alpha, beta, words, counts, gamma, phi):
    """Straight transcription of the bound, scalar loops and scipy functions."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    k = alpha.size
    elog = sp.digamma(gamma) - sp.digamma(gamma.sum())
    val = 0.0
    for n, w in enumerate(words):
        for i in range(k):
            p = phi[n][i]
            if p > 0:
                val += counts[n] * p * (elog[i] + math.log(beta[i, w]) - math.log(p))
    val += sp.gammaln(alpha.sum()) - sp.gammaln(alpha).sum()
    val += float(((alpha - 1) * elog).sum())
    val -= sp.gammaln(gamma.sum()) - sp.gammaln(gamma).sum()
    val -= float(((gamma - 1) * elog).sum())
    return val


def digamma_highprec(x, dps=50):
    """Digamma at 50 decimal digits via mpmath."""
    import mpmath

    with mpmath.workdps(dps):
        return float(mpmath.digamma(mpmath.mpf(x)))


def sample_lda_corpus(n_topics, vocab_size, n_docs, doc_len, doc_alpha,
                      topic_alpha, seed):
    """Sample (true_beta, documents) from the generative model.

    Documents come back as (word_ids, counts) pairs with distinct ascending
    ids, matching the package's sparse TF layout.
    """
    rng = np.random.default_rng(seed)
    beta = rng.dirichlet(np.full(vocab_size, topic_alpha), size=n_topics)
    docs = []
    for _ in range(n_docs):
        theta = rng.dirichlet(np.full(n_topics, doc_alpha))
        word_probs = theta @ beta
        words = rng.choice(vocab_size, size=doc_len, p=word_probs)
        ids, counts = np.unique(words, return_counts=True)
        docs.append((ids.astype(np.int64), counts.astype(np.int64)))
    return beta, docs


def best_permutation_cosine(true_beta, est_beta):
    """Mean row-wise cosine under the best topic permutation (exhaustive)."""
    true_beta = np.asarray(true_beta, dtype=float)
    est_beta = np.asarray(est_beta, dtype=float)
    k = true_beta.shape[0]

    def cos(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    best = -np.inf
    for perm in itertools.permutations(range(k)):
        score = np.mean([cos(true_beta[i], est_beta[perm[i]]) for i in range(k)])
        best = max(best, score)
    return best


def symmetric_eig3(matrix):
    """Eigen-decomposition of a symmetric 3x3 via its characteristic cubic.

    Solves det(A - lambda I) = 0 with the trigonometric cubic formula and
    recovers each eigenvector from the null space of (A - lambda I) using
    cross products.  Returns (eigenvalues descending, eigenvectors as rows).
    """
    a = np.asarray(matrix, dtype=float)
    assert a.shape == (3, 3)
    # monic characteristic polynomial: l^3 - T l^2 + c l - D
    trace = np.trace(a)
    minors = 0.5 * (trace ** 2 - np.trace(a @ a))
    det = np.linalg.det(a)
    # depressed cubic t^3 + p t + q with l = t + T/3
    p = minors - trace ** 2 / 3.0
    q = -2.0 * trace ** 3 / 27.0 + trace * minors / 3.0 - det
    if abs(p) < 1e-14:
        eigs = [np.cbrt(-q) + trace / 3.0] * 3
    else:
        scale = 2.0 * math.sqrt(-p / 3.0)
        arg = np.clip((3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p), -1.0, 1.0)
        phase = math.acos(arg) / 3.0
        eigs = [scale * math.cos(phase - 2.0 * math.pi * j / 3.0) + trace / 3.0
                for j in range(3)]
    eigs = sorted(eigs, reverse=True)

    vecs = []
    for lam in eigs:
        b = a - lam * np.eye(3)
        candidates = [np.cross(b[0], b[1]), np.cross(b[0], b[2]), np.cross(b[1], b[2])]
        best = max(candidates, key=lambda v: np.linalg.norm(v))
        norm = np.linalg.norm(best)
        if norm < 1e-12:
            # degenerate pair; fall back to any unit vector orthogonal to
            # the ones already found
            basis = np.eye(3)
            for e in basis:
                res = e - sum((e @ v) * v for v in vecs)
                if np.linalg.norm(res) > 1e-8:
                    best = res
                    norm = np.linalg.norm(res)
                    break
        vecs.append(best / norm)
    return np.array(eigs), np.array(vecs)
