# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-document inference kernel.

Function-for-function mirror of `_fallback`; see that module for the
contract.  Scratch buffers are allocated as NumPy arrays in the `def`
wrappers so the `cdef` workers can run without the GIL.
"""

from libc.math cimport exp, fabs, lgamma, log

import numpy as np

NAME = "c"


cdef double _digamma(double x) noexcept nogil:
    cdef double acc = 0.0
    cdef double inv, inv2, tail
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    tail = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0
           - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0
           - inv2 * (691.0 / 32760.0))))))
    return acc + log(x) - 0.5 * inv - tail


def digamma(double x):
    return _digamma(x)


cdef double _elbo_inner(double[:, ::1] log_beta_t, double[::1] alpha,
                        long long[::1] words, double[::1] counts,
                        double[::1] gamma, double[:, ::1] phi,
                        double[::1] elog) noexcept nogil:
    cdef Py_ssize_t k = alpha.shape[0]
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t i, j
    cdef long long w
    cdef double gsum = 0.0, asum = 0.0, val = 0.0
    cdef double dgs, p, c
    for i in range(k):
        gsum += gamma[i]
        asum += alpha[i]
    dgs = _digamma(gsum)
    for i in range(k):
        elog[i] = _digamma(gamma[i]) - dgs
    for j in range(n):
        w = words[j]
        c = counts[j]
        for i in range(k):
            p = phi[j, i]
            if p > 0.0:
                val += c * p * (elog[i] + log_beta_t[w, i] - log(p))
    val += lgamma(asum)
    for i in range(k):
        val -= lgamma(alpha[i])
        val += (alpha[i] - 1.0) * elog[i]
    val -= lgamma(gsum)
    for i in range(k):
        val += lgamma(gamma[i])
        val -= (gamma[i] - 1.0) * elog[i]
    return val


cdef long long _run(double[:, ::1] beta_t, double[:, ::1] log_beta_t,
                    double[::1] alpha, long long[::1] words, double[::1] counts,
                    double tol, int max_iter, bint track,
                    double[::1] gamma, double[:, ::1] phi,
                    double[::1] new_gamma, double[::1] e_theta, double[::1] elog,
                    double[::1] trace, long long[::1] status) noexcept nogil:
    cdef Py_ssize_t k = alpha.shape[0]
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t i, j, it
    cdef long long w
    cdef double total = 0.0
    cdef double s, delta, c
    cdef Py_ssize_t ntrace = 0
    cdef bint converged = 0
    cdef Py_ssize_t iterations = 0

    for j in range(n):
        total += counts[j]
    for i in range(k):
        gamma[i] = alpha[i] + total / k
    for j in range(n):
        for i in range(k):
            phi[j, i] = 1.0 / k
    if track:
        trace[ntrace] = _elbo_inner(log_beta_t, alpha, words, counts, gamma, phi, elog)
        ntrace += 1

    for it in range(1, max_iter + 1):
        iterations = it
        for i in range(k):
            e_theta[i] = exp(_digamma(gamma[i]))
            new_gamma[i] = alpha[i]
        for j in range(n):
            w = words[j]
            s = 0.0
            for i in range(k):
                phi[j, i] = e_theta[i] * beta_t[w, i]
                s += phi[j, i]
            if s <= 0.0:
                status[0] = iterations
                status[1] = 0
                status[2] = ntrace
                return w
            c = counts[j]
            for i in range(k):
                phi[j, i] /= s
                new_gamma[i] += c * phi[j, i]
        delta = 0.0
        for i in range(k):
            delta += fabs(new_gamma[i] - gamma[i])
            gamma[i] = new_gamma[i]
        delta /= k
        if track:
            trace[ntrace] = _elbo_inner(log_beta_t, alpha, words, counts, gamma, phi, elog)
            ntrace += 1
        if delta < tol:
            converged = 1
            break

    status[0] = iterations
    status[1] = converged
    status[2] = ntrace
    return -1


cdef void _accumulate(double[:, ::1] sstats, long long[::1] words,
                      double[::1] counts, double[:, ::1] phi) noexcept nogil:
    cdef Py_ssize_t n = words.shape[0]
    cdef Py_ssize_t k = phi.shape[1]
    cdef Py_ssize_t i, j
    cdef long long w
    cdef double c
    for j in range(n):
        w = words[j]
        c = counts[j]
        for i in range(k):
            sstats[i, w] += c * phi[j, i]


def elbo_doc(log_beta_t, alpha, words, counts, gamma, phi):
    cdef double[:, ::1] lb = np.ascontiguousarray(log_beta_t, dtype=np.float64)
    cdef double[::1] a = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef long long[::1] ws = np.ascontiguousarray(words, dtype=np.int64)
    cdef double[::1] cs = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(gamma, dtype=np.float64)
    phi_arr = np.ascontiguousarray(phi, dtype=np.float64).reshape(len(words), len(alpha))
    cdef double[:, ::1] p = phi_arr
    elog = np.empty(len(alpha), dtype=np.float64)
    cdef double[::1] el = elog
    with nogil:
        out = _elbo_inner(lb, a, ws, cs, g, p, el)
    return out


def infer_doc(beta_t, log_beta_t, alpha, words, counts, double tol, int max_iter,
              bint track_elbo=False):
    cdef double[:, ::1] bt = np.ascontiguousarray(beta_t, dtype=np.float64)
    cdef double[:, ::1] lbt = np.ascontiguousarray(log_beta_t, dtype=np.float64)
    alpha_arr = np.ascontiguousarray(alpha, dtype=np.float64)
    words_arr = np.ascontiguousarray(words, dtype=np.int64)
    counts_arr = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double[::1] a = alpha_arr
    cdef long long[::1] ws = words_arr
    cdef double[::1] cs = counts_arr

    k = alpha_arr.shape[0]
    n = words_arr.shape[0]
    gamma = np.empty(k, dtype=np.float64)
    phi = np.empty((n, k), dtype=np.float64)
    new_gamma = np.empty(k, dtype=np.float64)
    e_theta = np.empty(k, dtype=np.float64)
    elog = np.empty(k, dtype=np.float64)
    trace = np.empty(max_iter + 1 if track_elbo else 1, dtype=np.float64)
    status = np.zeros(3, dtype=np.int64)

    cdef double[::1] g = gamma
    cdef double[:, ::1] p = phi
    cdef double[::1] ng = new_gamma
    cdef double[::1] et = e_theta
    cdef double[::1] el = elog
    cdef double[::1] tr = trace
    cdef long long[::1] st = status
    cdef long long bad

    with nogil:
        bad = _run(bt, lbt, a, ws, cs, tol, max_iter, track_elbo,
                   g, p, ng, et, el, tr, st)
    if bad >= 0:
        raise FloatingPointError(
            f"word {bad} has zero probability under every topic"
        )
    elbo_trace = trace[: status[2]].tolist() if track_elbo else None
    return gamma, phi, int(status[0]), bool(status[1]), elbo_trace


def infer_doc_collect(beta_t, log_beta_t, alpha, words, counts, double tol,
                      int max_iter, sstats):
    cdef double[:, ::1] bt = np.ascontiguousarray(beta_t, dtype=np.float64)
    cdef double[:, ::1] lbt = np.ascontiguousarray(log_beta_t, dtype=np.float64)
    alpha_arr = np.ascontiguousarray(alpha, dtype=np.float64)
    words_arr = np.ascontiguousarray(words, dtype=np.int64)
    counts_arr = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double[::1] a = alpha_arr
    cdef long long[::1] ws = words_arr
    cdef double[::1] cs = counts_arr
    cdef double[:, ::1] ss = sstats

    k = alpha_arr.shape[0]
    n = words_arr.shape[0]
    gamma = np.empty(k, dtype=np.float64)
    phi = np.empty((n, k), dtype=np.float64)
    new_gamma = np.empty(k, dtype=np.float64)
    e_theta = np.empty(k, dtype=np.float64)
    elog = np.empty(k, dtype=np.float64)
    trace = np.empty(1, dtype=np.float64)
    status = np.zeros(3, dtype=np.int64)

    cdef double[::1] g = gamma
    cdef double[:, ::1] p = phi
    cdef double[::1] ng = new_gamma
    cdef double[::1] et = e_theta
    cdef double[::1] el = elog
    cdef double[::1] tr = trace
    cdef long long[::1] st = status
    cdef long long bad
    cdef double bound

    with nogil:
        bad = _run(bt, lbt, a, ws, cs, tol, max_iter, False,
                   g, p, ng, et, el, tr, st)
    if bad >= 0:
        raise FloatingPointError(
            f"word {bad} has zero probability under every topic"
        )
    with nogil:
        _accumulate(ss, ws, cs, p)
        bound = _elbo_inner(lbt, a, ws, cs, g, p, el)
    return gamma, int(status[0]), bool(status[1]), bound
