#!/usr/bin/env python3
"""Compare the compiled inference kernel against the NumPy fallback.

Times per-document variational inference (the hot loop of the whole
toolkit) over synthetic documents for a range of topic counts, on every
backend built in this installation, and reports per-document times plus
the compiled-over-fallback speedup.  Also cross-checks that the two
backends agree numerically before timing anything.

Usage: python benchmarks/backend_bench.py [--docs N] [--topics 10,50]
"""

import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from topicdistill import lda
from topicdistill._kernels import available_backends
from topicdistill.corpus import TfVector


def synthetic_setup(k, v, n_docs, doc_len, seed):
    rng = np.random.default_rng(seed)
    beta = rng.dirichlet(np.full(v, 0.2), size=k)
    beta = np.maximum(beta, 1e-12)
    beta /= beta.sum(axis=1, keepdims=True)
    model = lda.LdaModel(alpha=np.full(k, 1.0), log_beta=np.log(beta))
    docs = []
    for _ in range(n_docs):
        theta = rng.dirichlet(np.full(k, 0.5))
        words = rng.choice(v, size=doc_len, p=theta @ beta)
        ids, counts = np.unique(words, return_counts=True)
        docs.append(TfVector(indices=ids.astype(np.int64),
                             counts=counts.astype(np.int64),
                             total=int(counts.sum())))
    return model, docs


def check_agreement(model, docs, backends):
    reference = None
    for name in backends:
        thetas = np.stack([lda.infer(model, d, backend=name)[0] for d in docs[:20]])
        if reference is None:
            reference = thetas
        else:
            worst = float(np.abs(thetas - reference).max())
            print(f"  max |theta_{name} - theta_{backends[0]}| = {worst:.2e}")
            assert worst < 1e-10, "backends disagree"


def time_backend(model, docs, name, repetitions):
    with threadpool_limits(limits=1):
        for d in docs:  # warm-up
            lda.infer(model, d, backend=name)
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for d in docs:
                lda.infer(model, d, backend=name)
            times.append(time.perf_counter() - t0)
    return min(times) / len(docs)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=200)
    parser.add_argument("--doc-len", type=int, default=150)
    parser.add_argument("--vocab", type=int, default=1000)
    parser.add_argument("--topics", default="10,30,50")
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends built: {backends}")
    if len(backends) < 2:
        print("note: compiled kernel not built; timing the fallback only")

    for k in (int(s) for s in args.topics.split(",")):
        model, docs = synthetic_setup(k, args.vocab, args.docs, args.doc_len, args.seed)
        print(f"K={k}, V={args.vocab}, {args.docs} docs of ~{args.doc_len} tokens")
        check_agreement(model, docs, backends)
        per_doc = {}
        for name in backends:
            per_doc[name] = time_backend(model, docs, name, args.reps)
            print(f"  {name:>6}: {per_doc[name] * 1e6:9.1f} us/doc")
        if "c" in per_doc and "numpy" in per_doc:
            print(f"  compiled speedup over fallback: "
                  f"{per_doc['numpy'] / per_doc['c']:.1f}x")


if __name__ == "__main__":
    main()
