"""Fidelity and speed evaluation of the distilled student.

Three measurements, swept over the topic count K:

* classification accuracy of a linear classifier over four document-vector
  families (PCA projections, teacher mixtures, and both student variants),
* mean per-document KL(teacher ‖ student) on the test split, which is the
  excess of the distillation loss over the teacher's own entropy,
* the wall-clock ratio of teacher inference time to student forward time,
  single-threaded, averaged over repetitions.

The linear classifier is a native one-vs-rest SVM trained by Pegasos-style
subgradient descent on the L2-regularized hinge loss, so the suite has no
dependencies beyond NumPy.  PCA sees the same raw TF matrix the other two
vectorizers consume, centered only.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import distill, lda
from .distill import MlpModel, TrainConfig
from .errors import (
    DimensionMismatchError,
    DomainError,
    LengthMismatchError,
    SingleClassError,
)
from .lda import LdaModel

log = logging.getLogger(__name__)

# Typical teacher-to-student inference-time ratios at full corpus scale and
# K in [10, 70]; printed as context next to measured values, never asserted.
TYPICAL_RATIO_BAND = (10.0, 200.0)


# ---------------------------------------------------------------------------
# Divergence


def kl_divergence(p, q) -> float:
    """sum_i p_i log(p_i / q_i) with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shapes differ: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise DomainError("q has a zero entry where p is positive")
    ps = p[mask]
    return float((ps * (np.log(ps) - np.log(q[mask]))).sum())


def mean_kl(teacher_thetas, student_thetas) -> float:
    """Mean per-document KL(teacher ‖ student) over id-aligned mixtures."""
    teacher = np.asarray(teacher_thetas, dtype=np.float64)
    student = np.asarray(student_thetas, dtype=np.float64)
    if len(teacher) != len(student):
        raise LengthMismatchError(
            f"{len(teacher)} teacher mixtures vs {len(student)} student mixtures"
        )
    if len(teacher) == 0:
        raise LengthMismatchError("no documents to average over")
    return float(np.mean([kl_divergence(t, s) for t, s in zip(teacher, student)]))


# ---------------------------------------------------------------------------
# PCA baseline


class RankDeficientWarning(UserWarning):
    pass


@dataclass(eq=False)
class PcaModel:
    mean: np.ndarray  # (V,)
    components: np.ndarray  # (r, V), orthonormal rows, r <= requested K
    explained_variance: np.ndarray  # (r,), non-increasing


def pca_fit(train_tf_matrix, K: int) -> PcaModel:
    """Top-K principal directions of the mean-centered TF matrix.

    When the matrix rank is below K, the available components are returned
    and a RankDeficientWarning is emitted.  Component signs are fixed so
    each row's largest-magnitude entry is positive, which makes the fit
    deterministic.
    """
    x = np.asarray(train_tf_matrix, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError("expected a 2-D (documents x vocabulary) matrix")
    n, v = x.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"need at least K={K} training documents, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(n, v) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    r = min(K, rank)
    if r < K:
        warnings.warn(
            f"requested {K} components but the centered matrix has rank {rank}",
            RankDeficientWarning,
            stacklevel=2,
        )
    components = vt[:r].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    explained = s[:r] ** 2 / (n - 1) if n > 1 else s[:r] ** 2
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def pca_transform(model: PcaModel, v) -> np.ndarray:
    """Project a dense TF vector onto the principal directions."""
    x = np.asarray(v, dtype=np.float64)
    if x.shape != model.mean.shape:
        raise DimensionMismatchError(
            f"vector has shape {x.shape}, expected {model.mean.shape}"
        )
    return model.components @ (x - model.mean)


# ---------------------------------------------------------------------------
# Linear classifier


@dataclass(frozen=True)
class ClassifierConfig:
    reg_lambda: float = 1e-4
    epochs: int = 50
    seed: int = 0


@dataclass(eq=False)
class LinearClassifier:
    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)
    labels: tuple[str, ...]


def train_classifier(vectors, labels, config: ClassifierConfig = ClassifierConfig(),
                     class_order=None) -> LinearClassifier:
    """One-vs-rest linear SVM via Pegasos subgradient steps on hinge loss.

    Uses the augmented-feature form (a constant column carries the bias, so
    it is regularized with the rest of the weights) with the 1/(lambda * t)
    step schedule.  Deterministic given the seed.
    """
    x = np.asarray(vectors, dtype=np.float64)
    labels = list(labels)
    if x.ndim != 2 or len(labels) != x.shape[0]:
        raise DimensionMismatchError("vectors must be (n, d) with one label per row")
    classes = tuple(class_order) if class_order is not None else tuple(sorted(set(labels)))
    present = set(labels)
    if len(present) < 2:
        raise SingleClassError(f"training labels contain a single class {present}")
    rng = np.random.default_rng(config.seed)
    n, d = x.shape
    aug = np.hstack([x, np.ones((n, 1))])
    lam = config.reg_lambda
    weight_rows, bias_vals = [], []
    for cls in classes:
        y = np.where(np.asarray(labels) == cls, 1.0, -1.0)
        w = np.zeros(d + 1)
        t = 0
        for _ in range(config.epochs):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                violated = y[i] * (w @ aug[i]) < 1.0
                w *= 1.0 - eta * lam
                if violated:
                    w += eta * y[i] * aug[i]
        weight_rows.append(w[:d])
        bias_vals.append(w[d])
    return LinearClassifier(
        weights=np.stack(weight_rows), bias=np.array(bias_vals), labels=classes
    )


def decision_scores(clf: LinearClassifier, vector) -> np.ndarray:
    x = np.asarray(vector, dtype=np.float64)
    if x.shape != (clf.weights.shape[1],):
        raise DimensionMismatchError(
            f"vector has shape {x.shape}, classifier expects ({clf.weights.shape[1]},)"
        )
    return clf.weights @ x + clf.bias


def classify(clf: LinearClassifier, vector) -> str:
    """Argmax margin; ties resolve to the lowest label index."""
    return clf.labels[int(np.argmax(decision_scores(clf, vector)))]


def accuracy(clf: LinearClassifier, vectors, labels) -> float:
    labels = list(labels)
    if len(labels) == 0:
        raise LengthMismatchError("no test documents")
    if len(labels) != len(vectors):
        raise LengthMismatchError(f"{len(vectors)} vectors vs {len(labels)} labels")
    hits = sum(classify(clf, v) == lab for v, lab in zip(vectors, labels))
    return hits / len(labels)


# ---------------------------------------------------------------------------
# Timing


@dataclass
class BenchmarkResult:
    ratio_mean: float
    ratio_sd: float
    lda_seconds: float  # mean per repetition, whole document set
    dnn_seconds: float
    repetitions: int
    documents: int
    threads: int = 1

    @property
    def ratio_relative_sd(self) -> float:
        return self.ratio_sd / self.ratio_mean if self.ratio_mean else 0.0

    def as_dict(self) -> dict:
        return {
            "ratio_mean": self.ratio_mean,
            "ratio_sd": self.ratio_sd,
            "ratio_relative_sd": self.ratio_relative_sd,
            "lda_seconds": self.lda_seconds,
            "dnn_seconds": self.dnn_seconds,
            "repetitions": self.repetitions,
            "documents": self.documents,
            "threads": self.threads,
        }


def benchmark_speed(lda_model: LdaModel, mlp_model: MlpModel, docs,
                    repetitions: int = 10, e_tol: float = lda.DEFAULT_E_TOL,
                    e_max_iter: int = lda.DEFAULT_E_MAX_ITER,
                    backend: str | None = None) -> BenchmarkResult:
    """Wall-clock teacher-inference time over student-forward time.

    Both paths run single-threaded over the same documents, starting from
    the sparse TF representation (each side pays its own conversion inside
    the timed region).  One untimed warm-up pass precedes the measured
    repetitions; the ratio's mean and standard deviation are taken across
    repetitions on a monotonic clock.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    docs = list(docs)
    if not docs:
        raise ValueError("no documents to time")
    if lda_model.V != mlp_model.architecture.input_dim:
        raise DimensionMismatchError(
            f"teacher V={lda_model.V} vs student input {mlp_model.architecture.input_dim}"
        )
    if lda_model.K != mlp_model.architecture.output_dim:
        raise DimensionMismatchError(
            f"teacher K={lda_model.K} vs student output {mlp_model.architecture.output_dim}"
        )

    ratios, lda_times, dnn_times = [], [], []
    with threadpool_limits(limits=1):
        for v in docs:  # warm-up, untimed
            lda.infer(lda_model, v, e_tol, e_max_iter, backend=backend)
            distill.forward(mlp_model, v)
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for v in docs:
                lda.infer(lda_model, v, e_tol, e_max_iter, backend=backend)
            t_lda = time.perf_counter() - t0
            t0 = time.perf_counter()
            for v in docs:
                distill.forward(mlp_model, v)
            t_dnn = time.perf_counter() - t0
            lda_times.append(t_lda)
            dnn_times.append(t_dnn)
            ratios.append(t_lda / t_dnn)
    ratios_arr = np.array(ratios)
    sd = float(ratios_arr.std(ddof=1)) if repetitions > 1 else 0.0
    return BenchmarkResult(
        ratio_mean=float(ratios_arr.mean()),
        ratio_sd=sd,
        lda_seconds=float(np.mean(lda_times)),
        dnn_seconds=float(np.mean(dnn_times)),
        repetitions=repetitions,
        documents=len(docs),
    )


# ---------------------------------------------------------------------------
# Full sweep


@dataclass
class SweepSettings:
    lda: lda.LdaConfig = field(default_factory=lambda: lda.LdaConfig())
    distill_2l: TrainConfig = TrainConfig()
    distill_3l: TrainConfig = TrainConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    repetitions: int = 10
    input_norm: str = "none"
    backend: str | None = None


@dataclass
class EvalRow:
    K: int
    acc_pca: float
    acc_lda: float
    acc_dnn2l: float
    acc_dnn3l: float
    kl_2l: float
    kl_3l: float
    ratio_2l: float
    ratio_3l: float
    ratio_sd_2l: float
    ratio_sd_3l: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    repetitions: int
    threads: int = 1


class _NullStore:
    """Store used when no artifact directory backs the sweep."""

    def load_lda(self, K):  # noqa: ARG002 - interface
        return None

    def save_lda(self, K, model):
        pass

    def load_thetas(self, K, kind, split):
        return None

    def save_thetas(self, K, kind, split, ids, thetas):
        pass

    def load_dnn(self, K, variant):
        return None

    def save_dnn(self, K, variant, model, history):
        pass

    def load_benchmark(self, K):
        return None

    def save_benchmark(self, K, results):
        pass


def _infer_all(model, docs, cfg, backend):
    return np.stack([
        lda.infer(model, v, cfg.e_tol, cfg.e_max_iter, backend=backend)[0] for v in docs
    ])


def _predict_all(model, docs):
    return np.stack([distill.forward(model, v) for v in docs])


def run_sweep(dataset, topic_counts, settings: SweepSettings | None = None,
              store=None) -> EvalReport:
    """Train teacher and students for every K and fill the report.

    Per K: train LDA on the training split, infer mixtures for both splits,
    distill both student variants, fit PCA with K components, train one
    classifier per vector family, measure mean test KL per variant, and
    time both variants against the teacher.  When a store is supplied,
    finished artifacts are reused instead of recomputed.
    """
    topic_counts = list(topic_counts)
    if not topic_counts:
        raise ValueError("topic_counts must be non-empty")
    settings = settings or SweepSettings()
    store = store if store is not None else _NullStore()

    vocab_size = len(dataset.vocabulary)
    train_docs = [v for v, _ in dataset.train]
    test_docs = [v for v, _ in dataset.test]
    train_labels = [lab for _, lab in dataset.train]
    test_labels = [lab for _, lab in dataset.test]
    train_dense = np.stack([v.to_dense(vocab_size) for v in train_docs])
    test_dense = np.stack([v.to_dense(vocab_size) for v in test_docs])

    rows = []
    for K in topic_counts:
        log.info("sweep: K=%d", K)
        cfg = settings.lda

        teacher = store.load_lda(K)
        if teacher is None:
            teacher = lda.train_em(
                train_docs, vocab_size, K, alpha=cfg.alpha, em_tol=cfg.em_tol,
                em_max_iter=cfg.em_max_iter, e_tol=cfg.e_tol,
                e_max_iter=cfg.e_max_iter, seed=cfg.seed, init=cfg.init,
                smoothing=cfg.smoothing, backend=settings.backend,
            )
            store.save_lda(K, teacher)

        thetas = {}
        for split, docs, ids in (
            ("train", train_docs, dataset.train_ids),
            ("test", test_docs, dataset.test_ids),
        ):
            cached = store.load_thetas(K, "lda", split)
            if cached is None:
                cached = _infer_all(teacher, docs, cfg, settings.backend)
                store.save_thetas(K, "lda", split, ids, cached)
            thetas[split] = cached

        students = {}
        for variant, tcfg in ((distill.TWO_LAYER, settings.distill_2l),
                              (distill.THREE_LAYER, settings.distill_3l)):
            student = store.load_dnn(K, variant)
            if student is None:
                arch = distill.MlpArchitecture(
                    variant=variant, input_dim=vocab_size, output_dim=K
                )
                student = distill.init_mlp(arch, tcfg.seed, settings.input_norm)
                train_pairs = list(zip(train_docs, thetas["train"]))
                val_pairs = list(zip(test_docs, thetas["test"]))
                student, history = distill.train_sgd(student, train_pairs, tcfg, val_pairs)
                store.save_dnn(K, variant, student, history)
            students[variant] = student

        preds = {}
        for variant, student in students.items():
            for split, docs, ids in (
                ("train", train_docs, dataset.train_ids),
                ("test", test_docs, dataset.test_ids),
            ):
                cached = store.load_thetas(K, variant, split)
                if cached is None:
                    cached = _predict_all(student, docs)
                    store.save_thetas(K, variant, split, ids, cached)
                preds[(variant, split)] = cached

        pca = pca_fit(train_dense, K)
        pca_train = np.stack([pca_transform(pca, x) for x in train_dense])
        pca_test = np.stack([pca_transform(pca, x) for x in test_dense])

        def _acc(train_vecs, test_vecs):
            clf = train_classifier(
                train_vecs, train_labels, settings.classifier,
                class_order=dataset.labels,
            )
            return accuracy(clf, test_vecs, test_labels)

        acc_lda = _acc(thetas["train"], thetas["test"])
        acc_2l = _acc(preds[(distill.TWO_LAYER, "train")], preds[(distill.TWO_LAYER, "test")])
        acc_3l = _acc(preds[(distill.THREE_LAYER, "train")], preds[(distill.THREE_LAYER, "test")])
        acc_pca = _acc(pca_train, pca_test)

        kl_2l = mean_kl(thetas["test"], preds[(distill.TWO_LAYER, "test")])
        kl_3l = mean_kl(thetas["test"], preds[(distill.THREE_LAYER, "test")])

        bench = store.load_benchmark(K)
        if bench is None:
            bench = {
                variant: benchmark_speed(
                    teacher, students[variant], test_docs,
                    repetitions=settings.repetitions, e_tol=cfg.e_tol,
                    e_max_iter=cfg.e_max_iter, backend=settings.backend,
                ).as_dict()
                for variant in (distill.TWO_LAYER, distill.THREE_LAYER)
            }
            store.save_benchmark(K, bench)

        rows.append(EvalRow(
            K=K,
            acc_pca=acc_pca,
            acc_lda=acc_lda,
            acc_dnn2l=acc_2l,
            acc_dnn3l=acc_3l,
            kl_2l=kl_2l,
            kl_3l=kl_3l,
            ratio_2l=bench[distill.TWO_LAYER]["ratio_mean"],
            ratio_3l=bench[distill.THREE_LAYER]["ratio_mean"],
            ratio_sd_2l=bench[distill.TWO_LAYER]["ratio_sd"],
            ratio_sd_3l=bench[distill.THREE_LAYER]["ratio_sd"],
        ))
    return EvalReport(rows=rows, repetitions=settings.repetitions)


# ---------------------------------------------------------------------------
# Report files


_CSV_COLUMNS = ("K", "acc_pca", "acc_lda", "acc_dnn2l", "acc_dnn3l",
                "kl_2l", "kl_3l", "ratio_2l", "ratio_3l",
                "ratio_sd_2l", "ratio_sd_3l")


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(_fmt(getattr(row, c)) for c in _CSV_COLUMNS) + "\n")


def _write_tsv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(c) for c in row) + "\n")


def write_accuracy_tsv(report: EvalReport, path) -> None:
    _write_tsv(path, ("K", "acc_pca", "acc_lda", "acc_dnn2l", "acc_dnn3l"),
               [(r.K, r.acc_pca, r.acc_lda, r.acc_dnn2l, r.acc_dnn3l) for r in report.rows])


def write_kl_tsv(report: EvalReport, path) -> None:
    _write_tsv(path, ("K", "kl_2l", "kl_3l"),
               [(r.K, r.kl_2l, r.kl_3l) for r in report.rows])


def write_speed_tsv(report: EvalReport, path) -> None:
    _write_tsv(path, ("K", "ratio_2l", "ratio_3l", "ratio_sd_2l", "ratio_sd_3l"),
               [(r.K, r.ratio_2l, r.ratio_3l, r.ratio_sd_2l, r.ratio_sd_3l)
                for r in report.rows])
