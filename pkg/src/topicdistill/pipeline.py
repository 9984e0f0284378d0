"""Experiment configuration and the end-to-end pipeline.

A single JSON config describes one experiment (corpus, thresholds, topic
counts, training settings, seeds).  `run_pipeline` executes the stages in
dependency order - prepare, per-K teacher training and inference, per-K
distillation and student inference, evaluation, benchmark, probe - reusing
any stage output that already exists on disk unless forced, and finishes
by writing a manifest with every seed, threshold, and output hash.

Wall-clock dependent values (benchmark results, the report columns built
from them, stage durations) are kept in clearly separated manifest fields
and files so reproducibility checks can exclude exactly those.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

from . import corpus, distill, evalsuite, lda, probe
from .errors import DataError, ParseError
from .evalsuite import ClassifierConfig, SweepSettings
from .distill import TrainConfig
from .lda import LdaConfig

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
_VARIANTS = (distill.TWO_LAYER, distill.THREE_LAYER)


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: Path
    out_dir: Path
    min_doc_len: int = 0
    min_word_freq: int = 1
    topic_counts: tuple[int, ...] = (10,)
    lda: LdaConfig = LdaConfig()
    distill_2l: TrainConfig = TrainConfig()
    distill_3l: TrainConfig = TrainConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    repetitions: int = 10
    input_norm: str = "none"
    probe_top: int = 10
    probe_scale: float = 1.0
    probe_mode: str = "signed"
    backend: str | None = None

    def sweep_settings(self) -> SweepSettings:
        return SweepSettings(
            lda=self.lda,
            distill_2l=self.distill_2l,
            distill_3l=self.distill_3l,
            classifier=self.classifier,
            repetitions=self.repetitions,
            input_norm=self.input_norm,
            backend=self.backend,
        )


# ---------------------------------------------------------------------------
# Config loading and validation


def _check(diags, cond, path, message):
    if not cond:
        diags.append(f"{path}: {message}")
    return cond


def _check_num(diags, obj, path, *, minimum=None, exclusive_min=None, integer=False,
               optional=False):
    if obj is None and optional:
        return True
    if integer and (isinstance(obj, bool) or not isinstance(obj, int)):
        diags.append(f"{path}: expected an integer, got {obj!r}")
        return False
    if not isinstance(obj, (int, float)) or isinstance(obj, bool):
        diags.append(f"{path}: expected a number, got {obj!r}")
        return False
    if minimum is not None and obj < minimum:
        diags.append(f"{path}: must be >= {minimum}, got {obj}")
        return False
    if exclusive_min is not None and obj <= exclusive_min:
        diags.append(f"{path}: must be > {exclusive_min}, got {obj}")
        return False
    return True


_TRAIN_FIELDS = {
    "learning_rate": dict(exclusive_min=0.0),
    "epochs": dict(minimum=1, integer=True),
    "batch_size": dict(minimum=1, integer=True),
    "seed": dict(integer=True),
    "lr_decay": dict(exclusive_min=0.0),
    "momentum": dict(minimum=0.0),
    "weight_decay": dict(minimum=0.0),
}


def _validate_dict(diags, obj, path, allowed):
    if not _check(diags, isinstance(obj, dict), path, f"expected an object, got {type(obj).__name__}"):
        return False
    for key in obj:
        _check(diags, key in allowed, f"{path}.{key}", "unknown field")
    return True


def validate_config_data(data, base_dir: Path) -> list[str]:
    """Every schema violation as a 'field.path: message' line; empty when valid."""
    diags: list[str] = []
    if not isinstance(data, dict):
        return ["$: expected a JSON object at the top level"]

    allowed_top = {"corpus", "out_dir", "prepare", "topic_counts", "lda", "distill",
                   "input_norm", "eval", "probe", "backend"}
    for key in data:
        _check(diags, key in allowed_top, key, "unknown field")

    for req in ("corpus", "out_dir"):
        if _check(diags, req in data, req, "required field missing"):
            _check(diags, isinstance(data[req], str) and data[req], req,
                   "expected a non-empty path string")
    if isinstance(data.get("corpus"), str) and data["corpus"]:
        corpus_path = (base_dir / data["corpus"]).resolve()
        _check(diags, corpus_path.is_file(), "corpus", f"file not found: {corpus_path}")

    prep = data.get("prepare", {})
    if _validate_dict(diags, prep, "prepare", {"min_doc_len", "min_word_freq"}):
        _check_num(diags, prep.get("min_doc_len", 0), "prepare.min_doc_len",
                   minimum=0, integer=True)
        _check_num(diags, prep.get("min_word_freq", 1), "prepare.min_word_freq",
                   minimum=1, integer=True)

    tc = data.get("topic_counts", [10])
    if _check(diags, isinstance(tc, list) and tc, "topic_counts", "expected a non-empty list"):
        ok = all(_check_num(diags, k, f"topic_counts[{i}]", minimum=2, integer=True)
                 for i, k in enumerate(tc))
        if ok:
            _check(diags, list(tc) == sorted(set(tc)), "topic_counts",
                   "must be strictly ascending")

    ld = data.get("lda", {})
    if _validate_dict(diags, ld, "lda",
                      {"alpha", "init", "seed", "e_tol", "e_max_iter", "em_tol",
                       "em_max_iter", "smoothing"}):
        _check_num(diags, ld.get("alpha"), "lda.alpha", exclusive_min=0.0, optional=True)
        _check(diags, ld.get("init", "random") in ("random", "uniform"), "lda.init",
               "expected 'random' or 'uniform'")
        _check_num(diags, ld.get("seed", 0), "lda.seed", integer=True)
        _check_num(diags, ld.get("e_tol", lda.DEFAULT_E_TOL), "lda.e_tol", exclusive_min=0.0)
        _check_num(diags, ld.get("e_max_iter", lda.DEFAULT_E_MAX_ITER), "lda.e_max_iter",
                   minimum=1, integer=True)
        _check_num(diags, ld.get("em_tol", lda.DEFAULT_EM_TOL), "lda.em_tol", exclusive_min=0.0)
        _check_num(diags, ld.get("em_max_iter", lda.DEFAULT_EM_MAX_ITER), "lda.em_max_iter",
                   minimum=1, integer=True)
        _check_num(diags, ld.get("smoothing", lda.DEFAULT_SMOOTHING), "lda.smoothing",
                   exclusive_min=0.0)

    dist = data.get("distill", {})
    if _validate_dict(diags, dist, "distill", {"2l", "3l"}):
        for variant, sub in dist.items():
            vpath = f"distill.{variant}"
            if _validate_dict(diags, sub, vpath, set(_TRAIN_FIELDS) | {"shuffle"}):
                for fname, kwargs in _TRAIN_FIELDS.items():
                    if fname in sub:
                        _check_num(diags, sub[fname], f"{vpath}.{fname}", **kwargs)
                if "shuffle" in sub:
                    _check(diags, isinstance(sub["shuffle"], bool), f"{vpath}.shuffle",
                           "expected a boolean")

    _check(diags, data.get("input_norm", "none") in ("none", "l1"), "input_norm",
           "expected 'none' or 'l1'")

    ev = data.get("eval", {})
    if _validate_dict(diags, ev, "eval", {"repetitions", "classifier"}):
        _check_num(diags, ev.get("repetitions", 10), "eval.repetitions",
                   minimum=1, integer=True)
        clf = ev.get("classifier", {})
        if _validate_dict(diags, clf, "eval.classifier", {"reg_lambda", "epochs", "seed"}):
            _check_num(diags, clf.get("reg_lambda", 1e-4), "eval.classifier.reg_lambda",
                       exclusive_min=0.0)
            _check_num(diags, clf.get("epochs", 50), "eval.classifier.epochs",
                       minimum=1, integer=True)
            _check_num(diags, clf.get("seed", 0), "eval.classifier.seed", integer=True)

    pr = data.get("probe", {})
    if _validate_dict(diags, pr, "probe", {"top", "scale", "mode"}):
        _check_num(diags, pr.get("top", 10), "probe.top", minimum=1, integer=True)
        _check_num(diags, pr.get("scale", 1.0), "probe.scale", exclusive_min=0.0)
        _check(diags, pr.get("mode", "signed") in ("signed", "abs"), "probe.mode",
               "expected 'signed' or 'abs'")

    backend = data.get("backend")
    _check(diags, backend in (None, "c", "numpy"), "backend",
           "expected null, 'c', or 'numpy'")
    return diags


def _read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}", line=exc.lineno) from exc


def validate_config(path) -> list[str]:
    """Diagnostics for a config file; an empty list means it is valid."""
    data = _read_config_file(path)
    return validate_config_data(data, Path(path).resolve().parent)


def load_config(path) -> ExperimentConfig:
    data = _read_config_file(path)
    base = Path(path).resolve().parent
    diags = validate_config_data(data, base)
    if diags:
        raise DataError("invalid config:\n" + "\n".join(diags))
    prep = data.get("prepare", {})
    ld = dict(data.get("lda", {}))
    if ld.get("alpha") is not None:
        ld["alpha"] = float(ld["alpha"])
    dist = data.get("distill", {})
    ev = data.get("eval", {})
    pr = data.get("probe", {})
    return ExperimentConfig(
        corpus=(base / data["corpus"]).resolve(),
        out_dir=(base / data["out_dir"]).resolve(),
        min_doc_len=int(prep.get("min_doc_len", 0)),
        min_word_freq=int(prep.get("min_word_freq", 1)),
        topic_counts=tuple(int(k) for k in data.get("topic_counts", [10])),
        lda=LdaConfig(**ld),
        distill_2l=TrainConfig(**dist.get("2l", {})),
        distill_3l=TrainConfig(**dist.get("3l", {})),
        classifier=ClassifierConfig(**ev.get("classifier", {})),
        repetitions=int(ev.get("repetitions", 10)),
        input_norm=data.get("input_norm", "none"),
        probe_top=int(pr.get("top", 10)),
        probe_scale=float(pr.get("scale", 1.0)),
        probe_mode=pr.get("mode", "signed"),
        backend=data.get("backend"),
    )


# ---------------------------------------------------------------------------
# Disk-backed artifact store


_BUNDLE_FILES = ("vocab.txt", "train.tf", "test.tf", "train.ids", "test.ids", "meta.json")


class DirStore:
    """Load-or-compute artifact store rooted at the pipeline output directory."""

    def __init__(self, root, dataset: corpus.Dataset, force: bool = False):
        self.root = Path(root)
        self.dataset = dataset
        self.force = force
        for sub in ("models", "thetas", "report", "probe"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # path layout -----------------------------------------------------------
    def lda_path(self, K):
        return self.root / "models" / f"lda_K{K}.json"

    def dnn_path(self, K, variant):
        return self.root / "models" / f"dnn_K{K}_{variant}.json"

    def history_path(self, K, variant):
        return self.root / "models" / f"dnn_K{K}_{variant}.history.json"

    def theta_path(self, K, kind, split):
        name = "lda" if kind == "lda" else f"dnn_{kind}"
        return self.root / "thetas" / f"theta_{name}_K{K}_{split}.tsv"

    def benchmark_path(self, K):
        return self.root / "report" / f"benchmark_K{K}.json"

    # load-or-none ----------------------------------------------------------
    def _fresh(self, path) -> bool:
        return not self.force and path.is_file()

    def load_lda(self, K):
        return lda.load_model(self.lda_path(K)) if self._fresh(self.lda_path(K)) else None

    def save_lda(self, K, model):
        lda.save_model(model, self.lda_path(K))

    def load_thetas(self, K, kind, split):
        path = self.theta_path(K, kind, split)
        if not self._fresh(path):
            return None
        ids, thetas = lda.read_theta_tsv(path)
        expected = self.dataset.train_ids if split == "train" else self.dataset.test_ids
        if tuple(ids) != tuple(expected):
            raise DataError(
                f"{path} does not match the current dataset (stale artifact?); "
                "rerun with --force"
            )
        return thetas

    def save_thetas(self, K, kind, split, ids, thetas):
        lda.write_theta_tsv(self.theta_path(K, kind, split), ids, thetas)

    def load_dnn(self, K, variant):
        path = self.dnn_path(K, variant)
        return distill.load_model(path) if self._fresh(path) else None

    def save_dnn(self, K, variant, model, history):
        distill.save_model(model, self.dnn_path(K, variant))
        with open(self.history_path(K, variant), "w", encoding="utf-8") as fh:
            json.dump({"train_loss": history.train_loss, "val_loss": history.val_loss}, fh)
            fh.write("\n")

    def load_benchmark(self, K):
        path = self.benchmark_path(K)
        if not self._fresh(path):
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def save_benchmark(self, K, results):
        with open(self.benchmark_path(K), "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Stage plan and manifest


def _stage_plan(config: ExperimentConfig) -> list[tuple[str, list[str], bool]]:
    """Ordered (stage name, output paths relative to out_dir, timing flag)."""
    plan: list[tuple[str, list[str], bool]] = [
        ("prepare", [f"data/{f}" for f in _BUNDLE_FILES], False),
    ]
    for K in config.topic_counts:
        plan.append((f"train-lda-K{K}", [f"models/lda_K{K}.json"], False))
        for split in ("train", "test"):
            plan.append((f"infer-lda-K{K}-{split}",
                         [f"thetas/theta_lda_K{K}_{split}.tsv"], False))
        for variant in _VARIANTS:
            plan.append((f"distill-K{K}-{variant}",
                         [f"models/dnn_K{K}_{variant}.json",
                          f"models/dnn_K{K}_{variant}.history.json"], False))
            for split in ("train", "test"):
                plan.append((f"infer-dnn-K{K}-{variant}-{split}",
                             [f"thetas/theta_dnn_{variant}_K{K}_{split}.tsv"], False))
    plan.append(("evaluate",
                 ["report/fig1_accuracy.tsv", "report/fig2_kl.tsv"], False))
    for K in config.topic_counts:
        plan.append((f"benchmark-K{K}", [f"report/benchmark_K{K}.json"], True))
    plan.append(("report", ["report/report.csv", "report/fig3_speed.tsv"], True))
    for K in config.topic_counts:
        for variant in _VARIANTS:
            outputs = [f"probe/probe_K{K}_{variant}.tsv"]
            if variant == distill.THREE_LAYER:
                outputs.append(f"probe/edges_K{K}_{variant}.tsv")
            plan.append((f"probe-K{K}-{variant}", outputs, False))
    return plan


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_echo(config: ExperimentConfig) -> dict:
    echo = asdict(config)
    # out_dir and the resolved corpus path vary across machines/replicas and
    # must not defeat manifest comparison; keep the corpus basename only.
    echo["corpus"] = Path(echo["corpus"]).name
    del echo["out_dir"]
    return echo


def _prepare(config: ExperimentConfig, force: bool) -> tuple[corpus.Dataset, bool]:
    bundle_dir = config.out_dir / "data"
    have = all((bundle_dir / f).is_file() for f in _BUNDLE_FILES)
    if have and not force:
        return corpus.load_bundle(bundle_dir), True
    dataset = corpus.load_dataset(
        config.corpus, min_doc_len=config.min_doc_len,
        min_word_freq=config.min_word_freq,
    )
    corpus.save_bundle(dataset, bundle_dir, thresholds={
        "min_doc_len": config.min_doc_len,
        "min_word_freq": config.min_word_freq,
    })
    return dataset, False


@contextmanager
def _stage(name):
    """Names the failing stage on the way out without changing the error type."""
    try:
        yield
    except Exception as exc:
        log.error("stage %s failed: %s", name, exc)
        raise


def run_pipeline(config: ExperimentConfig, force: bool = False) -> dict:
    """Execute every stage, write manifest.json, and return the manifest.

    A failing stage is named in the error log and its exception propagates
    unchanged; outputs written so far stay on disk, so a rerun resumes
    from the failure point.
    """
    t_start = time.perf_counter()
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    plan = _stage_plan(config)
    pre_existing = {
        name: all((out / rel).is_file() for rel in rels)
        for name, rels, _ in plan
    }

    with _stage("prepare"):
        dataset, _ = _prepare(config, force)
    store = DirStore(out, dataset, force=force)

    with _stage("evaluate"):
        report = evalsuite.run_sweep(dataset, config.topic_counts,
                                     config.sweep_settings(), store)
        evalsuite.write_accuracy_tsv(report, out / "report" / "fig1_accuracy.tsv")
        evalsuite.write_kl_tsv(report, out / "report" / "fig2_kl.tsv")
        evalsuite.write_report_csv(report, out / "report" / "report.csv")
        evalsuite.write_speed_tsv(report, out / "report" / "fig3_speed.tsv")

    for K in config.topic_counts:
        for variant in _VARIANTS:
            probe_path = out / "probe" / f"probe_K{K}_{variant}.tsv"
            edges_path = out / "probe" / f"edges_K{K}_{variant}.tsv"
            need_edges = variant == distill.THREE_LAYER
            if not force and probe_path.is_file() and (not need_edges or edges_path.is_file()):
                continue
            with _stage(f"probe-K{K}-{variant}"):
                model = store.load_dnn(K, variant) if not force else None
                if model is None:
                    model = distill.load_model(store.dnn_path(K, variant))
                rep = probe.probe_report(model, dataset.vocabulary, n=config.probe_top,
                                         scale=config.probe_scale, mode=config.probe_mode)
                probe.write_probe_tsv(rep, probe_path)
                if need_edges:
                    probe.write_edges_tsv(probe.strongest_edges(model), edges_path)

    stages = []
    timing_outputs = {}
    for name, rels, timing in plan:
        entry = {
            "name": name,
            "skipped": bool(pre_existing[name]) and not force,
            "outputs": {},
        }
        for rel in rels:
            digest = _sha256(out / rel)
            if timing:
                timing_outputs[rel] = digest
            else:
                entry["outputs"][rel] = digest
        stages.append(entry)

    manifest = {
        "version": MANIFEST_VERSION,
        "config": _config_echo(config),
        "seeds": {
            "lda": config.lda.seed,
            "distill_2l": config.distill_2l.seed,
            "distill_3l": config.distill_3l.seed,
            "classifier": config.classifier.seed,
        },
        "thresholds": {
            "min_doc_len": config.min_doc_len,
            "min_word_freq": config.min_word_freq,
        },
        "stages": stages,
        "timing_outputs": timing_outputs,
        "timing": {
            "total_seconds": time.perf_counter() - t_start,
            "repetitions": config.repetitions,
            "threads": 1,
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("pipeline complete: %s", out)
    return manifest
