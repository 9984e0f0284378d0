"""Command-line entry point.

One executable with a subcommand per pipeline stage plus `run` for the
whole experiment.  Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import corpus, distill, evalsuite, lda, pipeline, probe
from ._kernels import available_backends, default_backend_name
from .errors import DataError, NumericError

log = logging.getLogger("topicdistill")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common_flags(parser):
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors")
    parser.add_argument("--force", action="store_true",
                        help="recompute outputs even when they already exist")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap (timing stages always use 1)")
    parser.add_argument("--backend", choices=["c", "numpy"], default=None,
                        help="inference kernel (default: compiled when available)")


def _bundle_split(dataset, split):
    if split == "train":
        return [v for v, _ in dataset.train], list(dataset.train_ids)
    if split == "test":
        return [v for v, _ in dataset.test], list(dataset.test_ids)
    raise DataError(f"unknown split {split!r}")


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_prepare(args):
    dataset = corpus.load_dataset(
        args.input, min_doc_len=args.min_doc_len, min_word_freq=args.min_word_freq
    )
    corpus.save_bundle(dataset, args.out, thresholds={
        "min_doc_len": args.min_doc_len,
        "min_word_freq": args.min_word_freq,
    })
    log.info("bundle written to %s: V=%d, %d train / %d test documents",
             args.out, len(dataset.vocabulary), len(dataset.train), len(dataset.test))
    return EXIT_OK


def _cmd_train_lda(args):
    dataset = corpus.load_bundle(args.data)
    docs = [v for v, _ in dataset.train]
    model, history = lda.train_em(
        docs, len(dataset.vocabulary), args.topics, alpha=args.alpha,
        em_tol=args.em_tol, em_max_iter=args.em_max_iter, e_tol=args.e_tol,
        e_max_iter=args.e_max_iter, seed=args.seed, init=args.init,
        smoothing=args.smoothing, backend=args.backend, return_history=True,
    )
    lda.save_model(model, args.out)
    log.info("trained K=%d on %d documents in %d EM iterations (bound %.4f)",
             model.K, len(docs), len(history), history[-1])
    return EXIT_OK


def _cmd_infer_lda(args):
    model = lda.load_model(args.model)
    dataset = corpus.load_bundle(args.data)
    docs, ids = _bundle_split(dataset, args.split)
    thetas = np.stack([
        lda.infer(model, v, args.e_tol, args.e_max_iter, backend=args.backend)[0]
        for v in docs
    ]) if docs else np.zeros((0, model.K))
    lda.write_theta_tsv(args.out, ids, thetas)
    log.info("wrote %d topic mixtures to %s", len(ids), args.out)
    return EXIT_OK


def _join_theta_pairs(dataset, theta_path):
    ids, thetas = lda.read_theta_tsv(theta_path)
    by_id = {}
    for (vec, _), doc_id in zip(dataset.train, dataset.train_ids):
        by_id[doc_id] = vec
    for (vec, _), doc_id in zip(dataset.test, dataset.test_ids):
        by_id[doc_id] = vec
    pairs = []
    for doc_id, theta in zip(ids, thetas):
        if doc_id not in by_id:
            raise DataError(f"document id {doc_id!r} from {theta_path} not in bundle")
        pairs.append((by_id[doc_id], theta))
    return pairs, thetas.shape[1] if len(thetas) else 0


def _cmd_distill(args):
    dataset = corpus.load_bundle(args.data)
    pairs, k = _join_theta_pairs(dataset, args.theta)
    if not pairs:
        raise DataError(f"no training pairs in {args.theta}")
    val_pairs = None
    if args.val_theta:
        val_pairs, _ = _join_theta_pairs(dataset, args.val_theta)
    arch = distill.MlpArchitecture(
        variant=args.variant, input_dim=len(dataset.vocabulary), output_dim=k
    )
    model = distill.init_mlp(arch, args.seed, args.input_norm)
    config = distill.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
        seed=args.seed, lr_decay=args.lr_decay, shuffle=not args.no_shuffle,
    )
    model, history = distill.train_sgd(model, pairs, config, val_pairs)
    distill.save_model(model, args.out)
    msg = f"final train loss {history.train_loss[-1]:.5f}"
    if history.val_loss:
        msg += f", val loss {history.val_loss[-1]:.5f}"
    log.info("distilled %s (K=%d) over %d epochs: %s",
             args.variant, k, args.epochs, msg)
    return EXIT_OK


def _cmd_infer_dnn(args):
    model = distill.load_model(args.model)
    dataset = corpus.load_bundle(args.data)
    docs, ids = _bundle_split(dataset, args.split)
    k = model.architecture.output_dim
    thetas = np.stack([distill.forward(model, v) for v in docs]) if docs else np.zeros((0, k))
    lda.write_theta_tsv(args.out, ids, thetas)
    log.info("wrote %d predictions to %s", len(ids), args.out)
    return EXIT_OK


def _cmd_evaluate(args):
    dataset = corpus.load_bundle(args.data)
    topic_counts = [int(k) for k in args.topics.split(",") if k]
    settings = evalsuite.SweepSettings(
        lda=lda.LdaConfig(alpha=args.alpha, seed=args.seed),
        distill_2l=distill.TrainConfig(seed=args.seed + 1),
        distill_3l=distill.TrainConfig(seed=args.seed + 2),
        classifier=evalsuite.ClassifierConfig(seed=args.seed + 3),
        repetitions=args.reps,
        backend=args.backend,
    )
    report = evalsuite.run_sweep(dataset, topic_counts, settings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evalsuite.write_report_csv(report, out / "report.csv")
    evalsuite.write_accuracy_tsv(report, out / "fig1_accuracy.tsv")
    evalsuite.write_kl_tsv(report, out / "fig2_kl.tsv")
    evalsuite.write_speed_tsv(report, out / "fig3_speed.tsv")
    for row in report.rows:
        log.info("K=%d: acc pca/lda/2l/3l = %.3f/%.3f/%.3f/%.3f, "
                 "kl 2l/3l = %.4f/%.4f, ratio 2l/3l = %.1f/%.1f",
                 row.K, row.acc_pca, row.acc_lda, row.acc_dnn2l, row.acc_dnn3l,
                 row.kl_2l, row.kl_3l, row.ratio_2l, row.ratio_3l)
    log.info("report written to %s", out)
    return EXIT_OK


def _cmd_benchmark(args):
    teacher = lda.load_model(args.lda)
    student = distill.load_model(args.dnn)
    dataset = corpus.load_bundle(args.data)
    docs, _ = _bundle_split(dataset, args.split)
    result = evalsuite.benchmark_speed(
        teacher, student, docs, repetitions=args.reps,
        e_tol=args.e_tol, e_max_iter=args.e_max_iter, backend=args.backend,
    )
    lo, hi = evalsuite.TYPICAL_RATIO_BAND
    print(f"documents: {result.documents}  repetitions: {result.repetitions}  "
          f"threads: {result.threads}")
    print(f"teacher inference: {result.lda_seconds:.4f} s/rep   "
          f"student forward: {result.dnn_seconds:.4f} s/rep")
    print(f"speed ratio (teacher/student): {result.ratio_mean:.1f} "
          f"(sd {result.ratio_sd:.2f}, relative {result.ratio_relative_sd:.1%})")
    print(f"context: ratios of {lo:.0f}x-{hi:.0f}x are typical for K in [10, 70] "
          "at full corpus scale; hardware dependent, not a pass/fail bound")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _cmd_probe(args):
    model = distill.load_model(args.model)
    words = tuple(
        w for w in Path(args.vocab).read_text(encoding="utf-8").splitlines() if w
    )
    vocab = corpus.Vocabulary(words=words, index={w: i for i, w in enumerate(words)})
    report = probe.probe_report(model, vocab, n=args.top, scale=args.scale,
                                mode=args.mode)
    probe.write_probe_tsv(report, args.out)
    log.info("probed %d neurons into %s", len(report.profiles), args.out)
    if model.architecture.variant == distill.THREE_LAYER:
        edges_out = args.edges_out or str(Path(args.out).with_name("edges.tsv"))
        probe.write_edges_tsv(probe.strongest_edges(model), edges_out)
        log.info("layer-to-layer edges written to %s", edges_out)
    return EXIT_OK


def _cmd_run(args):
    config = pipeline.load_config(args.config)
    if args.backend:
        config = dataclasses.replace(config, backend=args.backend)
    manifest = pipeline.run_pipeline(config, force=args.force)
    n_skipped = sum(s["skipped"] for s in manifest["stages"])
    log.info("ran %d stages (%d reused) in %.1f s",
             len(manifest["stages"]), n_skipped, manifest["timing"]["total_seconds"])
    return EXIT_OK


def _cmd_validate_config(args):
    diags = pipeline.validate_config(args.config)
    for d in diags:
        print(d)
    if diags:
        return EXIT_DATA
    print("config is valid")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topicdistill",
                     description="Distill LDA inference into a small network "
                                 "and evaluate fidelity and speed.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="tokenize, filter, and vectorize a JSONL corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--min-doc-len", type=int, default=0)
    p.add_argument("--min-word-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train-lda", help="fit the teacher by variational EM")
    p.add_argument("--data", required=True, help="prepared bundle directory")
    p.add_argument("--topics", type=int, required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="symmetric Dirichlet prior (default 50/K)")
    p.add_argument("--init", choices=["uniform", "random"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--em-tol", type=float, default=lda.DEFAULT_EM_TOL)
    p.add_argument("--em-max-iter", type=int, default=lda.DEFAULT_EM_MAX_ITER)
    p.add_argument("--e-tol", type=float, default=lda.DEFAULT_E_TOL)
    p.add_argument("--e-max-iter", type=int, default=lda.DEFAULT_E_MAX_ITER)
    p.add_argument("--smoothing", type=float, default=lda.DEFAULT_SMOOTHING)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_train_lda)

    p = sub.add_parser("infer-lda", help="infer topic mixtures with the teacher")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--e-tol", type=float, default=lda.DEFAULT_E_TOL)
    p.add_argument("--e-max-iter", type=int, default=lda.DEFAULT_E_MAX_ITER)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_infer_lda)

    p = sub.add_parser("distill", help="train a student network on teacher mixtures")
    p.add_argument("--data", required=True)
    p.add_argument("--theta", required=True, help="teacher mixtures (theta.tsv)")
    p.add_argument("--val-theta", default=None,
                   help="optional mixtures for validation loss tracking")
    p.add_argument("--variant", choices=[distill.TWO_LAYER, distill.THREE_LAYER],
                   required=True)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lr-decay", type=float, default=0.98)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--input-norm", choices=["none", "l1"], default="none")
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("infer-dnn", help="predict topic mixtures with a student")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_infer_dnn)

    p = sub.add_parser("evaluate", help="accuracy/KL/speed sweep over topic counts")
    p.add_argument("--data", required=True)
    p.add_argument("--topics", required=True, help="comma-separated, e.g. 10,20,30")
    p.add_argument("--seed", type=int, default=0,
                   help="base seed; stages derive theirs as S, S+1 (2l), "
                        "S+2 (3l), S+3 (classifier)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark", help="teacher-to-student inference-time ratio")
    p.add_argument("--lda", required=True)
    p.add_argument("--dnn", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--e-tol", type=float, default=lda.DEFAULT_E_TOL)
    p.add_argument("--e-max-iter", type=int, default=lda.DEFAULT_E_MAX_ITER)
    p.add_argument("--out", default=None, help="optional JSON result file")
    _common_flags(p)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("probe", help="per-neuron top words via one-hot probing")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--mode", choices=["signed", "abs"], default="signed")
    p.add_argument("--edges-out", default=None)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate-config", help="check a config file against the schema")
    p.add_argument("config")
    _common_flags(p)
    p.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.backend and args.backend not in available_backends():
        print(f"topicdistill: kernel backend {args.backend!r} is not available "
              f"(built: {available_backends()})", file=sys.stderr)
        return EXIT_USAGE
    log.debug("kernel backend: %s", args.backend or default_backend_name())
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except DataError as exc:
        print(f"topicdistill: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"topicdistill: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"topicdistill: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
