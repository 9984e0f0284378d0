import hashlib
import json

import pytest

from topicdistill import cli, pipeline
from topicdistill.data import sample_corpus_path
from topicdistill.errors import DataError


def subsample_corpus(path, per_class_train=8, per_class_test=4):
    """Small deterministic slice of the bundled corpus, all classes/splits."""
    taken = {}
    lines = []
    for line in sample_corpus_path().read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        key = (rec["label"], rec["split"])
        budget = per_class_train if rec["split"] == "train" else per_class_test
        if taken.get(key, 0) < budget:
            taken[key] = taken.get(key, 0) + 1
            lines.append(line)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_config(tmp_path, out_name="out", **overrides):
    corpus_path = tmp_path / "mini.jsonl"
    if not corpus_path.exists():
        subsample_corpus(corpus_path)
    data = {
        "corpus": "mini.jsonl",
        "out_dir": out_name,
        "prepare": {"min_doc_len": 50, "min_word_freq": 3},
        "topic_counts": [3],
        "lda": {"seed": 7, "em_max_iter": 4},
        "distill": {
            "2l": {"epochs": 4, "seed": 8},
            "3l": {"epochs": 4, "seed": 9},
        },
        "eval": {"repetitions": 1, "classifier": {"epochs": 5, "seed": 10}},
        "probe": {"top": 5},
    }
    data.update(overrides)
    cfg_path = tmp_path / "experiment.json"
    cfg_path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return cfg_path


class TestValidateConfig:
    def test_valid(self, tmp_path):
        cfg = write_config(tmp_path)
        assert pipeline.validate_config(cfg) == []

    def test_diagnostics_carry_field_paths(self, tmp_path):
        cfg = write_config(
            tmp_path,
            topic_counts=[5, 3],
            lda={"seed": "not-an-int", "init": "bogus"},
            extra_field=1,
        )
        diags = pipeline.validate_config(cfg)
        joined = "\n".join(diags)
        assert "topic_counts" in joined
        assert "lda.seed" in joined
        assert "lda.init" in joined
        assert "extra_field" in joined
        assert len(diags) >= 4

    def test_missing_corpus_file(self, tmp_path):
        cfg = write_config(tmp_path, corpus="nowhere.jsonl")
        diags = pipeline.validate_config(cfg)
        assert any(d.startswith("corpus:") for d in diags)

    def test_load_config_rejects_invalid(self, tmp_path):
        cfg = write_config(tmp_path, topic_counts=[])
        with pytest.raises(DataError):
            pipeline.load_config(cfg)

    def test_load_config_values(self, tmp_path):
        cfg = write_config(tmp_path)
        config = pipeline.load_config(cfg)
        assert config.topic_counts == (3,)
        assert config.lda.seed == 7
        assert config.distill_3l.epochs == 4
        assert config.repetitions == 1
        assert config.corpus.is_file()


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("pipe")
    cfg_path = write_config(tmp_path)
    config = pipeline.load_config(cfg_path)
    manifest = pipeline.run_pipeline(config)
    return tmp_path, cfg_path, config, manifest


def _hash_tree(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestRunPipeline:
    def test_artifacts_exist(self, completed_run):
        tmp_path, _, config, manifest = completed_run
        out = config.out_dir
        for rel in ("data/vocab.txt", "models/lda_K3.json", "models/dnn_K3_2l.json",
                    "thetas/theta_lda_K3_test.tsv", "thetas/theta_dnn_3l_K3_test.tsv",
                    "report/report.csv", "report/fig1_accuracy.tsv",
                    "report/benchmark_K3.json", "probe/probe_K3_3l.tsv",
                    "probe/edges_K3_3l.tsv", "manifest.json"):
            assert (out / rel).is_file(), rel

    def test_manifest_structure(self, completed_run):
        _, _, config, manifest = completed_run
        assert manifest["version"] == pipeline.MANIFEST_VERSION
        assert manifest["seeds"] == {"lda": 7, "distill_2l": 8, "distill_3l": 9,
                                     "classifier": 10}
        assert manifest["thresholds"] == {"min_doc_len": 50, "min_word_freq": 3}
        names = [s["name"] for s in manifest["stages"]]
        assert names[0] == "prepare"
        assert "train-lda-K3" in names
        assert "distill-K3-3l" in names
        assert "probe-K3-2l" in names
        assert not any(s["skipped"] for s in manifest["stages"])
        assert "report/report.csv" in manifest["timing_outputs"]
        assert "report/benchmark_K3.json" in manifest["timing_outputs"]
        # deterministic outputs never appear among the timing ones
        for stage in manifest["stages"]:
            for rel in stage["outputs"]:
                assert rel not in manifest["timing_outputs"]

    def test_rerun_is_noop_and_preserves_artifacts(self, completed_run):
        _, _, config, _ = completed_run
        out = config.out_dir
        before = _hash_tree(out)
        manifest2 = pipeline.run_pipeline(config)  # no force
        after = _hash_tree(out)
        assert all(s["skipped"] for s in manifest2["stages"])
        # deterministic artifacts byte-identical; only the manifest and the
        # timing-dependent report files may be rewritten
        for rel, digest in before.items():
            if rel == "manifest.json":
                continue
            assert after[rel] == digest, rel

    def test_force_recomputes(self, completed_run):
        _, _, config, _ = completed_run
        manifest = pipeline.run_pipeline(config, force=True)
        assert not any(s["skipped"] for s in manifest["stages"])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    subsample_corpus(tmp / "mini.jsonl")
    return tmp


class TestCliStages:
    def test_stage_chain(self, workdir, capsys):
        corpus_path = str(workdir / "mini.jsonl")
        bundle = str(workdir / "bundle")
        assert cli.main(["prepare", "--input", corpus_path, "--min-doc-len", "50",
                         "--min-word-freq", "3", "--out", bundle, "--quiet"]) == 0
        model = str(workdir / "lda.json")
        assert cli.main(["train-lda", "--data", bundle, "--topics", "3",
                         "--seed", "1", "--em-max-iter", "4", "--out", model,
                         "--quiet"]) == 0
        theta_train = str(workdir / "theta_train.tsv")
        theta_test = str(workdir / "theta_test.tsv")
        assert cli.main(["infer-lda", "--model", model, "--data", bundle,
                         "--split", "train", "--out", theta_train, "--quiet"]) == 0
        assert cli.main(["infer-lda", "--model", model, "--data", bundle,
                         "--split", "test", "--out", theta_test, "--quiet"]) == 0
        dnn = str(workdir / "dnn.json")
        assert cli.main(["distill", "--data", bundle, "--theta", theta_train,
                         "--val-theta", theta_test, "--variant", "3l",
                         "--epochs", "4", "--seed", "2", "--out", dnn,
                         "--quiet"]) == 0
        preds = str(workdir / "preds.tsv")
        assert cli.main(["infer-dnn", "--model", dnn, "--data", bundle,
                         "--split", "test", "--out", preds, "--quiet"]) == 0
        assert cli.main(["benchmark", "--lda", model, "--dnn", dnn, "--data",
                         bundle, "--reps", "1", "--quiet"]) == 0
        out = capsys.readouterr().out
        assert "speed ratio" in out
        assert "10x-200x" in out
        probe_out = str(workdir / "probe.tsv")
        assert cli.main(["probe", "--model", dnn, "--vocab",
                         str(workdir / "bundle" / "vocab.txt"), "--top", "5",
                         "--out", probe_out, "--quiet"]) == 0
        assert (workdir / "probe.tsv").is_file()
        assert (workdir / "edges.tsv").is_file()  # 3l model emits edges

    def test_evaluate_subcommand(self, workdir):
        bundle = str(workdir / "bundle")
        report_dir = workdir / "report"
        assert cli.main(["evaluate", "--data", bundle, "--topics", "3",
                         "--seed", "5", "--reps", "1", "--out",
                         str(report_dir), "--quiet"]) == 0
        assert (report_dir / "report.csv").is_file()
        assert (report_dir / "fig3_speed.tsv").is_file()


class TestCliExitCodes:
    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["no-such-command"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_data_error(self, tmp_path):
        rc = cli.main(["prepare", "--input", str(tmp_path / "missing.jsonl"),
                       "--out", str(tmp_path / "b"), "--quiet"])
        assert rc == cli.EXIT_DATA

    def test_numeric_error(self, tmp_path):
        subsample_corpus(tmp_path / "mini.jsonl")
        bundle = str(tmp_path / "bundle")
        assert cli.main(["prepare", "--input", str(tmp_path / "mini.jsonl"),
                         "--out", bundle, "--quiet"]) == 0
        rc = cli.main(["train-lda", "--data", bundle, "--topics", "3",
                       "--smoothing", "-1.0", "--em-max-iter", "2",
                       "--out", str(tmp_path / "m.json"), "--quiet"])
        assert rc == cli.EXIT_NUMERIC

    def test_validate_config_exit_codes(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert cli.main(["validate-config", str(cfg), "--quiet"]) == 0
        bad = write_config(tmp_path, topic_counts=[0])
        assert cli.main(["validate-config", str(bad), "--quiet"]) == cli.EXIT_DATA
        assert "topic_counts" in capsys.readouterr().out

    def test_run_subcommand(self, tmp_path):
        cfg = write_config(tmp_path, out_name="cli_out")
        assert cli.main(["run", "--config", str(cfg), "--quiet"]) == 0
        assert (tmp_path / "cli_out" / "manifest.json").is_file()

    def test_run_failure_names_stage(self, tmp_path, caplog):
        (tmp_path / "mini.jsonl").write_text("not json\n", encoding="utf-8")
        cfg = write_config(tmp_path, out_name="broken_out")
        rc = cli.main(["run", "--config", str(cfg), "--quiet"])
        assert rc == cli.EXIT_DATA
        assert any("stage prepare failed" in r.getMessage()
                   for r in caplog.records if r.levelname == "ERROR")
