import csv
import json

import pytest

from tsgp.cli import main
from tsgp.corpus import read_pairs_jsonl


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def corpus_file(workdir):
    path = workdir / "corpus.jsonl"
    rc = main(["--seed", "1", "gen-corpus", "--problems", "1", "--pop", "20",
               "--gens", "2", "--out", str(path)])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def pairs_file(workdir, corpus_file):
    path = workdir / "pairs.jsonl"
    rc = main(["--seed", "1", "mine-pairs", "--corpus", str(corpus_file),
               "--k", "2", "--out", str(path)])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def model_file(workdir, pairs_file):
    path = workdir / "model.tsgp"
    rc = main(["--seed", "1", "train", "--pairs", str(pairs_file),
               "--epochs", "1", "--d-model", "16", "--n-heads", "2",
               "--layers", "1", "--out", str(path),
               "--curve", str(workdir / "curve.csv")])
    assert rc == 0
    return path


class TestPipeline:
    def test_corpus_and_manifest(self, corpus_file):
        assert corpus_file.exists()
        manifest = json.loads(
            (corpus_file.parent / "corpus.jsonl.manifest.json").read_text())
        assert manifest["subcommand"] == "gen-corpus"
        assert manifest["seed"] == 1
        assert manifest["config"]["problems"] == 1

    def test_pairs_invariants(self, pairs_file):
        pairs = read_pairs_jsonl(pairs_file)
        assert pairs
        assert all(0.0 < p.sd < 100.0 for p in pairs)
        manifest = json.loads(
            (pairs_file.parent / "pairs.jsonl.manifest.json").read_text())
        assert str(pairs_file.parent / "corpus.jsonl") in manifest["inputs"]

    def test_train_outputs(self, model_file, workdir):
        assert model_file.read_bytes()[:8] == b"TSGPMDL1"
        with open(workdir / "curve.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and "loss" in rows[0]

    def test_search_stdgp(self, workdir):
        out = workdir / "run_stdgp"
        rc = main(["--seed", "2", "search", "--method", "stdgp", "--synthetic",
                   "--pop", "10", "--gens", "2", "--out", str(out)])
        assert rc == 0
        with open(out / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3  # generations 0..2
        assert (out / "variations.csv").exists()
        assert (out / "manifest.json").exists()

    def test_search_tsgp_with_model(self, workdir, model_file):
        out = workdir / "run_tsgp"
        rc = main(["--seed", "2", "search", "--method", "tsgp", "--model",
                   str(model_file), "--synthetic", "--pop", "8", "--gens", "2",
                   "--out", str(out)])
        assert rc == 0
        assert (out / "trace.csv").exists()

    def test_verify_model(self, model_file):
        assert main(["verify-model", "--model", str(model_file)]) == 0


class TestExitCodes:
    def test_usage_error_bad_problems(self, workdir):
        assert main(["gen-corpus", "--problems", "0",
                     "--out", str(workdir / "x.jsonl")]) == 1

    def test_usage_error_missing_file(self):
        assert main(["mine-pairs", "--corpus", "no_such_file.jsonl"]) == 1

    def test_usage_error_search_needs_data(self):
        assert main(["search", "--method", "stdgp"]) == 1

    def test_usage_error_tsgp_needs_model(self):
        assert main(["search", "--method", "tsgp", "--synthetic"]) == 1

    def test_data_error_corrupt_pairs(self, workdir):
        bad = workdir / "bad.jsonl"
        bad.write_text("{not json\n")
        assert main(["train", "--pairs", str(bad)]) == 2

    def test_data_error_bad_checkpoint(self, workdir):
        bad = workdir / "bad.tsgp"
        bad.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        assert main(["verify-model", "--model", str(bad)]) == 2


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, workdir, corpus_file):
        cfg = workdir / "cfg.json"
        cfg.write_text(json.dumps({"k": 1, "sd_max": 50.0}))
        out = workdir / "p_cfg.jsonl"
        rc = main(["--config", str(cfg), "mine-pairs", "--corpus",
                   str(corpus_file), "--sd-max", "75.0", "--out", str(out)])
        assert rc == 0
        manifest = json.loads(
            (workdir / "p_cfg.jsonl.manifest.json").read_text())
        assert manifest["config"]["k"] == 1        # from config file
        assert manifest["config"]["sd_max"] == 75.0  # flag wins
