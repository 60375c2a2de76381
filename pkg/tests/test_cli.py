import json
import os

import numpy as np
import pytest

from daliid.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from daliid.pnm import load_pnm, save_pnm

TINY = {
    "seed": 3,
    "dataset": {"num_ids": 4, "train_per_id": 4, "eval_per_id": 3,
                "size": 16},
    "train": {"epochs": 1, "P": 2, "K": 2, "embed_dim": 8,
              "hidden": [16], "batches_per_epoch": 2},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY))
    return str(path)


@pytest.fixture
def tiny_dataset(tmp_path, tiny_config):
    out = str(tmp_path / "data")
    assert main(["gen-data", "--config", tiny_config, "--out", out]) == EXIT_OK
    return out


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "d")]) == EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["gen-data", "--config", str(bad),
                     "--out", str(tmp_path / "d")]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"tyop": 1}))
        assert main(["gen-data", "--config", str(bad),
                     "--out", str(tmp_path / "d")]) == EXIT_CONFIG

    def test_distort_bad_level(self, tmp_path):
        assert main(["distort", "--in", str(tmp_path), "--out",
                     str(tmp_path / "o"), "--level", "9"]) == EXIT_CONFIG

    def test_distort_missing_dir(self, tmp_path):
        assert main(["distort", "--in", str(tmp_path / "missing"), "--out",
                     str(tmp_path / "o"), "--level", "1"]) == EXIT_IO

    def test_train_missing_dataset(self, tmp_path, tiny_config):
        assert main(["train", "--config", tiny_config, "--mode", "clean",
                     "--dataset", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "ck")]) == EXIT_IO

    def test_eval_fuse_without_second_checkpoint(self, tmp_path, tiny_config,
                                                 tiny_dataset):
        ck = str(tmp_path / "ck.dck")
        assert main(["train", "--config", tiny_config, "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck]) == EXIT_OK
        assert main(["eval", "--config", tiny_config, "--checkpoint", ck,
                     "--dataset", tiny_dataset, "--protocol", "cmc",
                     "--fuse"]) == EXIT_CONFIG


class TestGenData:
    def test_writes_manifest_and_config(self, tmp_path, tiny_config):
        out = tmp_path / "d"
        assert main(["gen-data", "--config", tiny_config,
                     "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["samples"]) == 4 * (4 + 3)
        assert (out / "run_config.json").exists()

    def test_deterministic(self, tmp_path, tiny_config):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-data", "--config", tiny_config,
                         "--out", str(out)]) == EXIT_OK
        ma = (a / "manifest.json").read_bytes()
        assert ma == (b / "manifest.json").read_bytes()
        for entry in json.loads(ma)["samples"]:
            assert (a / entry["path"]).read_bytes() == \
                (b / entry["path"]).read_bytes()


class TestDistortCommand:
    def test_tree_mirrored(self, tmp_path):
        src = tmp_path / "src" / "sub"
        src.mkdir(parents=True)
        gen = np.random.default_rng(0)
        save_pnm(src / "a.pgm", gen.random((16, 16)))
        out = tmp_path / "out"
        assert main(["distort", "--in", str(tmp_path / "src"), "--out",
                     str(out), "--level", "3", "--seed", "1"]) == EXIT_OK
        img = load_pnm(out / "sub" / "a.pgm")
        assert img.shape == (16, 16)

    def test_level_zero_is_identity_after_quantization(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        gen = np.random.default_rng(1)
        save_pnm(src / "a.pgm", gen.random((8, 8)))
        out = tmp_path / "out"
        assert main(["distort", "--in", str(src), "--out", str(out),
                     "--level", "0", "--seed", "1"]) == EXIT_OK
        assert (src / "a.pgm").read_bytes() == (out / "a.pgm").read_bytes()


class TestTrainEval:
    def test_end_to_end_with_reports(self, tmp_path, tiny_config,
                                     tiny_dataset):
        ck = str(tmp_path / "ck.dck")
        assert main(["train", "--config", tiny_config, "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck]) == EXIT_OK
        assert os.path.exists(ck)
        assert os.path.exists(ck + ".json")
        assert os.path.exists(str(tmp_path / "ck_log.csv"))
        assert os.path.exists(str(tmp_path / "ck_log.png"))
        out = str(tmp_path / "metrics.csv")
        assert main(["eval", "--config", tiny_config, "--checkpoint", ck,
                     "--dataset", tiny_dataset, "--protocol", "cmc",
                     "--out", out]) == EXIT_OK
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "metric,value"
        assert lines[1].startswith("rank1,")
        assert os.path.exists(str(tmp_path / "metrics.png"))

    def test_train_deterministic(self, tmp_path, tiny_config, tiny_dataset):
        cks = []
        for name in ("a.dck", "b.dck"):
            ck = str(tmp_path / name)
            assert main(["train", "--config", tiny_config, "--mode",
                         "adaptive", "--dataset", tiny_dataset,
                         "--out", ck]) == EXIT_OK
            cks.append(open(ck, "rb").read())
        assert cks[0] == cks[1]

    def test_resume_continues(self, tmp_path, tiny_dataset):
        cfg1 = dict(TINY)
        cfg1["train"] = dict(TINY["train"], epochs=1)
        cfg2 = dict(TINY)
        cfg2["train"] = dict(TINY["train"], epochs=2)
        p1 = tmp_path / "one.json"
        p1.write_text(json.dumps(cfg1))
        p2 = tmp_path / "two.json"
        p2.write_text(json.dumps(cfg2))
        ck1 = str(tmp_path / "ck1.dck")
        ck2 = str(tmp_path / "ck2.dck")
        assert main(["train", "--config", str(p1), "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck1]) == EXIT_OK
        assert main(["train", "--config", str(p2), "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck2,
                     "--resume", ck1]) == EXIT_OK
        meta1 = json.loads(open(ck1 + ".json").read())
        meta2 = json.loads(open(ck2 + ".json").read())
        assert meta2["epoch"] == 2 and meta1["epoch"] == 1
        assert meta2["step"] > meta1["step"]

    def test_fused_eval_runs(self, tmp_path, tiny_config, tiny_dataset):
        ck_c = str(tmp_path / "c.dck")
        ck_a = str(tmp_path / "a.dck")
        assert main(["train", "--config", tiny_config, "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck_c]) == EXIT_OK
        assert main(["train", "--config", tiny_config, "--mode", "adaptive",
                     "--dataset", tiny_dataset, "--out", ck_a]) == EXIT_OK
        out = str(tmp_path / "fused.csv")
        assert main(["eval", "--config", tiny_config, "--checkpoint", ck_c,
                     "--checkpoint-b", ck_a, "--fuse", "--dataset",
                     tiny_dataset, "--protocol", "cmc", "--query-level", "2",
                     "--out", out]) == EXIT_OK
        assert os.path.exists(out)

    def test_fuse_with_identical_checkpoints_matches_single(
            self, tmp_path, tiny_config, tiny_dataset):
        """Fusing a backbone with itself is a convex combination of equal
        distances, so the metrics must match the single-backbone run."""
        ck = str(tmp_path / "ck.dck")
        assert main(["train", "--config", tiny_config, "--mode", "clean",
                     "--dataset", tiny_dataset, "--out", ck]) == EXIT_OK
        single = str(tmp_path / "single.csv")
        fused = str(tmp_path / "fused.csv")
        assert main(["eval", "--config", tiny_config, "--checkpoint", ck,
                     "--dataset", tiny_dataset, "--protocol", "cmc",
                     "--out", single]) == EXIT_OK
        assert main(["eval", "--config", tiny_config, "--checkpoint", ck,
                     "--checkpoint-b", ck, "--fuse", "--dataset",
                     tiny_dataset, "--protocol", "cmc",
                     "--out", fused]) == EXIT_OK
        assert open(single).read() == open(fused).read()


class TestSchedulePlot:
    def test_writes_csv_and_figure(self, tmp_path, tiny_config):
        out = str(tmp_path / "sched.csv")
        assert main(["schedule-plot", "--config", tiny_config,
                     "--out", out]) == EXIT_OK
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "step,level,weight"
        assert len(lines) > 10
        assert os.path.exists(str(tmp_path / "sched.png"))


def test_threads_flag_does_not_change_results(tmp_path, tiny_config):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["--threads", "1", "gen-data", "--config", tiny_config,
                 "--out", a]) == EXIT_OK
    assert main(["--threads", "4", "gen-data", "--config", tiny_config,
                 "--out", b]) == EXIT_OK
    assert (tmp_path / "a" / "manifest.json").read_bytes() == \
        (tmp_path / "b" / "manifest.json").read_bytes()
