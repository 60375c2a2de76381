import struct

import numpy as np
import pytest

from daliid.data import generate_dataset
from daliid.io_formats import (CHECKPOINT_MAGIC, FORMAT_VERSION, STORE_MAGIC,
                               FormatError, StoreRecord, load_checkpoint,
                               read_store, read_tensors, save_checkpoint,
                               write_store, write_tensors)
from daliid.model import TrainConfig, train_clean
from daliid.numerics import SeedStream
from daliid.pnm import PnmParseError, load_pnm, save_pnm


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        gen = SeedStream(60).generator()
        tensors = {
            "w0": gen.standard_normal((3, 4)),
            "bias": gen.standard_normal(7),
            "scalarish": np.array([1.5]),
            "cube": gen.standard_normal((2, 2, 2)),
        }
        path = tmp_path / "t.bin"
        write_tensors(path, tensors)
        back = read_tensors(path)
        assert set(back) == set(tensors)
        for k in tensors:
            assert back[k].dtype == np.float64
            assert np.array_equal(back[k], tensors[k])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\0" * 8)
        with pytest.raises(FormatError):
            read_tensors(path)

    def test_future_version_rejected(self, tmp_path):
        path = tmp_path / "v.bin"
        path.write_bytes(CHECKPOINT_MAGIC
                         + struct.pack("<II", FORMAT_VERSION + 1, 0))
        with pytest.raises(FormatError, match="newer"):
            read_tensors(path)

    def test_deterministic_bytes(self, tmp_path):
        tensors = {"a": np.arange(6.0).reshape(2, 3)}
        write_tensors(tmp_path / "x", tensors)
        write_tensors(tmp_path / "y", tensors)
        assert (tmp_path / "x").read_bytes() == (tmp_path / "y").read_bytes()


class TestFeatureStore:
    def records(self, n=4, dim=8):
        gen = SeedStream(61).generator()
        out = []
        for i in range(n):
            d = gen.standard_normal(dim).astype(np.float32)
            d /= np.linalg.norm(d)
            out.append(StoreRecord(i, int(gen.integers(0, 3)),
                                   "cl" if i % 2 == 0 else "da",
                                   d, float(gen.uniform(0.5, 3.0))))
        return out

    def test_round_trip(self, tmp_path):
        recs = self.records()
        path = tmp_path / "s.bin"
        write_store(path, recs, dim=8)
        back = read_store(path)
        assert len(back) == len(recs)
        for a, b in zip(recs, back):
            assert (a.sample_id, a.label, a.backbone) == \
                (b.sample_id, b.label, b.backbone)
            assert np.array_equal(np.asarray(a.direction, dtype=np.float32),
                                  b.direction)
            assert np.float32(a.magnitude) == np.float32(b.magnitude)

    def test_dim_mismatch(self, tmp_path):
        with pytest.raises(FormatError):
            write_store(tmp_path / "s.bin", self.records(dim=8), dim=9)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + b"\0" * 12)
        with pytest.raises(FormatError):
            read_store(path)

    def test_future_version_rejected(self, tmp_path):
        path = tmp_path / "v.bin"
        path.write_bytes(STORE_MAGIC
                         + struct.pack("<III", FORMAT_VERSION + 1, 0, 4))
        with pytest.raises(FormatError, match="newer"):
            read_store(path)


class TestCheckpointFile:
    def test_round_trip_preserves_training_state(self, tmp_path):
        ds = generate_dataset(4, 4, 2, 16, SeedStream(62))
        cfg = TrainConfig(mode="face", epochs=1, P=2, K=2, embed_dim=8,
                          hidden=(16,), image_size=16, seed=0,
                          batches_per_epoch=2)
        ck = train_clean(cfg, ds)
        path = tmp_path / "ck.bin"
        save_checkpoint(path, ck, config_hash="abcd")
        back = load_checkpoint(path, cfg)
        assert back.step == ck.step and back.epoch == ck.epoch
        for a, b in zip(ck.student.arrays(), back.student.arrays()):
            assert np.array_equal(a, b)
        for a, b in zip(ck.teacher.arrays(), back.teacher.arrays()):
            assert np.array_equal(a, b)
        assert np.array_equal(ck.centers.matrix, back.centers.matrix)
        assert back.opt is not None
        assert back.opt.kind == "sgd"
        assert back.opt.step_count == ck.opt.step_count
        for a, b in zip(ck.opt.buffers, back.opt.buffers):
            assert np.array_equal(a, b)

    def test_sidecar_metadata(self, tmp_path):
        ds = generate_dataset(4, 4, 2, 16, SeedStream(63))
        cfg = TrainConfig(mode="face", epochs=1, P=2, K=2, embed_dim=8,
                          hidden=(16,), image_size=16, batches_per_epoch=1)
        ck = train_clean(cfg, ds)
        path = tmp_path / "ck.bin"
        save_checkpoint(path, ck, config_hash="ff00")
        sidecar = (tmp_path / "ck.bin.json").read_text()
        assert '"config_hash": "ff00"' in sidecar


class TestPnm:
    def test_gray_round_trip(self, tmp_path):
        gen = SeedStream(64).generator()
        img = gen.random((5, 7))
        save_pnm(tmp_path / "g.pgm", img)
        back = load_pnm(tmp_path / "g.pgm")
        assert back.shape == (5, 7)
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_color_round_trip(self, tmp_path):
        gen = SeedStream(65).generator()
        img = gen.random((4, 6, 3))
        save_pnm(tmp_path / "c.ppm", img)
        back = load_pnm(tmp_path / "c.ppm")
        assert back.shape == (4, 6, 3)
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_round_half_up(self, tmp_path):
        # 0.5/255 quantizes up to byte 1, not down to 0
        img = np.array([[0.5 / 255.0]])
        save_pnm(tmp_path / "h.pgm", img)
        raw = (tmp_path / "h.pgm").read_bytes()
        assert raw[-1] == 1

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
        img = load_pnm(path)
        assert img.shape == (1, 2)
        assert img[0, 0] == 0.0 and img[0, 1] == 1.0

    def test_bad_magic_offset(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P7\n1 1\n255\n\x00")
        with pytest.raises(PnmParseError) as err:
            load_pnm(path)
        assert err.value.offset == 0

    def test_bad_header_token_offset(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\nxx 1\n255\n\x00")
        with pytest.raises(PnmParseError) as err:
            load_pnm(path)
        assert err.value.offset == 3

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(PnmParseError, match="truncated"):
            load_pnm(path)

    def test_unsupported_maxval(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(PnmParseError, match="maxval"):
            load_pnm(path)

    def test_bad_shape_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_pnm(tmp_path / "x.pgm", np.zeros((2, 2, 4)))
