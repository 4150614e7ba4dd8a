import json
from pathlib import Path

import numpy as np
import pytest

from micrestore.autodiff import RngStream, Tensor
from micrestore.errors import FormatError, ValidationError
from micrestore.io.checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from micrestore.io.config import default_config, load_config, parse_config
from micrestore.io.manifest import DatasetManifest, ImageEntry
from micrestore.io.pgm import parse_pgm, read_pgm, write_pgm
from micrestore.io.report import emit_csv
from micrestore.metrics import MetricReport, MetricRow
from micrestore.nn import NetConfig, init_generator, restoration_generator_forward
from micrestore.tasks import TaskId

FIXTURES = Path(__file__).parent / "fixtures"


class TestPgm:
    def test_fixture_bytes(self, tmp_path):
        path = tmp_path / "f.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        img = read_pgm(path)
        assert img.maxval == 255
        np.testing.assert_allclose(img.data, np.array([[0, 128], [255, 64]]) / 127.5 - 1, atol=1e-15)

    def test_comments_in_header(self):
        samples, maxval = parse_pgm(b"P5 # c\n2 # w\n1\n255\n" + bytes([7, 9]))
        assert samples.tolist() == [[7, 9]] and maxval == 255

    def test_sixteen_bit_is_big_endian(self):
        samples, _ = parse_pgm(b"P5\n1 1\n65535\n" + bytes([0x01, 0x02]))
        assert samples[0, 0] == 0x0102

    def test_ascii_variant_rejected(self):
        with pytest.raises(FormatError, match="P5"):
            parse_pgm(b"P2\n2 2\n255\n0 1 2 3\n")

    def test_truncated_raster_reports_offset(self):
        with pytest.raises(FormatError, match="offset 11") as info:
            parse_pgm(b"P5\n2 2\n255\n" + bytes(3))
        assert info.value.offset == 11

    def test_bad_maxval(self):
        with pytest.raises(FormatError, match="maxval") as info:
            parse_pgm(b"P5\n2 2\n1023\n" + bytes(8))
        assert info.value.offset == 7

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            parse_pgm(b"P5\n2 ")

    def test_read_names_path(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(FormatError, match="bad.pgm"):
            read_pgm(path)

    @pytest.mark.parametrize("bits,maxval", [(8, 255), (16, 65535)])
    def test_round_trip_within_quantization(self, bits, maxval, tmp_path):
        img = RngStream(0).uniform(-1, 1, (7, 5))
        write_pgm(img, tmp_path / "r.pgm", bit_depth=bits)
        back = read_pgm(tmp_path / "r.pgm")
        assert back.maxval == maxval
        assert np.abs(back.data - img).max() <= 1.0 / maxval + 1e-12
        write_pgm(back, tmp_path / "r2.pgm", bit_depth=bits)
        assert (tmp_path / "r.pgm").read_bytes() == (tmp_path / "r2.pgm").read_bytes()


def _ckpt(seed=0):
    net = NetConfig(base_channels=4, depth=2)
    G = init_generator(net, RngStream(seed), "restoration_generator").astype(np.float32)
    D = init_generator(net, RngStream(seed + 1), "defect_generator").astype(np.float32)
    return Checkpoint(net, {"generator": G, "defect": D}, {"stage": "restore_cgan", "step": 3})


class TestCheckpoint:
    def test_byte_identity_through_round_trip(self, tmp_path):
        blob = encode_checkpoint(_ckpt())
        assert blob[:4] == b"MRST"
        assert encode_checkpoint(decode_checkpoint(blob)) == blob
        save_checkpoint(decode_checkpoint(blob), tmp_path / "a.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == blob

    def test_inference_identical_after_reload(self, tmp_path):
        ck = _ckpt(1)
        save_checkpoint(ck, tmp_path / "g.ckpt")
        back = load_checkpoint(tmp_path / "g.ckpt")
        x = Tensor(RngStream(2).uniform(-1, 1, (1, 1, 8, 8)), dtype=np.float32)
        a = restoration_generator_forward(x, ck.store("generator")).data
        b = restoration_generator_forward(x, back.store("generator")).data
        np.testing.assert_array_equal(a, b)
        assert back.meta == {"stage": "restore_cgan", "step": 3}
        assert back.net_config == ck.net_config

    def test_partitions_survive(self):
        back = decode_checkpoint(encode_checkpoint(_ckpt()))
        G = back.store("defect")
        assert G.row_labels("enc0.norm.gamma") == ["task(0)", "task(1)", "task(2)"]

    @pytest.mark.parametrize("mutate,match", [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "version"),
        (lambda b: b[:-1], "truncated"),
        (lambda b: b + b"\0", "trailing"),
        (lambda b: b[:10], "too short"),
    ])
    def test_corruption_detected(self, mutate, match):
        with pytest.raises(FormatError, match=match):
            decode_checkpoint(mutate(encode_checkpoint(_ckpt())))


class TestConfig:
    def test_defaults(self):
        cfg = default_config()
        assert cfg.net.base_channels == 16 and cfg.net.depth == 3
        assert cfg.stage1.loss.lam == 10.0 and cfg.stage1.optimizer.lr == 2e-4
        assert cfg.stage1.optimizer.beta1 == 0.5

    def test_unknown_key_named(self):
        with pytest.raises(ValidationError, match="stage1.optimiser"):
            parse_config({"version": 1, "stage1": {"optimiser": {}}})

    def test_negative_lambda_names_field(self):
        with pytest.raises(ValidationError, match=r"stage2\.loss\.lambda"):
            parse_config({"version": 1, "stage2": {"loss": {"lambda": -1}}})

    def test_all_problems_reported(self):
        with pytest.raises(ValidationError) as info:
            parse_config({"version": 1, "seed": -3, "stage1": {"epochs": 0}})
        assert "seed" in str(info.value) and "stage1.epochs" in str(info.value)

    def test_missing_version(self):
        with pytest.raises(ValidationError, match="version"):
            parse_config({})

    def test_load_from_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"version": 1, "seed": 11, "net": {"base_channels": 8}}))
        cfg = load_config(tmp_path / "c.json")
        assert cfg.seed == 11 and cfg.net.base_channels == 8 and cfg.stage1.seed == 11

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ValidationError, match="JSON"):
            load_config(tmp_path / "c.json")


class TestReport:
    def test_golden_csv(self, tmp_path):
        report = MetricReport([
            MetricRow("a", "denoise", 20.0, 0.5, float("inf"), 1.0),
            MetricRow("b", "axial_inpaint", 12.3456789, 0.25, 13.0, 0.3),
        ])
        emit_csv(report, tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_bytes() == (FIXTURES / "golden_report.csv").read_bytes()


class TestManifest:
    def _manifest(self, root):
        m = DatasetManifest()
        for i in (2, 0, 1):
            for kind in ("gt", "def"):
                write_pgm(np.zeros((4, 4)), root / f"{kind}{i}.pgm")
            m.add_gt(ImageEntry(f"gt{i}", (root / f"gt{i}.pgm").resolve(), TaskId.DENOISE, seed=i))
            m.add_defected(ImageEntry(f"def{i}", (root / f"def{i}.pgm").resolve(), TaskId.DENOISE))
            if i:
                m.add_pair(f"gt{i}", f"def{i}")
        return m

    def test_save_load_save_stable(self, tmp_path):
        m = self._manifest(tmp_path)
        first = m.save(tmp_path / "m.json").read_bytes()
        again = DatasetManifest.load_file(tmp_path / "m.json").save(tmp_path / "m2.json").read_bytes()
        assert first == again

    def test_missing_file_named(self, tmp_path):
        m = self._manifest(tmp_path)
        m.save(tmp_path / "m.json")
        (tmp_path / "gt1.pgm").unlink()
        with pytest.raises(Exception, match="gt1"):
            DatasetManifest.load_file(tmp_path / "m.json")
