import math

import numpy as np
import pytest

from micrestore.autodiff import RngStream
from micrestore.errors import DimensionError
from micrestore.io.manifest import DatasetManifest, ImageEntry
from micrestore.io.pgm import read_pgm, write_pgm
from micrestore.metrics import evaluate_corpus, psnr, score_pair, ssim
from micrestore.tasks import TaskId


def naive_ssim(a, b, max_val=1.0):
    """Direct per-window evaluation of the SSIM formula."""
    r = np.arange(11) - 5.0
    g1 = np.exp(-r**2 / (2 * 1.5**2))
    w = np.outer(g1, g1)
    w /= w.sum()
    c1, c2 = (0.01 * max_val) ** 2, (0.03 * max_val) ** 2
    vals = []
    for i in range(a.shape[0] - 10):
        for j in range(a.shape[1] - 10):
            pa, pb = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va, vb = np.sum(w * (pa - ma) ** 2), np.sum(w * (pb - mb) ** 2)
            cov = np.sum(w * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_is_inf(self):
        a = RngStream(0).uniform(0, 1, (8, 8))
        assert psnr(a, a) == math.inf

    def test_mse_one_at_255(self):
        a = np.round(RngStream(1).uniform(0, 254, (16, 16)))
        assert abs(psnr(a, a + 1, max_val=255) - 48.1308) < 1e-4

    def test_twenty_db(self):
        a = np.zeros((10, 10))
        assert psnr(a, a + 0.1, 1.0) == pytest.approx(20.0, abs=1e-12)

    def test_affine_invariance(self):
        rng = RngStream(2)
        a, b = rng.child("a").uniform(0, 1, (12, 12)), rng.child("b").uniform(0, 1, (12, 12))
        for k in (0.5, 3.0, 255.0):
            assert psnr(k * a, k * b, k) == pytest.approx(psnr(a, b, 1.0), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSsim:
    def test_identical_exactly_one(self):
        rng = RngStream(3)
        for i in range(5):
            a = rng.child(i).uniform(0, 1, (32, 40))
            assert ssim(a, a) == 1.0

    def test_constant_images_closed_form(self):
        v = ssim(np.full((16, 16), 0.5), np.full((16, 16), 0.25))
        assert v == pytest.approx((2 * 0.125 + 1e-4) / (0.3125 + 1e-4), abs=1e-12)
        assert round(v, 5) == 0.80006  # 0.2501 / 0.3126

    def test_matches_naive_oracle(self):
        rng = RngStream(4)
        for i in range(20):
            a = rng.child(i, "a").uniform(0, 1, (64, 64))
            b = np.clip(a + rng.child(i, "b").normal((64, 64), 0.2), 0, 1) if i % 2 else rng.child(i, "c").uniform(0, 1, (64, 64))
            assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-9

    def test_symmetric(self):
        rng = RngStream(5)
        a, b = rng.child("a").uniform(0, 1, (20, 20)), rng.child("b").uniform(0, 1, (20, 20))
        assert ssim(a, b) == ssim(b, a)

    def test_continuity_ladder(self):
        rng = RngStream(6)
        a = rng.child("a").uniform(0, 1, (24, 24))
        noise = rng.child("n").normal((24, 24))
        vals = [ssim(a, a + e * noise) for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
        assert all(x < y for x, y in zip(vals, vals[1:]))
        assert 1 - vals[-1] < 1e-9

    def test_in_range(self):
        rng = RngStream(7)
        a, b = rng.child("a").uniform(0, 1, (16, 16)), rng.child("b").uniform(0, 1, (16, 16))
        assert -1 <= ssim(a, 1 - a) <= 1 and -1 <= ssim(a, b) <= 1

    def test_too_small(self):
        with pytest.raises(DimensionError):
            ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def _corpus(tmp_path, n=3):
    rng = RngStream(8)
    m = DatasetManifest()
    for i in range(n):
        gt = rng.child(i, "gt").uniform(-1, 1, (16, 16))
        bad = np.clip(gt + rng.child(i, "n").normal((16, 16), 0.1 * (i + 1)), -1, 1)
        for kind, img in (("gt", gt), ("def", bad)):
            write_pgm(img, tmp_path / f"{kind}{i}.pgm")
        m.add_gt(ImageEntry(f"gt{i}", (tmp_path / f"gt{i}.pgm").resolve(), TaskId.DENOISE))
        m.add_defected(ImageEntry(f"def{i}", (tmp_path / f"def{i}.pgm").resolve(), TaskId.DENOISE))
        m.add_pair(f"gt{i}", f"def{i}")
    return m


class TestEvaluateCorpus:
    def test_restored_equal_gt(self, tmp_path):
        m = _corpus(tmp_path)
        out = tmp_path / "restored"
        out.mkdir()
        for p in m.pairs:
            (out / f"{p.defected}.pgm").write_bytes(m.gt[p.gt].path.read_bytes())
        report = evaluate_corpus(m, out)
        assert all(r.psnr_after == math.inf and r.ssim_after == 1.0 for r in report.rows)

    def test_restored_equal_defected(self, tmp_path):
        m = _corpus(tmp_path)
        out = tmp_path / "restored"
        out.mkdir()
        for p in m.pairs:
            (out / f"{p.defected}.pgm").write_bytes(m.defected[p.defected].path.read_bytes())
        for r in evaluate_corpus(m, out).rows:
            assert (r.psnr_after, r.ssim_after) == (r.psnr_before, r.ssim_before)

    def test_aggregates_hand_computed(self, tmp_path):
        m = _corpus(tmp_path)
        report = evaluate_corpus(m)
        by_hand = []
        for p in m.pairs:
            g = (read_pgm(m.gt[p.gt].path).data + 1) / 2
            d = (read_pgm(m.defected[p.defected].path).data + 1) / 2
            by_hand.append(10 * math.log10(1.0 / np.mean((g - d) ** 2)))
        assert report.aggregates["psnr_before"]["mean"] == pytest.approx(sum(by_hand) / 3, abs=1e-12)
        assert report.aggregates["psnr_before"]["median"] == pytest.approx(sorted(by_hand)[1], abs=1e-12)
        assert report.aggregates["psnr_after"]["mean"] is None

    def test_missing_restored_file_names_id(self, tmp_path):
        m = _corpus(tmp_path)
        (tmp_path / "restored").mkdir()
        with pytest.raises(FileNotFoundError, match="def0"):
            evaluate_corpus(m, tmp_path / "restored")

    def test_score_pair_uses_unit_range(self):
        gt = np.zeros((16, 16))
        assert score_pair(gt, gt + 0.2)[0] == pytest.approx(20.0, abs=1e-9)  # 0.2 canonical = 0.1 on [0, 1]
