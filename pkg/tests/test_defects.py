import numpy as np
import pytest

from micrestore.autodiff import RngStream
from micrestore.defects import (
    DEFAULT_PHANTOM,
    PHANTOM_KINDS,
    DefectSpec,
    PhantomSpec,
    apply_defect,
    default_defect,
    gaussian_kernel1d,
    make_phantom,
    synth_corpus,
)
from micrestore.errors import ArgumentError
from micrestore.io.pgm import read_pgm
from micrestore.metrics import psnr
from micrestore.tasks import TaskId

D, A, S = TaskId.DENOISE, TaskId.AXIAL_INPAINT, TaskId.SUPER_RESOLVE


@pytest.fixture(scope="module")
def phantom():
    return make_phantom(PhantomSpec("nuclei_blobs", 64, 1.0, seed=3))


class TestApplyDefect:
    @pytest.mark.parametrize("spec", [DefectSpec(D, gaussian_sigma=0.0), DefectSpec(A, drop_every=1),
                                      DefectSpec(S, psf_sigma=0.0, factor=1)])
    def test_neutral_is_bit_identical(self, spec, phantom):
        out = apply_defect(phantom, spec, RngStream(0))
        np.testing.assert_array_equal(out, phantom)
        assert out is not phantom

    def test_alternating_rows_zero_fill(self):
        out = apply_defect(np.ones((6, 5)), DefectSpec(A, drop_every=2, fill="zero"))
        np.testing.assert_array_equal(out[0::2], 1.0)
        np.testing.assert_array_equal(out[1::2], 0.0)

    def test_linear_fill_interpolates(self):
        img = np.arange(9, dtype=np.float64)[:, None] * np.ones((1, 3)) / 10
        out = apply_defect(img, DefectSpec(A, drop_every=4, fill="linear_interp"))
        np.testing.assert_allclose(out[:9], img[:9], atol=1e-15)  # linear ramp is reproduced exactly

    def test_noise_statistics_seed_42(self):
        out = apply_defect(np.zeros((64, 64)), DefectSpec(D, gaussian_sigma=0.1), RngStream(42), clamp=False)
        assert abs(out.mean()) < 0.01
        assert 0.09 <= out.std() <= 0.11

    def test_clamped_to_canonical_range(self, phantom):
        out = apply_defect(phantom, DefectSpec(D, gaussian_sigma=0.8, poisson_peak=5.0), RngStream(1))
        assert out.min() >= -1 and out.max() <= 1

    @pytest.mark.parametrize("task", [D, A, S])
    def test_shape_preserved(self, task, phantom):
        assert apply_defect(phantom[:, :61], default_defect(task), RngStream(2)).shape == (64, 61)

    def test_kernel_radius(self):
        assert gaussian_kernel1d(1.5).size == 2 * 5 + 1
        assert gaussian_kernel1d(1.0).size == 7
        assert gaussian_kernel1d(1.5).sum() == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("kwargs", [dict(task=D, gaussian_sigma=-0.1), dict(task=D, poisson_peak=0.0),
                                        dict(task=A, drop_every=0), dict(task=A, fill="cubic"),
                                        dict(task=S, factor=0), dict(task=S, psf_sigma=0.0, factor=2)])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ArgumentError):
            DefectSpec(**kwargs)


class TestSeverityLadders:
    def _psnr(self, gt, spec):
        return psnr((gt + 1) / 2, (apply_defect(gt, spec, RngStream(5)) + 1) / 2)

    def test_denoise(self, phantom):
        vals = [self._psnr(phantom, DefectSpec(D, gaussian_sigma=s)) for s in (0.02, 0.05, 0.1, 0.2, 0.4)]
        assert all(np.isfinite(vals)) and all(a > b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kind", PHANTOM_KINDS)
    def test_axial(self, kind):
        gt = make_phantom(PhantomSpec(kind, 64, 1.0, seed=4))
        vals = [self._psnr(gt, DefectSpec(A, drop_every=k)) for k in (2, 3, 4, 6, 8)]
        assert all(np.isfinite(vals)) and all(a > b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kind", PHANTOM_KINDS)
    def test_super_resolve(self, kind):
        gt = make_phantom(PhantomSpec(kind, 64, 1.0, seed=4))
        vals = [self._psnr(gt, DefectSpec(S, psf_sigma=1.0, factor=f)) for f in (2, 3, 4, 6)]
        assert all(np.isfinite(vals)) and all(a > b for a, b in zip(vals, vals[1:]))


class TestDefaults:
    @pytest.mark.parametrize("task", [D, A, S])
    def test_default_severity_in_band(self, task):
        kind = DEFAULT_PHANTOM[task]
        vals = [psnr((g + 1) / 2, (apply_defect(g, default_defect(task), RngStream(s)) + 1) / 2)
                for s in range(10) for g in [make_phantom(PhantomSpec(kind, 64, 1.0, seed=s))]]
        assert 10 <= np.mean(vals) <= 20


class TestPhantom:
    @pytest.mark.parametrize("kind", PHANTOM_KINDS)
    def test_range_and_determinism(self, kind):
        a = make_phantom(PhantomSpec(kind, 32, 1.0, seed=9))
        b = make_phantom(PhantomSpec(kind, 32, 1.0, seed=9))
        np.testing.assert_array_equal(a, b)
        assert a.min() >= -1 and a.max() <= 1 and a.shape == (32, 32)

    @pytest.mark.parametrize("kind", PHANTOM_KINDS)
    def test_zero_density_is_background(self, kind):
        img = make_phantom(PhantomSpec(kind, 16, 0.0))
        assert np.ptp(img) == 0

    @pytest.mark.parametrize("kind", PHANTOM_KINDS)
    def test_mean_intensity_monotone_in_density(self, kind):
        densities = (0.25, 0.5, 1.0, 2.0, 4.0)
        means = [np.mean([make_phantom(PhantomSpec(kind, 32, d, seed=s)).mean() for s in range(20)]) for d in densities]
        assert all(a < b for a, b in zip(means, means[1:])), means

    def test_min_size(self):
        with pytest.raises(ArgumentError):
            PhantomSpec(image_size=8)


class TestSynthCorpus:
    def test_sparse_pairing_counts(self, tmp_path):
        m = synth_corpus(PhantomSpec("nuclei_blobs", 16), DefectSpec(D), 200, 0.05, RngStream(1), tmp_path)
        assert len(m.pairs) == 10
        assert len(m.gt) == 200 and len(m.defected) == 200
        assert len(m.unpaired_gt[D]) == 190 and len(m.unpaired_defected[D]) == 190

    def test_fully_paired(self, tmp_path):
        m = synth_corpus(PhantomSpec("filaments", 16), DefectSpec(S), 6, 1.0, RngStream(1), tmp_path)
        assert {p.gt for p in m.pairs} == set(m.gt)
        assert m.unpaired_defected[S] == []

    def test_unpaired(self, tmp_path):
        m = synth_corpus(PhantomSpec("nuclei_blobs", 16), DefectSpec(A), 8, 0.0, RngStream(1), tmp_path)
        assert m.pairs == [] and m.unpaired_gt[A] and m.unpaired_defected[A]
        gt_seeds = {e.seed for e in m.gt.values()}
        assert not gt_seeds & {m.defected[i].seed for i in m.unpaired_defected[A]}

    def test_files_written_and_pairs_match(self, tmp_path):
        m = synth_corpus(PhantomSpec("nuclei_blobs", 16), DefectSpec(D, gaussian_sigma=0.0), 3, 1.0,
                         RngStream(1), tmp_path, bit_depth=16)
        for p in m.pairs:
            np.testing.assert_array_equal(read_pgm(m.gt[p.gt].path).data, read_pgm(m.defected[p.defected].path).data)

    def test_argument_checks(self, tmp_path):
        with pytest.raises(ArgumentError):
            synth_corpus(PhantomSpec(), DefectSpec(D), 0, 0.5, RngStream(1), tmp_path)
        with pytest.raises(ArgumentError):
            synth_corpus(PhantomSpec(), DefectSpec(D), 4, 1.5, RngStream(1), tmp_path)
