"""Defect simulators, procedural phantoms and corpus synthesis.

All images here are 2-D float arrays in the canonical range [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .autodiff import RngStream
from .errors import ArgumentError
from .io.manifest import DatasetManifest, ImageEntry
from .io.pgm import write_pgm
from .tasks import TaskId

BACKGROUND = 0.1  # phantom background intensity on the [0, 1] scale
FILL_MODES = ("zero", "linear_interp")
PHANTOM_KINDS = ("nuclei_blobs", "filaments", "embryo_texture")

# organism stand-ins: embryo -> denoising, retinal nuclei -> axial inpainting,
# microtubules -> super-resolution
DEFAULT_PHANTOM = {
    TaskId.DENOISE: "embryo_texture",
    TaskId.AXIAL_INPAINT: "nuclei_blobs",
    TaskId.SUPER_RESOLVE: "filaments",
}


@dataclass(frozen=True)
class DefectSpec:
    """Parameters of one defect simulator.

    Only the fields of ``task`` are used. ``gaussian_sigma`` is in canonical
    units. Neutral settings (identity): sigma 0 with Poisson off;
    ``drop_every=1``; ``factor=1`` with ``psf_sigma=0``.
    """

    task: TaskId
    gaussian_sigma: float = 0.15
    poisson_peak: float | None = None
    drop_every: int = 2
    fill: str = "linear_interp"
    psf_sigma: float = 1.5
    factor: int = 2

    def __post_init__(self):
        object.__setattr__(self, "task", TaskId.parse(self.task))
        if self.task == TaskId.DENOISE:
            if not self.gaussian_sigma >= 0:
                raise ArgumentError(f"gaussian_sigma must be >= 0, got {self.gaussian_sigma}")
            if self.poisson_peak is not None and not self.poisson_peak > 0:
                raise ArgumentError(f"poisson_peak must be > 0 or off, got {self.poisson_peak}")
        elif self.task == TaskId.AXIAL_INPAINT:
            if int(self.drop_every) != self.drop_every or self.drop_every < 1:
                raise ArgumentError(f"drop_every must be an integer >= 2 (1 = neutral), got {self.drop_every}")
            if self.fill not in FILL_MODES:
                raise ArgumentError(f"fill must be one of {FILL_MODES}, got {self.fill!r}")
        else:
            if int(self.factor) != self.factor or self.factor < 1:
                raise ArgumentError(f"factor must be an integer >= 2 (1 = neutral), got {self.factor}")
            if self.psf_sigma < 0 or (self.psf_sigma == 0 and self.factor != 1):
                raise ArgumentError(f"psf_sigma must be > 0, got {self.psf_sigma}")

    @property
    def is_neutral(self) -> bool:
        if self.task == TaskId.DENOISE:
            return self.gaussian_sigma == 0 and self.poisson_peak is None
        if self.task == TaskId.AXIAL_INPAINT:
            return self.drop_every == 1
        return self.factor == 1 and self.psf_sigma == 0

    def to_dict(self):
        d = asdict(self)
        d["task"] = self.task.label
        return d


def default_defect(task) -> DefectSpec:
    task = TaskId.parse(task)
    if task == TaskId.DENOISE:
        return DefectSpec(task, gaussian_sigma=0.3)
    if task == TaskId.AXIAL_INPAINT:
        return DefectSpec(task, drop_every=2, fill="zero")
    return DefectSpec(task, psf_sigma=1.5, factor=2)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    r = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at radius ceil(3 sigma), mirror boundary."""
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="mirror")
    return ndimage.correlate1d(out, k, axis=1, mode="mirror")


def _fill_rows(img, keep_every, mode):
    out = img.copy()
    H = img.shape[0]
    kept = np.arange(0, H, keep_every)
    missing = np.setdiff1d(np.arange(H), kept)
    if mode == "zero":
        out[missing] = 0.0
        return out
    for r in missing:
        lo = kept[kept < r].max()
        above = kept[kept > r]
        if above.size == 0:
            out[r] = img[lo]
        else:
            hi = above.min()
            t = (r - lo) / (hi - lo)
            out[r] = (1.0 - t) * img[lo] + t * img[hi]
    return out


def apply_defect(gt: np.ndarray, spec: DefectSpec, rng: RngStream | None = None, clamp: bool = True) -> np.ndarray:
    """Degrade a canonical-range 2-D image; output has the input's shape."""
    gt = np.asarray(gt, dtype=np.float64)
    if gt.ndim != 2:
        raise ArgumentError(f"apply_defect expects a 2-D image, got shape {gt.shape}")
    if spec.is_neutral:
        return gt.copy()
    if spec.task == TaskId.DENOISE:
        if rng is None:
            raise ArgumentError("denoise defect needs an RngStream")
        out = gt
        if spec.poisson_peak is not None:
            unit = np.clip((gt + 1.0) / 2.0, 0.0, 1.0)
            unit = rng.poisson(spec.poisson_peak * unit) / spec.poisson_peak
            out = 2.0 * unit - 1.0
        out = out + rng.normal(gt.shape, scale=spec.gaussian_sigma)
        return np.clip(out, -1.0, 1.0) if clamp else out
    if spec.task == TaskId.AXIAL_INPAINT:
        return _fill_rows(gt, int(spec.drop_every), spec.fill)
    f = int(spec.factor)
    blurred = gaussian_blur(gt, spec.psf_sigma) if spec.psf_sigma > 0 else gt
    low = blurred[::f, ::f]
    up = np.repeat(np.repeat(low, f, axis=0), f, axis=1)
    return up[:gt.shape[0], :gt.shape[1]].copy()


# ---------------------------------------------------------------------------
# phantoms

@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "nuclei_blobs"
    image_size: int = 64
    density: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ArgumentError(f"phantom kind must be one of {PHANTOM_KINDS}, got {self.kind!r}")
        if self.image_size < 16:
            raise ArgumentError(f"image_size must be >= 16, got {self.image_size}")
        if self.density < 0:
            raise ArgumentError(f"density must be >= 0, got {self.density}")


def _to_canonical(signal):
    unit = BACKGROUND + (1.0 - BACKGROUND) * (1.0 - np.exp(-signal))
    return 2.0 * unit - 1.0


def _blobs(size, density, rng):
    count = int(round(density * size * size / 256.0))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    signal = np.zeros((size, size))
    scale = size / 64.0
    for _ in range(count):
        cy, cx = rng.uniform(0, size, 2)
        sy, sx = rng.uniform(1.5, 4.0, 2) * scale
        theta = rng.uniform(0, np.pi)
        amp = rng.uniform(0.8, 2.0)
        c, s = np.cos(theta), np.sin(theta)
        dy, dx = yy - cy, xx - cx
        u = c * dx + s * dy
        v = -s * dx + c * dy
        signal += amp * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    return signal


def _filaments(size, density, rng):
    count = int(round(density * size / 8.0))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    pix = np.stack([yy.ravel(), xx.ravel()], axis=1)
    signal = np.zeros(size * size)
    for _ in range(count):
        n_pts = int(rng.uniform(0.6, 1.4) * size * 2)
        start = rng.uniform(0, size, 2)
        angle = rng.uniform(0, 2 * np.pi)
        turns = np.cumsum(rng.normal(n_pts, scale=0.06)) + angle
        steps = 0.5 * np.stack([np.sin(turns), np.cos(turns)], axis=1)
        pts = start + np.cumsum(steps, axis=0)
        width = rng.uniform(0.7, 1.2) * size / 64.0
        amp = rng.uniform(1.0, 2.5)
        d2 = ((pix[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        signal += amp * np.exp(-d2 / (2.0 * width * width))
    return signal.reshape(size, size)


def _embryo(size, density, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = size / 2.0 + rng.uniform(-0.05, 0.05, 2) * size
    ay, ax = rng.uniform(0.3, 0.42) * size, rng.uniform(0.38, 0.47) * size
    theta = rng.uniform(-0.4, 0.4)
    c, s = np.cos(theta), np.sin(theta)
    u = (c * (xx - cx) + s * (yy - cy)) / ax
    v = (-s * (xx - cx) + c * (yy - cy)) / ay
    mask = 1.0 / (1.0 + np.exp((np.sqrt(u * u + v * v) - 1.0) * size / 4.0))
    white = rng.normal((size, size))
    fine, coarse = size / 40.0, size / 12.0
    texture = ndimage.gaussian_filter(white, fine, mode="wrap") - ndimage.gaussian_filter(white, coarse, mode="wrap")
    texture /= texture.std() + 1e-12
    contrast = np.clip(0.9 + 0.45 * texture, 0.0, None)
    return (1.0 - np.exp(-density)) * 2.0 * mask * contrast


def make_phantom(spec: PhantomSpec, rng: RngStream | None = None) -> np.ndarray:
    """Procedural micrograph stand-in; ``density=0`` gives pure background."""
    rng = rng if rng is not None else RngStream(spec.seed, ("phantom",))
    size = spec.image_size
    if spec.density == 0:
        return np.full((size, size), _to_canonical(np.zeros(1))[0])
    if spec.kind == "nuclei_blobs":
        signal = _blobs(size, spec.density, rng)
    elif spec.kind == "filaments":
        signal = _filaments(size, spec.density, rng)
    else:
        signal = _embryo(size, spec.density, rng)
    return _to_canonical(signal)


# ---------------------------------------------------------------------------
# corpora

def synth_corpus(phantom: PhantomSpec, defect: DefectSpec, n: int, paired_fraction: float, rng: RngStream,
                 out_dir, prefix: str = "", bit_depth: int = 16) -> DatasetManifest:
    """Write ``n`` ground-truth images plus paired and unpaired defected images.

    The first ``floor(paired_fraction * n)`` ground-truth images get a defected
    partner. The other ``n - k`` defected images come from phantoms drawn from a
    separate stream, so they share no phantom seed with any ground truth.
    """
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    if not 0.0 <= paired_fraction <= 1.0:
        raise ArgumentError(f"paired_fraction must lie in [0, 1], got {paired_fraction}")
    task = defect.task
    out_dir = Path(out_dir)
    gt_dir, def_dir = out_dir / "gt", out_dir / "defected"
    gt_dir.mkdir(parents=True, exist_ok=True)
    def_dir.mkdir(parents=True, exist_ok=True)
    k = int(math.floor(paired_fraction * n + 1e-9))
    manifest = DatasetManifest()
    manifest.add_task(task)
    label = task.label
    base = rng.child("corpus", prefix, label)

    def phantom_image(seed):
        spec = PhantomSpec(phantom.kind, phantom.image_size, phantom.density, seed)
        return make_phantom(spec, RngStream(seed, ("phantom",)))

    def write(img, path):
        try:
            write_pgm(img, path, bit_depth)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc

    for i in range(n):
        gid = f"{prefix}{label}_gt_{i:04d}"
        seed = base.derive_seed("gt", i)
        img = phantom_image(seed)
        path = gt_dir / f"{gid}.pgm"
        write(img, path)
        manifest.add_gt(ImageEntry(gid, path.resolve(), task, seed))
        if i < k:
            did = f"{prefix}{label}_def_{i:04d}"
            bad = apply_defect(img, defect, base.child("defect", i))
            dpath = def_dir / f"{did}.pgm"
            write(bad, dpath)
            manifest.add_defected(ImageEntry(did, dpath.resolve(), task, seed))
            manifest.add_pair(gid, did)
        else:
            manifest.unpaired_gt[task].append(gid)
    for j in range(n - k):
        uid = f"{prefix}{label}_unp_{j:04d}"
        seed = base.derive_seed("unpaired", j)
        bad = apply_defect(phantom_image(seed), defect, base.child("unpaired_defect", j))
        upath = def_dir / f"{uid}.pgm"
        write(bad, upath)
        manifest.add_defected(ImageEntry(uid, upath.resolve(), task, seed))
        manifest.unpaired_defected[task].append(uid)
    manifest.canonicalize()
    return manifest
