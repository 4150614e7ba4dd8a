"""Dataset augmentation with a trained defect generator, and restoration inference."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from ..autodiff import RngStream, Tensor
from ..errors import DataError, StateError
from ..io.checkpoint import Checkpoint, file_sha256, load_checkpoint
from ..io.manifest import DatasetManifest, ImageEntry
from ..io.pgm import read_pgm, write_pgm
from ..nn import defect_generator_forward, restoration_generator_forward
from ..tasks import TaskId

log = logging.getLogger(__name__)

BATCH = 8


def _as_tensor(arr, dtype=np.float32):
    return Tensor._result(np.ascontiguousarray(arr, dtype=dtype), False)


def synthesize_defects(ckpt: Checkpoint, gt: np.ndarray, task, rng: RngStream) -> np.ndarray:
    """Run the defect generator on an (N, H, W) stack of ground-truth images."""
    if ckpt.meta.get("stage") != "cin_gan":
        raise StateError("checkpoint is not a defect-generator (cin_gan) checkpoint")
    rows = [TaskId.parse(t) for t in ckpt.meta.get("task_rows", [])]
    task = TaskId.parse(task)
    if task not in rows:
        raise StateError(f"checkpoint has no CIN row for task {task.label}; rows are {[t.label for t in rows]}")
    G = ckpt.store("generator")
    dtype = next(iter(G.arrays().values())).dtype
    net = ckpt.net_config
    out = []
    for start in range(0, len(gt), BATCH):
        chunk = gt[start:start + BATCH][:, None]
        noise = rng.child("noise", start).normal((len(chunk), net.noise_channels) + chunk.shape[2:])
        fake = defect_generator_forward(_as_tensor(chunk, dtype), G, rows.index(task), _as_tensor(noise, dtype))
        out.append(fake.data[:, 0].astype(np.float64))
    return np.concatenate(out)


def augment_dataset(manifest: DatasetManifest, ckpt: Checkpoint, n_per_task: int, rng: RngStream, out_dir,
                    tasks=None, tag: str = "syn", bit_depth: int = 16) -> DatasetManifest:
    """Append ``n_per_task`` synthetic (gt, generated-defected) pairs per task.

    Ground truth is sampled without replacement when the pool is large enough,
    with replacement otherwise. Existing entries are kept unchanged.
    """
    out = manifest.copy()
    if n_per_task == 0:
        return out
    rows = [TaskId.parse(t) for t in ckpt.meta.get("task_rows", [])]
    tasks = [TaskId.parse(t) for t in (tasks or manifest.tasks)]
    missing = [t.label for t in tasks if t not in rows]
    if missing:
        raise StateError(f"checkpoint covers tasks {[t.label for t in rows]}, not {missing}")
    syn_dir = Path(out_dir) / "synthetic"
    syn_dir.mkdir(parents=True, exist_ok=True)
    for task in tasks:
        pool = manifest.gt_ids(task)
        if not pool:
            raise DataError(f"no ground-truth images for task {task.label}")
        trng = rng.child("augment", tag, task.label)
        pick = trng.child("pick").choice(len(pool), n_per_task, replace=n_per_task > len(pool))
        chosen = [pool[i] for i in pick]
        gt = np.stack([manifest.load(i, np.float64) for i in chosen])
        fakes = synthesize_defects(ckpt, gt, task, trng)
        for k, (gid, img) in enumerate(zip(chosen, fakes)):
            sid = f"{tag}_{task.label}_{k:04d}"
            path = syn_dir / f"{sid}.pgm"
            write_pgm(img, path, bit_depth)
            out.add_defected(ImageEntry(sid, path.resolve(), task, manifest.gt[gid].seed, synthetic=True))
            out.add_pair(gid, sid, synthetic=True)
        log.info("augmented %s with %d synthetic pairs", task.label, n_per_task)
    out.canonicalize()
    return out


def _pad_to(img, multiple):
    H, W = img.shape
    ph = (-H) % multiple
    pw = (-W) % multiple
    if ph == 0 and pw == 0:
        return img, (H, W)
    mode = "reflect" if ph < H and pw < W else "symmetric"
    return np.pad(img, ((0, ph), (0, pw)), mode=mode), (H, W)


def restore(images, ckpt: Checkpoint) -> list[np.ndarray]:
    """Restore canonical-range 2-D images; output is clamped to [-1, 1].

    Extents not divisible by 2**depth are reflection-padded and cropped back.
    """
    if ckpt.meta.get("stage") != "restore_cgan":
        raise StateError("checkpoint is not a restoration (restore_cgan) checkpoint")
    G = ckpt.store("generator")
    dtype = next(iter(G.arrays().values())).dtype
    multiple = 2**ckpt.net_config.depth
    results = [None] * len(images)
    groups: dict[tuple, list] = {}
    for i, img in enumerate(images):
        padded, orig = _pad_to(np.asarray(img, dtype=np.float64), multiple)
        groups.setdefault(padded.shape, []).append((i, padded, orig))
    for items in groups.values():
        for start in range(0, len(items), BATCH):
            chunk = items[start:start + BATCH]
            x = np.stack([p for _, p, _ in chunk])[:, None]
            y = restoration_generator_forward(_as_tensor(x, dtype), G).data[:, 0]
            for (i, _, (H, W)), out in zip(chunk, y):
                results[i] = np.clip(out[:H, :W].astype(np.float64), -1.0, 1.0)
    return results


def restore_files(paths, checkpoint_path, out_dir, bit_depth: int = 16, names=None) -> list[Path]:
    """Restore PGM files into ``out_dir`` and write ``provenance.json`` beside them."""
    checkpoint_path = Path(checkpoint_path)
    if not checkpoint_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint_path}")
    ckpt = load_checkpoint(checkpoint_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [Path(p) for p in paths]
    names = names or [p.stem for p in paths]
    restored = restore([read_pgm(p).data for p in paths], ckpt)
    written = []
    for name, img in zip(names, restored):
        dest = out_dir / f"{name}.pgm"
        write_pgm(img, dest, bit_depth)
        written.append(dest)
    provenance = {
        "checkpoint": checkpoint_path.name,
        "checkpoint_sha256": file_sha256(checkpoint_path),
        "net_config": ckpt.net_config.to_dict(),
        "meta": ckpt.meta,
        "outputs": {n: Path(p).name for n, p in zip(names, paths)},
    }
    (out_dir / "provenance.json").write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return written


def restore_manifest(manifest: DatasetManifest, checkpoint_path, out_dir, bit_depth: int = 16) -> list[Path]:
    """Restore the defected side of every real pair, named by defected id."""
    pairs = manifest.pairs_for(synthetic=False)
    if not pairs:
        raise DataError("manifest has no real pairs to restore")
    ids = [p.defected for p in pairs]
    return restore_files([manifest.defected[i].path for i in ids], checkpoint_path, out_dir, bit_depth, names=ids)
