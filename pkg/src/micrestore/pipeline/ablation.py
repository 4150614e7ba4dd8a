"""Limited-data augmentation ablation.

For every (pair_count, repeat) the same real pairs are given to three arms:

* ``real_only``: restoration cGAN trained on the real pairs alone;
* ``separate_gans``: one single-task defect GAN per task augments the data;
* ``cin_gan``: one CIN defect GAN shared across tasks augments the data.

Each arm is scored on a fixed held-out set, per task.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import numpy as np

from ..autodiff import RngStream
from ..defects import DEFAULT_PHANTOM, PhantomSpec, default_defect, synth_corpus
from ..errors import DataError
from ..io.config import AblationConfig, TrainConfig
from ..io.manifest import DatasetManifest
from ..io.report import emit_table
from ..metrics import score_pair
from ..nn import NetConfig
from ..tasks import TaskId
from .inference import augment_dataset, restore
from .training import train_cin_gan, train_restore_cgan

log = logging.getLogger(__name__)

COLUMNS = ("arm", "pair_count", "repeat", "task", "n_eval", "n_real_pairs", "n_synthetic_pairs",
           "ssim_mean", "ssim_median", "ssim_std", "ssim_q1", "ssim_q3",
           "psnr_mean", "psnr_median", "psnr_std")


def build_ablation_corpus(config: AblationConfig, seed: int, out_dir, density: float = 1.0) -> DatasetManifest:
    """Fully paired corpus with ``n_eval + required_pool`` images per task."""
    rng = RngStream(seed, ("ablation_corpus",))
    manifest = DatasetManifest()
    n = config.n_eval + config.required_pool
    for task in config.tasks:
        phantom = PhantomSpec(DEFAULT_PHANTOM[task], config.image_size, density)
        manifest = manifest.merge(synth_corpus(phantom, default_defect(task), n, 1.0, rng, out_dir))
    return manifest


def split_corpus(corpus: DatasetManifest, config: AblationConfig):
    """Held-out pairs (first ``n_eval`` per task) and the training pool per task."""
    held, pool = {}, {}
    short = []
    for task in config.tasks:
        pairs = corpus.pairs_for(task, synthetic=False)
        need = config.n_eval + config.required_pool
        if len(pairs) < need:
            short.append(f"{task.label}: {len(pairs)} real pairs, need {need}")
            continue
        held[task] = pairs[:config.n_eval]
        pool[task] = pairs[config.n_eval:need]
    if short:
        raise DataError("ablation corpus too small: " + "; ".join(short))
    return held, pool


def _subset(corpus: DatasetManifest, pool: dict, chosen: dict) -> DatasetManifest:
    """Manifest holding the chosen real pairs plus every pool ground truth as unpaired."""
    m = DatasetManifest()
    for task, pairs in pool.items():
        m.add_task(task)
        picked = {p.gt for p in chosen[task]}
        for p in pairs:
            m.add_gt(corpus.gt[p.gt])
            if p.gt not in picked:
                m.unpaired_gt[task].append(p.gt)
        for p in chosen[task]:
            m.add_defected(corpus.defected[p.defected])
            m.add_pair(p.gt, p.defected)
    m.canonicalize()
    return m


def _stats(ssims, psnrs):
    s = np.asarray(ssims, dtype=np.float64)
    p = np.asarray(psnrs, dtype=np.float64)
    q1, q3 = np.percentile(s, [25, 75])
    return [float(s.mean()), float(np.median(s)), float(s.std()), float(q1), float(q3),
            float(p.mean()), float(np.median(p)), float(p.std())]


def _score(ckpt, corpus, held):
    out = {}
    for task, pairs in held.items():
        gts = [corpus.load(p.gt, np.float64) for p in pairs]
        bad = [corpus.load(p.defected, np.float64) for p in pairs]
        restored = restore(bad, ckpt)
        scores = [score_pair(g, b, r) for g, b, r in zip(gts, bad, restored)]
        out[task] = ([s[3] for s in scores], [s[2] for s in scores])
    return out


def run_ablation(config: AblationConfig, corpus: DatasetManifest, stage1: TrainConfig, stage2: TrainConfig,
                 net: NetConfig, seed: int, work_dir, out_csv=None) -> list[list]:
    """Train and score every (arm, pair_count, repeat); one row per task."""
    held, pool = split_corpus(corpus, config)
    work_dir = Path(work_dir)
    tasks = list(config.tasks)
    rows = []
    for pair_count in config.pair_counts:
        for repeat in range(config.repeats):
            rng = RngStream(seed, ("ablation", pair_count, repeat))
            chosen = {}
            for task in tasks:
                idx = np.sort(rng.child("pairs", task.label).choice(len(pool[task]), pair_count, replace=False))
                chosen[task] = [pool[task][i] for i in idx]
            base = _subset(corpus, pool, chosen)
            s1 = dataclasses.replace(stage1, seed=rng.derive_seed("stage1"), tasks=tasks)
            s2 = dataclasses.replace(stage2, seed=rng.derive_seed("stage2"), tasks=None)
            run_dir = work_dir / f"p{pair_count}_r{repeat}"
            for arm in config.arms:
                data = base
                if arm == "separate_gans" and config.augment_n:
                    single = dataclasses.replace(net, num_tasks=1)
                    for task in tasks:
                        gan = train_cin_gan(base, dataclasses.replace(s1, tasks=[task]), single)
                        data = augment_dataset(data, gan.checkpoint, config.augment_n, rng.child(arm),
                                               run_dir / arm, tasks=[task], tag=f"sep_{task.label}")
                elif arm == "cin_gan" and config.augment_n:
                    gan = train_cin_gan(base, s1, net)
                    data = augment_dataset(base, gan.checkpoint, config.augment_n, rng.child(arm),
                                           run_dir / arm, tasks=tasks, tag="cin")
                model = train_restore_cgan(data, s2, net)
                scores = _score(model.checkpoint, corpus, held)
                for task in tasks:
                    ssims, psnrs = scores[task]
                    rows.append([arm, pair_count, repeat, task.label, len(ssims),
                                 len(data.pairs_for(task, synthetic=False)), len(data.pairs_for(task, synthetic=True)),
                                 *_stats(ssims, psnrs)])
                log.info("ablation %s pairs=%d repeat=%d mean SSIM %.4f", arm, pair_count, repeat,
                         np.mean([np.mean(scores[t][0]) for t in tasks]))
    if out_csv is not None:
        emit_table(COLUMNS, rows, out_csv)
    return rows


def summarize(rows) -> dict:
    """Mean held-out SSIM per (arm, pair_count), pooled over repeats and tasks."""
    acc: dict[tuple, list] = {}
    for r in rows:
        acc.setdefault((r[0], r[1]), []).append(r[7])
    return {k: float(np.mean(v)) for k, v in sorted(acc.items(), key=lambda kv: (kv[0][1], kv[0][0]))}


def ablation_tasks(labels) -> list[TaskId]:
    return [TaskId.parse(t) for t in labels]
