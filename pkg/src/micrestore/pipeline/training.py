"""Stage 1 (CIN-GAN defect synthesis) and stage 2 (paired restoration cGAN)."""

from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import RngStream, Tape, Tensor
from ..errors import DataError, NonFiniteError
from ..io.checkpoint import Checkpoint, save_checkpoint
from ..io.config import TrainConfig
from ..io.manifest import DatasetManifest
from ..io.report import emit_table
from ..losses import FeatureNet, adv_loss_d, adv_loss_g, content_loss, total_loss
from ..nn import (
    NetConfig,
    ParamStore,
    defect_generator_forward,
    discriminator_forward,
    init_discriminator,
    init_generator,
    restoration_generator_forward,
)
from ..optim import Adam
from ..tasks import ALL_TASKS, TaskId

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "task", "d_loss", "g_adv", "g_content", "g_total")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list = field(default_factory=list)
    path: Path | None = None


class BatchSampler:
    """Cycles through successive random permutations of ``range(n)``."""

    def __init__(self, n: int, batch_size: int, rng: RngStream):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._epoch = 0

    def next(self) -> np.ndarray:
        while self._order.size < self.batch_size:
            perm = self.rng.child("epoch", self._epoch).permutation(self.n)
            self._epoch += 1
            self._order = np.concatenate([self._order, perm])
        batch, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return batch


def task_rows(net: NetConfig, tasks) -> list[TaskId]:
    """TaskId held by each CIN bank row."""
    if net.num_tasks == len(ALL_TASKS):
        return list(ALL_TASKS)
    tasks = [TaskId.parse(t) for t in tasks]
    if len(tasks) != net.num_tasks:
        raise DataError(f"a {net.num_tasks}-row CIN bank cannot hold tasks {[t.label for t in tasks]}")
    return tasks


def _tensor(arr, dtype):
    return Tensor._result(np.ascontiguousarray(arr, dtype=dtype), False)


def _scalar(t: Tensor) -> float:
    return float(t.data)


@contextlib.contextmanager
def _abort_on_nonfinite(step: int):
    try:
        yield
    except NonFiniteError as exc:
        raise NonFiniteError(f"training aborted at step {step}: {exc}") from exc


def _write_outputs(result: TrainResult, out: Path | None, name: str):
    if out is None:
        return result
    out = Path(out)
    result.path = save_checkpoint(result.checkpoint, out / f"{name}.ckpt")
    rows = [[r[c] for c in LOSS_COLUMNS] for r in result.losses]
    emit_table(LOSS_COLUMNS, rows, out / f"{name}_losses.csv")
    return result


def _total_steps(config: TrainConfig, steps_per_epoch: int) -> int:
    steps = config.epochs * max(1, steps_per_epoch)
    if config.max_steps is not None:
        steps = min(steps, config.max_steps)
    return steps


def train_cin_gan(manifest: DatasetManifest, config: TrainConfig, net: NetConfig, out=None,
                  name: str = "cin_gan") -> TrainResult:
    """Unpaired stage-1 training of the CIN defect generator.

    Tasks are visited round-robin; each task has its own discriminator. The
    generator loss anchors structure with a content term against its own
    ground-truth input, since no pairs are used.
    """
    tasks = [TaskId.parse(t) for t in (config.tasks or manifest.tasks)]
    if not tasks:
        raise DataError("no tasks to train")
    rows = task_rows(net, tasks)
    dtype = np.dtype(config.dtype)
    rng = RngStream(config.seed, ("cin_gan",))
    pools = {}
    for task in tasks:
        if task not in rows:
            raise DataError(f"task {task.label} has no CIN bank row")
        gt_ids = manifest.gt_ids(task)
        bad_ids = manifest.defected_ids(task, synthetic=False)
        if not gt_ids or not bad_ids:
            raise DataError(f"task {task.label} needs both ground-truth and defected images")
        pools[task] = (manifest.stack(gt_ids, dtype), manifest.stack(bad_ids, dtype))

    G = init_generator(net, rng.child("init", "generator"), "defect_generator").astype(dtype)
    discs = {t: init_discriminator(net, rng.child("init", "disc", t.label), conditioned=False).astype(dtype)
             for t in tasks}
    opt_g = Adam(G, config.optimizer)
    opt_d = {t: Adam(d, config.optimizer) for t, d in discs.items()}
    featnet = FeatureNet(config.loss.feature_seed) if config.loss.content_space == "feature_l1" else None
    samplers = {t: (BatchSampler(len(pools[t][0]), config.batch_size, rng.child("gt_batches", t.label)),
                    BatchSampler(len(pools[t][1]), config.batch_size, rng.child("defect_batches", t.label)))
                for t in tasks}
    per_epoch = sum(math.ceil(len(pools[t][0]) / config.batch_size) for t in tasks)
    steps = _total_steps(config, per_epoch)
    kind = config.loss.adv_kind
    losses = []
    for step in range(steps):
        task = tasks[step % len(tasks)]
        row = rows.index(task)
        D = discs[task]
        gt_pool, bad_pool = pools[task]
        s_gt, s_bad = samplers[task]
        gt = _tensor(gt_pool[s_gt.next()], dtype)
        real = _tensor(bad_pool[s_bad.next()], dtype)
        noise = _tensor(rng.child("noise", step).normal((gt.shape[0], net.noise_channels) + gt.shape[2:]), dtype)

        with _abort_on_nonfinite(step):
            fake = defect_generator_forward(gt, G, row, noise)
            tape = Tape()
            d_loss = adv_loss_d(discriminator_forward(real, None, D, tape),
                                discriminator_forward(fake, None, D, tape), kind, tape)
            tape.backward(d_loss)
            opt_d[task].step()
            D.zero_grad()

            tape = Tape()
            with D.frozen():
                fake = defect_generator_forward(gt, G, row, noise, tape)
                g_adv = adv_loss_g(discriminator_forward(fake, None, D, tape), kind, tape)
                g_content = content_loss(fake, gt, config.loss.content_space, featnet, tape)
                g_total = total_loss(g_adv, g_content, config.loss, tape)
                tape.backward(g_total)
            opt_g.step(row=row)
            G.zero_grad()

        losses.append({"step": step, "task": task.label, "d_loss": _scalar(d_loss), "g_adv": _scalar(g_adv),
                       "g_content": _scalar(g_content), "g_total": _scalar(g_total)})
        if step % 50 == 0 or step == steps - 1:
            log.info("cin_gan step %d/%d task=%s d=%.4f g=%.4f", step + 1, steps, task.label,
                     losses[-1]["d_loss"], losses[-1]["g_total"])
        if out is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0 and step + 1 < steps:
            save_checkpoint(_cin_checkpoint(G, discs, net, config, rows, step + 1), Path(out) / f"{name}_step{step + 1}.ckpt")

    result = TrainResult(_cin_checkpoint(G, discs, net, config, rows, steps), losses)
    return _write_outputs(result, out, name)


def _cin_checkpoint(G, discs, net, config, rows, step):
    stores = {"generator": G}
    for t, d in discs.items():
        stores[f"discriminator/{t.label}"] = d
    meta = {"stage": "cin_gan", "step": step, "seed": config.seed, "loss": config.loss.to_dict(),
            "train": config.to_dict(), "task_rows": [t.label for t in rows]}
    return Checkpoint(net, stores, meta)


def train_restore_cgan(manifest: DatasetManifest, config: TrainConfig, net: NetConfig, out=None,
                       name: str = "restore") -> TrainResult:
    """Paired stage-2 training: generator maps defected -> ground truth.

    The discriminator scores (output, defected) jointly, real when the output is
    the ground truth. Real and synthetic pairs are mixed uniformly.
    """
    pairs = [p for p in manifest.pairs if config.tasks is None or p.task in config.tasks]
    if not pairs:
        raise DataError("restoration training needs at least one (gt, defected) pair")
    dtype = np.dtype(config.dtype)
    rng = RngStream(config.seed, ("restore_cgan",))
    targets = manifest.stack([p.gt for p in pairs], dtype)
    inputs = manifest.stack([p.defected for p in pairs], dtype)
    G = init_generator(net, rng.child("init", "generator"), "restoration_generator").astype(dtype)
    D = init_discriminator(net, rng.child("init", "disc"), conditioned=True).astype(dtype)
    opt_g, opt_d = Adam(G, config.optimizer), Adam(D, config.optimizer)
    featnet = FeatureNet(config.loss.feature_seed) if config.loss.content_space == "feature_l1" else None
    sampler = BatchSampler(len(pairs), config.batch_size, rng.child("batches"))
    steps = _total_steps(config, math.ceil(len(pairs) / config.batch_size))
    kind = config.loss.adv_kind
    losses = []
    for step in range(steps):
        idx = sampler.next()
        x = _tensor(inputs[idx], dtype)
        y = _tensor(targets[idx], dtype)

        with _abort_on_nonfinite(step):
            fake = restoration_generator_forward(x, G)
            tape = Tape()
            d_loss = adv_loss_d(discriminator_forward(y, x, D, tape), discriminator_forward(fake, x, D, tape), kind, tape)
            tape.backward(d_loss)
            opt_d.step()
            D.zero_grad()

            tape = Tape()
            with D.frozen():
                fake = restoration_generator_forward(x, G, tape)
                g_adv = adv_loss_g(discriminator_forward(fake, x, D, tape), kind, tape)
                g_content = content_loss(fake, y, config.loss.content_space, featnet, tape)
                g_total = total_loss(g_adv, g_content, config.loss, tape)
                tape.backward(g_total)
            opt_g.step()
            G.zero_grad()

        losses.append({"step": step, "task": "", "d_loss": _scalar(d_loss), "g_adv": _scalar(g_adv),
                       "g_content": _scalar(g_content), "g_total": _scalar(g_total)})
        if step % 50 == 0 or step == steps - 1:
            log.info("restore step %d/%d d=%.4f g=%.4f content=%.4f", step + 1, steps,
                     losses[-1]["d_loss"], losses[-1]["g_total"], losses[-1]["g_content"])
        if out is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0 and step + 1 < steps:
            save_checkpoint(_restore_checkpoint(G, D, net, config, step + 1), Path(out) / f"{name}_step{step + 1}.ckpt")

    result = TrainResult(_restore_checkpoint(G, D, net, config, steps), losses)
    return _write_outputs(result, out, name)


def _restore_checkpoint(G, D, net, config, step):
    meta = {"stage": "restore_cgan", "step": step, "seed": config.seed, "loss": config.loss.to_dict(),
            "train": config.to_dict()}
    return Checkpoint(net, {"generator": G, "discriminator": D}, meta)


def generator_of(ckpt: Checkpoint) -> ParamStore:
    return ckpt.store("generator")
