"""Command-line interface.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
Progress is logged to stderr; artifacts are written under ``--out``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .autodiff import RngStream
from .errors import MicrestoreError, ValidationError
from .tasks import ALL_TASKS, TaskId

log = logging.getLogger("micrestore")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides the config)")
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory (default: .)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _train_flags(p):
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--name", help="checkpoint basename")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="micrestore", description="Two-stage GAN restoration of multi-defect micrographs.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a phantom corpus and manifest")
    p.add_argument("--task", action="append", help="task to generate (repeatable; default all)")
    p.add_argument("--n", type=int, default=20, help="ground-truth images per task")
    p.add_argument("--paired-fraction", type=float, default=1.0)
    p.add_argument("--n-test", type=int, default=0, help="extra fully paired held-out images per task")
    p.add_argument("--kind", help="phantom kind (default depends on the task)")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--sigma", type=float, help="denoise: Gaussian sigma in canonical units")
    p.add_argument("--poisson-peak", type=float, help="denoise: Poisson peak photon count")
    p.add_argument("--drop-every", type=int, help="axial_inpaint: keep one row in this many")
    p.add_argument("--fill", choices=("zero", "linear_interp"))
    p.add_argument("--psf-sigma", type=float, help="super_resolve: blur sigma in pixels")
    p.add_argument("--factor", type=int, help="super_resolve: downsampling factor")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)

    p = sub.add_parser("train-cin", parents=[common], help="stage 1: train the CIN defect GAN")
    _train_flags(p)
    p.add_argument("--task", action="append", help="restrict to these tasks")

    p = sub.add_parser("augment", parents=[common], help="append synthetic pairs from a CIN checkpoint")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--n-per-task", type=int)
    p.add_argument("--task", action="append")

    p = sub.add_parser("train-restore", parents=[common], help="stage 2: train the restoration cGAN")
    _train_flags(p)

    p = sub.add_parser("restore", parents=[common], help="restore images with a stage-2 checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="restore the defected side of every real pair")
    p.add_argument("inputs", nargs="*", type=Path, help="PGM files to restore")

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM report for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--restored", type=Path, help="directory of restored <defected_id>.pgm files")
    p.add_argument("--include-synthetic", action="store_true")

    p = sub.add_parser("ablation", parents=[common], help="limited-data augmentation ablation")
    p.add_argument("--corpus", type=Path, help="fully paired corpus manifest (default: synthesize one)")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--n-random", type=int, default=114)
    return parser


# ---------------------------------------------------------------------------
# helpers

def _run_config(args):
    from .io.config import default_config, load_config

    cfg = load_config(args.config) if args.config is not None else default_config()
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be >= 0")
        cfg = dataclasses.replace(cfg, seed=args.seed,
                                  stage1=dataclasses.replace(cfg.stage1, seed=args.seed),
                                  stage2=dataclasses.replace(cfg.stage2, seed=args.seed))
    return cfg


def _positive(name, value, allow_zero=False):
    if value is not None and (value < 0 or (value == 0 and not allow_zero)):
        raise ValidationError(f"--{name} must be {'>= 0' if allow_zero else 'positive'}, got {value}")


def _tasks(values):
    return None if not values else [TaskId.parse(v) for v in values]


def _train_config(base, args):
    _positive("epochs", args.epochs)
    _positive("max-steps", args.max_steps)
    changes = {}
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.max_steps is not None:
        changes["max_steps"] = args.max_steps
    if getattr(args, "task", None):
        changes["tasks"] = _tasks(args.task)
    return dataclasses.replace(base, **changes)


def _load_manifest(path):
    from .io.manifest import DatasetManifest

    return DatasetManifest.load_file(path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args, cfg, out: Path) -> int:
    from .defects import DEFAULT_PHANTOM, DefectSpec, PhantomSpec, default_defect, synth_corpus
    from .io.manifest import DatasetManifest

    _positive("n", args.n)
    _positive("n-test", args.n_test, allow_zero=True)
    tasks = _tasks(args.task) or list(ALL_TASKS)
    rng = RngStream(cfg.seed, ("synth",))
    train, test = DatasetManifest(), DatasetManifest()
    for task in tasks:
        overrides = {k: v for k, v in (("gaussian_sigma", args.sigma), ("poisson_peak", args.poisson_peak),
                                       ("drop_every", args.drop_every), ("fill", args.fill),
                                       ("psf_sigma", args.psf_sigma), ("factor", args.factor)) if v is not None}
        defect = dataclasses.replace(default_defect(task), **overrides)
        phantom = PhantomSpec(args.kind or DEFAULT_PHANTOM[task], args.size, args.density)
        train = train.merge(synth_corpus(phantom, defect, args.n, args.paired_fraction, rng, out, "", args.bit_depth))
        if args.n_test:
            test = test.merge(synth_corpus(phantom, defect, args.n_test, 1.0, rng, out, "test_", args.bit_depth))
        log.info("synth %s: %d gt, %d pairs", task.label, args.n, len(train.pairs_for(task)))
    train.save(out / "manifest.json")
    if args.n_test:
        test.save(out / "test_manifest.json")
    return EXIT_OK


def cmd_train_cin(args, cfg, out: Path) -> int:
    from .pipeline import train_cin_gan

    config = _train_config(cfg.stage1, args)
    train_cin_gan(_load_manifest(args.manifest), config, cfg.net, out, args.name or "cin_gan")
    return EXIT_OK


def cmd_train_restore(args, cfg, out: Path) -> int:
    from .pipeline import train_restore_cgan

    config = _train_config(cfg.stage2, args)
    train_restore_cgan(_load_manifest(args.manifest), config, cfg.net, out, args.name or "restore")
    return EXIT_OK


def cmd_augment(args, cfg, out: Path) -> int:
    from .io.checkpoint import load_checkpoint
    from .pipeline import augment_dataset

    n = cfg.augment_n_per_task if args.n_per_task is None else args.n_per_task
    _positive("n-per-task", n, allow_zero=True)
    if not args.checkpoint.is_file():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    manifest = _load_manifest(args.manifest)
    ckpt = load_checkpoint(args.checkpoint)
    augmented = augment_dataset(manifest, ckpt, n, RngStream(cfg.seed, ("augment",)), out, tasks=_tasks(args.task))
    augmented.save(out / "augmented_manifest.json")
    return EXIT_OK


def cmd_restore(args, cfg, out: Path) -> int:
    from .pipeline import restore_files, restore_manifest

    if args.manifest is None and not args.inputs:
        raise ValidationError("restore needs --manifest or at least one input file")
    dest = out / "restored"
    if args.manifest is not None:
        written = restore_manifest(_load_manifest(args.manifest), args.checkpoint, dest)
    else:
        written = restore_files(args.inputs, args.checkpoint, dest)
    log.info("restored %d images into %s", len(written), dest)
    return EXIT_OK


def cmd_eval(args, cfg, out: Path) -> int:
    from .io.report import emit_csv
    from .metrics import evaluate_corpus

    report = evaluate_corpus(_load_manifest(args.manifest), args.restored, include_synthetic=args.include_synthetic)
    path = emit_csv(report, out / "metrics.csv")
    for column, stats in report.aggregates.items():
        if stats["mean"] is not None:
            log.info("%s mean %.4f median %.4f", column, stats["mean"], stats["median"])
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_ablation(args, cfg, out: Path) -> int:
    from .io.report import emit_table
    from .pipeline import build_ablation_corpus, run_ablation, summarize

    ab = cfg.ablation
    if args.corpus is not None:
        corpus = _load_manifest(args.corpus)
    else:
        corpus = build_ablation_corpus(ab, cfg.seed, out / "ablation_corpus")
    rows = run_ablation(ab, corpus, cfg.stage1, cfg.stage2, cfg.net, cfg.seed, out / "ablation_work",
                        out / "ablation.csv")
    summary = summarize(rows)
    emit_table(("arm", "pair_count", "mean_ssim"), [[a, p, v] for (a, p), v in summary.items()],
               out / "ablation_summary.csv")
    for (arm, pairs), value in summary.items():
        log.info("pairs=%-4d %-14s mean held-out SSIM %.4f", pairs, arm, value)
    return EXIT_OK


def cmd_gradcheck(args, cfg, out: Path) -> int:
    from .gradsuite import run_suite

    _positive("n-random", args.n_random)
    reports = run_suite(n_random=args.n_random, seed=cfg.seed, progress=lambda r: log.debug(r.line()))
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(r.line())
    worst = max(r.max_rel_error for r in reports)
    status = "PASS" if not failed else "FAIL"
    print(f"{status} gradcheck: {len(reports) - len(failed)}/{len(reports)} checks within tolerance, "
          f"worst rel err {worst:.3e}")
    return EXIT_OK if not failed else EXIT_RUNTIME


COMMANDS = {
    "synth": cmd_synth,
    "train-cin": cmd_train_cin,
    "augment": cmd_augment,
    "train-restore": cmd_train_restore,
    "restore": cmd_restore,
    "eval": cmd_eval,
    "ablation": cmd_ablation,
    "gradcheck": cmd_gradcheck,
}


def _setup_logging(verbose: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    for name, default in (("seed", None), ("config", None), ("out", Path(".")), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    _setup_logging(args.verbose)
    try:
        cfg = _run_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (MicrestoreError, OSError, MemoryError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
