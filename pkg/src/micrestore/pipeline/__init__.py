"""Training stages, augmentation, inference and the ablation harness."""

from .ablation import build_ablation_corpus, run_ablation, summarize
from .inference import augment_dataset, restore, restore_files, restore_manifest, synthesize_defects
from .training import TrainResult, train_cin_gan, train_restore_cgan

__all__ = [
    "TrainResult",
    "augment_dataset",
    "build_ablation_corpus",
    "restore",
    "restore_files",
    "restore_manifest",
    "run_ablation",
    "summarize",
    "synthesize_defects",
    "train_cin_gan",
    "train_restore_cgan",
]
