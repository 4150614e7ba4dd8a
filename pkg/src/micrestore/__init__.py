"""Two-stage GAN restoration of multi-defect fluorescence micrographs."""

from .tasks import TaskId

__version__ = "0.1.0"

__all__ = ["TaskId", "__version__"]
