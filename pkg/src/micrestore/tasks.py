from __future__ import annotations

import enum

from .errors import ArgumentError


class TaskId(enum.IntEnum):
    """Restoration tasks; the value doubles as the default CIN bank row."""

    DENOISE = 0
    AXIAL_INPAINT = 1
    SUPER_RESOLVE = 2

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value) -> "TaskId":
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        key = str(value).strip().lower().replace("-", "_")
        for task, label in _LABELS.items():
            if key in (label, task.name.lower()):
                return task
        raise ArgumentError(f"unknown task {value!r}; expected one of {', '.join(_LABELS.values())}")


_LABELS = {
    TaskId.DENOISE: "denoise",
    TaskId.AXIAL_INPAINT: "axial_inpaint",
    TaskId.SUPER_RESOLVE: "super_resolve",
}

ALL_TASKS = tuple(TaskId)
