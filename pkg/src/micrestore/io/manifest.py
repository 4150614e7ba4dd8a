"""Dataset manifests: which images exist, what task they belong to, which are paired."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from ..tasks import TaskId
from .pgm import read_pgm

MANIFEST_VERSION = 1


@dataclass
class ImageEntry:
    id: str
    path: Path
    task: TaskId
    seed: int | None = None
    synthetic: bool = False


@dataclass
class PairEntry:
    gt: str
    defected: str
    task: TaskId
    synthetic: bool = False


@dataclass
class DatasetManifest:
    tasks: list = field(default_factory=list)
    gt: dict = field(default_factory=dict)
    defected: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)
    unpaired_gt: dict = field(default_factory=dict)
    unpaired_defected: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION

    # -- construction -----------------------------------------------------
    def add_task(self, task: TaskId) -> None:
        task = TaskId.parse(task)
        if task not in self.tasks:
            self.tasks.append(task)
            self.tasks.sort()
        self.unpaired_gt.setdefault(task, [])
        self.unpaired_defected.setdefault(task, [])

    def _add(self, table: dict, entry: ImageEntry):
        if entry.id in self.gt or entry.id in self.defected:
            raise DataError(f"duplicate image id {entry.id!r}")
        self.add_task(entry.task)
        table[entry.id] = entry

    def add_gt(self, entry: ImageEntry) -> None:
        self._add(self.gt, entry)

    def add_defected(self, entry: ImageEntry) -> None:
        self._add(self.defected, entry)

    def add_pair(self, gt_id: str, defected_id: str, synthetic: bool = False) -> None:
        task = self.gt[gt_id].task
        if self.defected[defected_id].task != task:
            raise DataError(f"pair {gt_id}/{defected_id} mixes tasks")
        self.pairs.append(PairEntry(gt_id, defected_id, task, synthetic))

    def copy(self) -> "DatasetManifest":
        return DatasetManifest(
            tasks=list(self.tasks),
            gt=dict(self.gt),
            defected=dict(self.defected),
            pairs=list(self.pairs),
            unpaired_gt={k: list(v) for k, v in self.unpaired_gt.items()},
            unpaired_defected={k: list(v) for k, v in self.unpaired_defected.items()},
            version=self.version,
        )

    def merge(self, other: "DatasetManifest") -> "DatasetManifest":
        out = self.copy()
        for e in other.gt.values():
            out.add_gt(e)
        for e in other.defected.values():
            out.add_defected(e)
        out.pairs.extend(other.pairs)
        for t in other.tasks:
            out.add_task(t)
            out.unpaired_gt[t].extend(other.unpaired_gt.get(t, []))
            out.unpaired_defected[t].extend(other.unpaired_defected.get(t, []))
        out.canonicalize()
        return out

    def canonicalize(self) -> None:
        self.gt = dict(sorted(self.gt.items()))
        self.defected = dict(sorted(self.defected.items()))
        self.pairs.sort(key=lambda p: (int(p.task), p.synthetic, p.gt, p.defected))
        for table in (self.unpaired_gt, self.unpaired_defected):
            for t in table:
                table[t] = sorted(set(table[t]))

    # -- queries ------------------------------------------------------------
    def gt_ids(self, task) -> list[str]:
        task = TaskId.parse(task)
        return [i for i, e in self.gt.items() if e.task == task]

    def defected_ids(self, task, synthetic: bool | None = False) -> list[str]:
        task = TaskId.parse(task)
        return [i for i, e in self.defected.items()
                if e.task == task and (synthetic is None or e.synthetic == synthetic)]

    def pairs_for(self, task=None, synthetic: bool | None = None) -> list[PairEntry]:
        out = []
        for p in self.pairs:
            if task is not None and p.task != TaskId.parse(task):
                continue
            if synthetic is not None and p.synthetic != synthetic:
                continue
            out.append(p)
        return out

    def entry(self, image_id: str) -> ImageEntry:
        if image_id in self.gt:
            return self.gt[image_id]
        if image_id in self.defected:
            return self.defected[image_id]
        raise DataError(f"image id {image_id!r} not in manifest")

    def load(self, image_id: str, dtype=np.float32) -> np.ndarray:
        entry = self.entry(image_id)
        try:
            return read_pgm(entry.path).data.astype(dtype)
        except OSError as exc:
            raise DataError(f"cannot read image {image_id!r} at {entry.path}: {exc}") from exc

    def stack(self, ids, dtype=np.float32) -> np.ndarray:
        """Images as an (N, 1, H, W) array."""
        if not ids:
            raise DataError("no images to stack")
        return np.stack([self.load(i, dtype) for i in ids])[:, None]

    # -- serialisation ------------------------------------------------------
    def to_json_obj(self, root: Path) -> dict:
        self.canonicalize()

        def img(e: ImageEntry):
            d = {"id": e.id, "path": Path(os.path.relpath(e.path, root)).as_posix(), "task": e.task.label,
                 "seed": e.seed}
            if e.synthetic:
                d["synthetic"] = True
            return d

        return {
            "version": self.version,
            "tasks": [t.label for t in self.tasks],
            "images": {"gt": [img(e) for e in self.gt.values()],
                       "defected": [img(e) for e in self.defected.values()]},
            "pairs": [{"gt": p.gt, "defected": p.defected, "synthetic": p.synthetic, "task": p.task.label}
                      for p in self.pairs],
            "unpaired_gt": {t.label: self.unpaired_gt.get(t, []) for t in self.tasks},
            "unpaired_defected": {t.label: self.unpaired_defected.get(t, []) for t in self.tasks},
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = self.to_json_obj(path.parent.resolve())
        text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
        path.write_text(text, encoding="utf-8")
        return path

    @classmethod
    def from_json_obj(cls, obj: dict, root: Path, check_paths: bool = True) -> "DatasetManifest":
        if not isinstance(obj, dict) or "version" not in obj:
            raise FormatError("manifest must be a JSON object with a version field")
        if obj["version"] != MANIFEST_VERSION:
            raise FormatError(f"unsupported manifest version {obj['version']!r}")
        m = cls()
        for t in obj.get("tasks", []):
            m.add_task(TaskId.parse(t))
        images = obj.get("images", {})
        for role, add in (("gt", m.add_gt), ("defected", m.add_defected)):
            for d in images.get(role, []):
                p = (root / d["path"]).resolve()
                if check_paths and not p.is_file():
                    raise DataError(f"manifest image {d['id']!r} missing at {p}")
                add(ImageEntry(d["id"], p, TaskId.parse(d["task"]), d.get("seed"), bool(d.get("synthetic", False))))
        for d in obj.get("pairs", []):
            if d["gt"] not in m.gt or d["defected"] not in m.defected:
                raise DataError(f"pair {d['gt']}/{d['defected']} references an unlisted image")
            m.add_pair(d["gt"], d["defected"], bool(d.get("synthetic", False)))
        for key, table, pool in (("unpaired_gt", m.unpaired_gt, m.gt),
                                 ("unpaired_defected", m.unpaired_defected, m.defected)):
            for label, ids in obj.get(key, {}).items():
                task = TaskId.parse(label)
                m.add_task(task)
                for i in ids:
                    if i not in pool:
                        raise DataError(f"{key} lists unknown image {i!r}")
                table[task] = list(ids)
        m.canonicalize()
        return m

    @classmethod
    def load_file(cls, path, check_paths: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json_obj(obj, path.parent.resolve(), check_paths)
