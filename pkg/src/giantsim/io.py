"""CSV/JSON persistence, run manifests and resumable sweep execution."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError

# CSV comment stamp used when the config does not pin one; keeps reruns byte-identical
EPOCH_STAMP = "1970-01-01T00:00:00+00:00"
MANIFEST_NAME = "manifest.json"
POINTS_DIR = "points"


def format_number(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], stamp: str = EPOCH_STAMP) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# generated {stamp} by giantsim {__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_number(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a file written by ``write_csv``."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    body = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return header, body.reshape(-1, len(header))


def _plain(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: Path, doc: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def point_key(point: Mapping[str, Any]) -> str:
    blob = json.dumps(_plain(point), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    layout_hash: str | None = None
    version: str = __version__
    started_at: str = ""
    wall_clock_s: float = 0.0
    files: list[str] = field(default_factory=list)
    completed_points: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, asdict(self))

    @classmethod
    def load(cls, out_dir: Path) -> "RunManifest | None":
        path = Path(out_dir) / MANIFEST_NAME
        if not path.exists():
            return None
        doc = read_json(path)
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__ if k in doc})


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class SweepRunner:
    """Evaluates independent sweep points, optionally in a process pool.

    Each finished point is stored as ``points/<key>.json``; with ``resume`` a
    point listed in the previous manifest whose file is present is loaded
    instead of recomputed.  Results are returned in input order, so output
    files do not depend on scheduling.
    """

    def __init__(self, out_dir: Path, jobs: int = 1, resume: bool = False):
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        self.out_dir = Path(out_dir)
        self.jobs = jobs
        previous = RunManifest.load(self.out_dir) if resume else None
        self._done = set(previous.completed_points) if previous else set()
        self.completed: list[str] = []
        self.skipped = 0

    def _path(self, key: str) -> Path:
        return self.out_dir / POINTS_DIR / f"{key}.json"

    def run(self, fn: Callable[[dict], Any], points: Sequence[dict]) -> list[Any]:
        keys = [point_key(p) for p in points]
        results: list[Any] = [None] * len(points)
        todo = []
        for i, k in enumerate(keys):
            if k in self._done and self._path(k).exists():
                results[i] = read_json(self._path(k))["result"]
                self.skipped += 1
                self.completed.append(k)
            else:
                todo.append(i)
        if self.jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=min(self.jobs, len(todo))) as pool:
                fresh = list(pool.map(fn, [points[i] for i in todo]))
        else:
            fresh = [fn(points[i]) for i in todo]
        for i, res in zip(todo, fresh):
            res = _plain(res)
            write_json(self._path(keys[i]), {"point": points[i], "result": res})
            results[i] = res
            self.completed.append(keys[i])
        return results


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


class Stopwatch:
    def __init__(self) -> None:
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0
