"""On-disk formats for labeled datasets, reward traces and policy checkpoints.

Dataset (JSONL)
    line 1: ``{"format": "rmrl-dataset", "version": 1, "grid": {...}, "feature_dim": d}``
    then one record per line::

        {"scene_id": 3, "step": 0, "est_pose": [x, y, psi], "feature": [...],
         "action": [ix, iy, ipsi], "reward": r, "label": [ix, iy, ipsi]}

    Floats are written with Python's shortest round-trip repr, so reading
    back gives bit-identical values.

Checkpoint
    line 1: ASCII JSON header terminated by ``\\n``::

        {"format": "rmrl-checkpoint", "format_version": 1, "architecture": {...},
         "grid": {...}, "seed": s, "n_params": n}

    followed by exactly ``n`` little-endian float64 values.

Trace (CSV)
    columns ``step,scene_id,reward,ema_reward,phase``; ``step`` is 1-based and
    ``phase`` names the training phase that ran after that step.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .config import ActionGrid
from .env import Observation
from .geometry import PlanarPose
from .learn import LabeledRecord
from .policy import PolicyArchitecture, PolicyParams

DATASET_FORMAT = "rmrl-dataset"
DATASET_VERSION = 1
CHECKPOINT_FORMAT = "rmrl-checkpoint"
CHECKPOINT_VERSION = 1
TRACE_COLUMNS = ("step", "scene_id", "reward", "ema_reward", "phase")


class FormatError(ValueError):
    """A file does not match the expected format, version or grid."""


def grid_to_dict(grid: ActionGrid) -> dict:
    return dataclasses.asdict(grid)


def grid_from_dict(d: dict) -> ActionGrid:
    try:
        return ActionGrid(**d)
    except TypeError as exc:
        raise FormatError(f"invalid grid spec: {exc}") from exc


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- datasets ---------------------------------------------------------------

def _record_to_json(rec: LabeledRecord) -> str:
    d = {
        "scene_id": int(rec.scene_id),
        "step": int(rec.step),
        "est_pose": [rec.observation.est_pose.x, rec.observation.est_pose.y, rec.observation.est_pose.psi],
        "feature": [float(v) for v in rec.observation.feature],
        "action": None if rec.action is None else [int(i) for i in rec.action],
        "reward": None if rec.reward is None else float(rec.reward),
        "label": [int(i) for i in rec.label],
    }
    return json.dumps(d, allow_nan=False)


def _header_json(grid: ActionGrid, feature_dim: int) -> str:
    return json.dumps({
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "grid": grid_to_dict(grid),
        "feature_dim": int(feature_dim),
    })


def _check_indices(values, grid: ActionGrid, what: str, lineno: int):
    if len(values) != 3 or any(not (0 <= int(v) < n) for v, n in zip(values, grid.sizes)):
        raise FormatError(f"line {lineno}: {what} {values} outside grid sizes {grid.sizes}")


def _record_from_json(line: str, lineno: int, grid: ActionGrid, feature_dim: int) -> LabeledRecord:
    try:
        d = json.loads(line)
        est = PlanarPose(*d["est_pose"])
        feature = np.array(d["feature"], dtype=np.float64)
        label = tuple(int(i) for i in d["label"])
        action = None if d.get("action") is None else tuple(int(i) for i in d["action"])
        reward = None if d.get("reward") is None else float(d["reward"])
        scene_id, step = int(d["scene_id"]), int(d["step"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"line {lineno}: malformed record ({exc})") from exc
    if feature.shape != (feature_dim,):
        raise FormatError(f"line {lineno}: feature has length {feature.size}, header says {feature_dim}")
    _check_indices(label, grid, "label", lineno)
    if action is not None:
        _check_indices(action, grid, "action", lineno)
    return LabeledRecord(Observation(est, feature), label, scene_id, step, action, reward)


def write_dataset(path, records, grid: ActionGrid, feature_dim: int):
    lines = [_header_json(grid, feature_dim)] + [_record_to_json(r) for r in records]
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_dataset(path, expected_grid: ActionGrid | None = None):
    """Return ``(grid, feature_dim, records)``.

    Raises FormatError on a wrong format/version, a grid that differs from
    ``expected_grid``, or a malformed record (the message names the line).
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"line 1: malformed header ({exc})") from exc
    if header.get("format") != DATASET_FORMAT:
        raise FormatError(f"{path}: not a dataset file (format={header.get('format')!r})")
    if header.get("version") != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {header.get('version')!r}")
    grid = grid_from_dict(header["grid"])
    if expected_grid is not None and grid != expected_grid:
        raise FormatError(f"{path}: grid {grid.sizes} does not match expected {expected_grid.sizes}")
    feature_dim = int(header["feature_dim"])
    records = [
        _record_from_json(line, n, grid, feature_dim)
        for n, line in enumerate(lines[1:], start=2)
        if line.strip()
    ]
    return grid, feature_dim, records


class DatasetWriter:
    """Incrementally built dataset file; each scene lands in one atomic replace.

    Readers see either the file before an append or after it, never a partial
    scene.
    """

    def __init__(self, path, grid: ActionGrid, feature_dim: int):
        self.path = Path(path)
        self.grid = grid
        self.feature_dim = feature_dim
        self._lines = [_header_json(grid, feature_dim)]
        self._flush()

    def __len__(self):
        return len(self._lines) - 1

    def _flush(self):
        _atomic_write(self.path, ("\n".join(self._lines) + "\n").encode())

    def append_scene(self, records):
        records = list(records)
        if not records:
            return
        new_lines = []
        for rec in records:
            _check_indices(rec.label, self.grid, "label", len(self._lines) + len(new_lines) + 1)
            new_lines.append(_record_to_json(rec))
        self._lines.extend(new_lines)
        try:
            self._flush()
        except OSError:
            del self._lines[-len(new_lines):]
            raise


# --- checkpoints ------------------------------------------------------------

def write_checkpoint(path, params: PolicyParams, grid: ActionGrid, seed: int):
    header = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "architecture": params.arch.to_dict(),
        "grid": grid_to_dict(grid),
        "seed": int(seed),
        "n_params": int(params.vector.size),
    }
    blob = json.dumps(header).encode("ascii") + b"\n" + params.vector.astype("<f8").tobytes()
    _atomic_write(Path(path), blob)


def read_checkpoint(
    path,
    expected_grid: ActionGrid | None = None,
    expected_arch: PolicyArchitecture | None = None,
):
    """Return ``(params, grid, seed)`` from a checkpoint file."""
    blob = Path(path).read_bytes()
    head, sep, body = blob.partition(b"\n")
    if not sep:
        raise FormatError(f"{path}: truncated checkpoint (no header terminator)")
    try:
        header = json.loads(head.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed checkpoint header ({exc})") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint file")
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('format_version')!r}")
    arch = PolicyArchitecture.from_dict(header["architecture"])
    grid = grid_from_dict(header["grid"])
    n = int(header["n_params"])
    if n != arch.n_params:
        raise FormatError(f"{path}: header declares {n} parameters, architecture needs {arch.n_params}")
    if len(body) != 8 * n:
        raise FormatError(f"{path}: truncated checkpoint ({len(body)} of {8 * n} parameter bytes)")
    if expected_grid is not None and grid != expected_grid:
        raise FormatError(
            f"{path}: checkpoint grid {grid.sizes} does not match run grid {expected_grid.sizes}"
        )
    if expected_arch is not None and arch != expected_arch:
        raise FormatError(f"{path}: checkpoint architecture {arch} does not match run architecture {expected_arch}")
    vector = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return PolicyParams(vector, arch), grid, int(header["seed"])


# --- traces -----------------------------------------------------------------

def trace_csv(rewards, scene_ids, phases, ema_rewards) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for t, (r, sid, e, ph) in enumerate(zip(rewards, scene_ids, ema_rewards, phases), start=1):
        w.writerow([t, int(sid), repr(float(r)), repr(float(e)), ph])
    return buf.getvalue()


def write_trace(path, rewards, scene_ids, phases, ema_rewards):
    _atomic_write(Path(path), trace_csv(rewards, scene_ids, phases, ema_rewards).encode())


def read_trace(path) -> dict[str, list]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise FormatError(f"{path}: unexpected trace columns {reader.fieldnames}")
        out = {c: [] for c in TRACE_COLUMNS}
        for row in reader:
            out["step"].append(int(row["step"]))
            out["scene_id"].append(int(row["scene_id"]))
            out["reward"].append(float(row["reward"]))
            out["ema_reward"].append(float(row["ema_reward"]))
            out["phase"].append(row["phase"])
    return out
