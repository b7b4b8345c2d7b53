"""Plain-text and JSON file formats.

Frame / cloud file: one point per line, ``x y z nx ny nz part_id`` with an
optional eighth column holding the canonical point index; ``#`` starts a
comment, blank lines are ignored.

Pose record file (tracker results and ground truth share it): one line per
frame per part, ``frame part r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2 s0 s1
s2 energy keyframe_flag seconds``.

Model and sequence manifests are JSON; tracker configs are ``key = value``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from . import se3
from .cloud import PointCloud
from .errors import DataFormatError
from .kinopt import OptimizerConfig
from .model import CANONICAL_E1, CANONICAL_E2, ArticulatedModel, Joint, Part
from .tracker import FrameResult, TrackerConfig

RECORD_COLUMNS = 20


# -- point clouds ---------------------------------------------------------


def write_cloud(path: str | Path, cloud: PointCloud, header: str | None = None) -> None:
    with_index = cloud.canon_index is not None
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append("# x y z nx ny nz part_id" + (" canon_index" if with_index else ""))
    index = cloud.canon_index.tolist() if with_index else None
    for n, (p, q, lab) in enumerate(zip(cloud.points.tolist(), cloud.normals.tolist(), cloud.part_labels.tolist())):
        # repr of a Python float round-trips exactly
        row = f"{p[0]!r} {p[1]!r} {p[2]!r} {q[0]!r} {q[1]!r} {q[2]!r} {lab}"
        if index is not None:
            row += f" {index[n]}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def _rows(path: str | Path) -> list[list[str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            rows.append(body.split())
    return rows


def read_cloud(path: str | Path) -> PointCloud:
    rows = _rows(path)
    if not rows:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (7, 8):
        raise DataFormatError(f"{path}: every point line needs 7 or 8 columns")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric value") from exc
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path}: non-finite value")
    ints = data[:, 6:]
    if np.any(ints != np.round(ints)):
        raise DataFormatError(f"{path}: part_id and canon_index must be integers")
    index = data[:, 7].astype(np.int64) if data.shape[1] == 8 else None
    return PointCloud(data[:, :3], data[:, 3:6], data[:, 6].astype(np.int64), index)


# -- pose records -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PoseRecord:
    frame: int
    part: int
    pose: se3.Pose
    scale: NDArray[np.float64]
    energy: float = 0.0
    keyframe: bool = False
    seconds: float = 0.0


def format_record(rec: PoseRecord, timing: bool = True) -> str:
    vals = [*rec.pose.rotation.ravel(), *rec.pose.translation, *rec.scale, rec.energy]
    nums = " ".join(repr(float(v)) for v in vals)
    seconds = f"{rec.seconds:.6f}" if timing else "0"
    return f"{rec.frame} {rec.part} {nums} {int(rec.keyframe)} {seconds}"


def write_records(path: str | Path, records: list[PoseRecord], timing: bool = True) -> None:
    header = "# frame part r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2 s0 s1 s2 energy keyframe seconds"
    Path(path).write_text("\n".join([header, *(format_record(r, timing) for r in records)]) + "\n")


def read_records(path: str | Path) -> list[PoseRecord]:
    out = []
    for n, row in enumerate(_rows(path)):
        if len(row) != RECORD_COLUMNS:
            raise DataFormatError(f"{path}: record {n} has {len(row)} columns, expected {RECORD_COLUMNS}")
        try:
            frame, part = int(row[0]), int(row[1])
            vals = np.array(row[2:18], dtype=np.float64)
            flag, seconds = int(row[18]), float(row[19])
        except ValueError as exc:
            raise DataFormatError(f"{path}: record {n} is malformed") from exc
        pose = se3.Pose(vals[:9].reshape(3, 3), vals[9:12])
        if not pose.is_valid(1e-6):
            raise DataFormatError(f"{path}: record {n} does not hold a rotation matrix")
        out.append(PoseRecord(frame, part, pose, vals[12:15], float(vals[15]), bool(flag), seconds))
    return out


def records_by_frame(records: list[PoseRecord], n_parts: int) -> list[list[PoseRecord]]:
    """Group records into ``[frame][part]``; frames must be 0..F-1 with every part present."""
    if not records:
        return []
    n_frames = max(r.frame for r in records) + 1
    grid: list[list[PoseRecord | None]] = [[None] * n_parts for _ in range(n_frames)]
    for r in records:
        if not (0 <= r.part < n_parts) or r.frame < 0:
            raise DataFormatError(f"record for frame {r.frame} part {r.part} is out of range")
        if grid[r.frame][r.part] is not None:
            raise DataFormatError(f"duplicate record for frame {r.frame} part {r.part}")
        grid[r.frame][r.part] = r
    for f, row in enumerate(grid):
        if any(x is None for x in row):
            raise DataFormatError(f"frame {f} is missing part records")
    return grid  # type: ignore[return-value]


def results_to_records(results: list[FrameResult]) -> list[PoseRecord]:
    return [
        PoseRecord(r.frame_index, k, pose, np.asarray(r.scales[k]), r.energy, r.keyframe_updated, r.seconds)
        for r in results
        for k, pose in enumerate(r.poses)
    ]


def truth_records(poses: list[list[se3.Pose]], scales: list[NDArray[np.float64]]) -> list[PoseRecord]:
    return [
        PoseRecord(t, k, pose, np.asarray(scales[t][k]), 0.0, t == 0, 0.0)
        for t, frame in enumerate(poses)
        for k, pose in enumerate(frame)
    ]


# -- models and manifests ---------------------------------------------------


def _read_json(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read JSON from {path}: {exc}") from exc


def write_model(path: str | Path, model: ArticulatedModel) -> None:
    """Model manifest plus one canonical cloud file per part, next to it."""
    path = Path(path)
    parts = []
    for k, part in enumerate(model.parts):
        cloud_name = f"{path.stem}_part{k}.txt"
        write_cloud(path.parent / cloud_name, part.canonical, f"canonical cloud of part {k} ({part.name})")
        parts.append({"name": part.name, "cloud": cloud_name, "extents": part.extents.tolist(), "center": part.center.tolist()})
    joints = [
        {
            "type": j.type,
            "axis_point": j.axis_point.tolist(),
            "axis_dir": j.axis_dir.tolist(),
            "parent": j.parent,
            "child": j.child,
            "limits": list(j.limits),
        }
        for j in model.joints
    ]
    doc = {
        "name": model.name,
        "frame_convention": {"e1": CANONICAL_E1.tolist(), "e2": CANONICAL_E2.tolist()},
        "parts": parts,
        "joints": joints,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def read_model(path: str | Path) -> ArticulatedModel:
    path = Path(path)
    doc = _read_json(path)
    try:
        parts = []
        for k, p in enumerate(doc["parts"]):
            cloud = read_cloud(path.parent / p["cloud"])
            cloud = PointCloud(cloud.points, cloud.normals, np.full(len(cloud), k), cloud.canon_index)
            parts.append(Part(p["name"], cloud, np.asarray(p["extents"], dtype=np.float64), np.asarray(p["center"], dtype=np.float64)))
        joints = [
            Joint(j["type"], j["axis_point"], j["axis_dir"], int(j["parent"]), int(j["child"]), tuple(j.get("limits", (-np.inf, np.inf))))
            for j in doc["joints"]
        ]
        return ArticulatedModel(parts, joints, doc.get("name", "object"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"{path}: invalid model manifest: {exc}") from exc


@dataclass(frozen=True)
class SequenceManifest:
    model: Path
    frames: tuple[Path, ...]
    truth: Path
    seed: int = 0
    noise: dict = dataclasses.field(default_factory=dict)
    template: str = ""


def write_manifest(path: str | Path, manifest: SequenceManifest) -> None:
    base = Path(path).parent
    doc = {
        "template": manifest.template,
        "seed": manifest.seed,
        "noise": manifest.noise,
        "model": str(Path(manifest.model).relative_to(base)),
        "truth": str(Path(manifest.truth).relative_to(base)),
        "frames": [str(Path(f).relative_to(base)) for f in manifest.frames],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_manifest(path: str | Path) -> SequenceManifest:
    base = Path(path).parent
    doc = _read_json(path)
    try:
        return SequenceManifest(
            base / doc["model"],
            tuple(base / f for f in doc["frames"]),
            base / doc["truth"],
            int(doc.get("seed", 0)),
            dict(doc.get("noise", {})),
            str(doc.get("template", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: invalid sequence manifest: {exc}") from exc


# -- tracker config ---------------------------------------------------------


def _coerce(value: str, like: Any) -> Any:
    if isinstance(like, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def parse_config(text: str, base: TrackerConfig = TrackerConfig()) -> TrackerConfig:
    """``key = value`` lines over TrackerConfig fields; ``optimizer.<field>`` reaches the optimizer."""
    top: dict[str, Any] = {}
    opt: dict[str, Any] = {}
    top_fields = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    opt_fields = {f.name: getattr(base.optimizer, f.name) for f in dataclasses.fields(base.optimizer)}
    for n, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise DataFormatError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in body.split("=", 1))
        try:
            if key.startswith("optimizer."):
                name = key.split(".", 1)[1]
                if name not in opt_fields:
                    raise DataFormatError(f"config line {n}: unknown optimizer key {name!r}")
                opt[name] = _coerce(value, opt_fields[name])
            elif key in top_fields and key != "optimizer":
                top[key] = _coerce(value, top_fields[key])
            else:
                raise DataFormatError(f"config line {n}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"config line {n}: {exc}") from exc
    try:
        return dataclasses.replace(base, optimizer=dataclasses.replace(base.optimizer, **opt), **top)
    except ValueError as exc:
        raise DataFormatError(f"invalid config: {exc}") from exc


def read_config(path: str | Path, base: TrackerConfig = TrackerConfig()) -> TrackerConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base)


def format_config(config: TrackerConfig) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(config) if f.name != "optimizer"]
    lines += [f"optimizer.{f.name} = {getattr(config.optimizer, f.name)}" for f in dataclasses.fields(OptimizerConfig)]
    return "\n".join(lines) + "\n"
