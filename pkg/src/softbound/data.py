"""Domain records, file formats and the seconds/frame-index mapping.

Two on-disk matrix formats are understood:

* ``EMB1`` binary: the magic bytes ``b"EMB1"``, little-endian ``u32`` rows,
  little-endian ``u32`` dim, then ``rows * dim`` little-endian float32 values
  in row-major order.
* CSV: one matrix row per line, comma separated decimals.

Annotations, supervision targets and predictions are JSON Lines files.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

EMB_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")

#: Marker key for metadata lines in annotation files; loaders skip them.
PROVENANCE_KEY = "_provenance"


class FormatError(ValueError):
    """A file did not match its declared format."""


class RecordError(ValueError):
    """A record violates a domain invariant."""


@dataclass(frozen=True)
class Segment:
    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise RecordError(f"segment bounds must be finite: {self.start}, {self.end}")
        if not self.start < self.end:
            raise RecordError(f"segment needs start < end, got [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class VideoRecord:
    """One annotated query over one video."""

    video_id: str
    duration_sec: float
    clip_stride_sec: float
    annotation: Segment
    query_text: str
    embeddings_path: Optional[str] = None

    def __post_init__(self):
        if not self.duration_sec > 0:
            raise RecordError(f"{self.video_id}: duration must be positive")
        if not self.clip_stride_sec > 0:
            raise RecordError(f"{self.video_id}: clip stride must be positive")
        if self.annotation.start < 0 or self.annotation.end > self.duration_sec:
            raise RecordError(
                f"{self.video_id}: annotation [{self.annotation.start}, "
                f"{self.annotation.end}] outside [0, {self.duration_sec}]"
            )
        if self.num_frames < 2:
            raise RecordError(f"{self.video_id}: needs at least 2 frames, got {self.num_frames}")

    @property
    def num_frames(self) -> int:
        return math.ceil(self.duration_sec / self.clip_stride_sec)

    def anchor_frames(self) -> tuple[int, int]:
        """Frame indices of the annotated start and end."""
        T = self.num_frames
        return (
            frame_of_time(self.annotation.start, self.clip_stride_sec, T),
            frame_of_time(self.annotation.end, self.clip_stride_sec, T),
        )

    def to_json(self) -> dict:
        out = {
            "video_id": self.video_id,
            "query": self.query_text,
            "start_sec": self.annotation.start,
            "end_sec": self.annotation.end,
            "duration_sec": self.duration_sec,
            "clip_stride_sec": self.clip_stride_sec,
        }
        if self.embeddings_path is not None:
            out["embeddings_path"] = self.embeddings_path
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "VideoRecord":
        required = ("video_id", "query", "start_sec", "end_sec", "duration_sec", "clip_stride_sec")
        missing = [k for k in required if k not in obj]
        if missing:
            raise RecordError(f"missing field(s): {', '.join(missing)}")
        return cls(
            video_id=str(obj["video_id"]),
            duration_sec=float(obj["duration_sec"]),
            clip_stride_sec=float(obj["clip_stride_sec"]),
            annotation=Segment(float(obj["start_sec"]), float(obj["end_sec"])),
            query_text=str(obj["query"]),
            embeddings_path=obj.get("embeddings_path"),
        )


@dataclass(frozen=True)
class ExpandedQuery:
    """An action query and its LLM-written start/end descriptions."""

    original: str
    start_desc: str
    end_desc: str
    source_model: str = ""
    swapped: bool = False

    def __post_init__(self):
        if not self.start_desc.strip() or not self.end_desc.strip():
            raise RecordError(f"empty boundary description for {self.original!r}")

    def swap(self) -> "ExpandedQuery":
        return replace(
            self, start_desc=self.end_desc, end_desc=self.start_desc, swapped=not self.swapped
        )

    def to_json(self) -> dict:
        return {
            "original": self.original,
            "start_desc": self.start_desc,
            "end_desc": self.end_desc,
            "source_model": self.source_model,
            "swapped": self.swapped,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExpandedQuery":
        return cls(
            original=obj["original"],
            start_desc=obj["start_desc"],
            end_desc=obj["end_desc"],
            source_model=obj.get("source_model", ""),
            swapped=bool(obj.get("swapped", False)),
        )


@dataclass(frozen=True, eq=False)
class SupervisionTarget:
    """Pseudo boundaries and per-frame probabilities for one record."""

    video_id: str
    s_prime: int
    e_prime: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise RecordError("probs must be a vector")
        T = probs.shape[0]
        if not 0 <= self.s_prime <= self.e_prime <= T - 1:
            raise RecordError(
                f"{self.video_id}: need 0 <= s'={self.s_prime} <= e'={self.e_prime} <= {T - 1}"
            )
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
            raise RecordError(f"{self.video_id}: probabilities must lie in [0, 1]")
        if not np.all(probs[self.s_prime : self.e_prime + 1] == 1.0):
            raise RecordError(f"{self.video_id}: probs must be 1 on [s', e']")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "s_prime", int(self.s_prime))
        object.__setattr__(self, "e_prime", int(self.e_prime))

    def __eq__(self, other):
        if not isinstance(other, SupervisionTarget):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and self.s_prime == other.s_prime
            and self.e_prime == other.e_prime
            and np.array_equal(self.probs, other.probs)
        )

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "s_prime": self.s_prime,
            "e_prime": self.e_prime,
            "probs": [_round_sig(p) for p in self.probs],
        }


def _round_sig(x: float, digits: int = 9) -> float:
    return float(f"{x:.{digits}g}")


def frame_of_time(t: float, stride: float, T: int) -> int:
    """Map a time in seconds to a clamped frame (feature row) index."""
    if t < 0 or stride <= 0:
        raise ValueError(f"need t >= 0 and stride > 0, got t={t}, stride={stride}")
    return min(max(int(math.floor(t / stride)), 0), T - 1)


# -- embedding matrices -------------------------------------------------------


def load_embeddings(path) -> np.ndarray:
    """Read an ``EMB1`` binary or CSV matrix file.

    The format is sniffed from the first four bytes.

    Returns:
        float64 array of shape ``(rows, dim)``.

    Raises:
        FormatError: malformed header, truncated payload, ragged CSV or a
            non-finite value. Messages carry a byte offset (binary) or a line
            number (CSV).
    """
    raw = Path(path).read_bytes()
    if raw[:4] == EMB_MAGIC:
        return _parse_binary(raw, path)
    return _parse_csv(raw.decode("utf-8"), path)


def _parse_binary(raw: bytes, path) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at byte offset {len(raw)}")
    _, rows, dim = _HEADER.unpack_from(raw, 0)
    if rows < 1 or dim < 1:
        raise FormatError(f"{path}: header declares rows={rows}, dim={dim} at byte offset 4")
    expected = _HEADER.size + 4 * rows * dim
    if len(raw) != expected:
        raise FormatError(
            f"{path}: dimension mismatch, header declares {rows}x{dim} "
            f"({expected} bytes) but file has {len(raw)} bytes"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, dim)
    bad = ~np.isfinite(data)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        offset = _HEADER.size + 4 * (r * dim + c)
        raise FormatError(f"{path}: non-finite value in row {r} at byte offset {offset}")
    return data.astype(np.float64)


def _parse_csv(text: str, path) -> np.ndarray:
    rows = []
    dim = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise FormatError(f"{path}:{lineno}: dimension mismatch, expected {dim} values, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"{path}:{lineno}: non-finite value in row {len(rows)}")
        rows.append(values)
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=np.float64)


def save_embeddings(matrix, path, fmt: str = "binary") -> None:
    """Write ``matrix`` as ``EMB1`` (``fmt="binary"``) or CSV."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    path = Path(path)
    if fmt == "binary":
        rows, dim = arr.shape
        payload = _HEADER.pack(EMB_MAGIC, rows, dim) + arr.astype("<f4").tobytes(order="C")
        path.write_bytes(payload)
    elif fmt == "csv":
        lines = (",".join(f"{v:.9g}" for v in row) for row in arr)
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


# -- JSON Lines ---------------------------------------------------------------


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def load_annotations(path, strict: bool = True) -> list[VideoRecord]:
    """Load annotation records from JSON Lines.

    Args:
        path: annotations file.
        strict: if True the first invalid line raises; otherwise invalid lines
            are logged and skipped.
    """
    records = []
    for lineno, obj in _iter_jsonl(path):
        if PROVENANCE_KEY in obj:
            continue
        try:
            records.append(VideoRecord.from_json(obj))
        except (RecordError, TypeError, ValueError) as exc:
            if strict:
                raise RecordError(f"{path}:{lineno}: {exc}") from None
            logger.warning("%s:%d: skipping invalid record: %s", path, lineno, exc)
    if not records:
        logger.warning("%s: no annotation records", path)
    return records


def save_annotations(records: Iterable[VideoRecord], path, provenance: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if provenance is not None:
            fh.write(json.dumps({PROVENANCE_KEY: provenance}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def save_supervision(targets: Iterable[SupervisionTarget], path) -> None:
    targets = list(targets)
    for t in targets:
        if not isinstance(t, SupervisionTarget):
            raise TypeError(f"expected SupervisionTarget, got {type(t).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        for t in targets:
            fh.write(json.dumps(t.to_json()) + "\n")


def load_supervision(path) -> list[SupervisionTarget]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            out.append(SupervisionTarget(obj["video_id"], obj["s_prime"], obj["e_prime"], obj["probs"]))
        except (KeyError, RecordError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def save_expansions(expansions: Iterable[ExpandedQuery], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for eq in expansions:
            fh.write(json.dumps(eq.to_json()) + "\n")


def load_expansions(path) -> list[ExpandedQuery]:
    return [ExpandedQuery.from_json(obj) for _, obj in _iter_jsonl(path)]
