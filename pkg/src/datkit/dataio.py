"""Frames and annotations in portable, codec-free formats.

Frames live on disk as binary portable graymaps (P5, maxval 255); color
pixmaps (P6) are accepted on input and reduced to grayscale with integer
luminance ``(77 R + 150 G + 29 B) >> 8``.  Annotations are a small CSV with
header ``frame,category,x,y,w,h``.  A sequence directory holds
``frame_%06d.pgm`` files plus ``annotations.csv``.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundingBox, Category

FRAME_FILE_PATTERN = "frame_%06d.pgm"
ANNOTATIONS_FILE = "annotations.csv"
ANNOTATION_HEADER = "frame,category,x,y,w,h"


class FormatError(ValueError):
    """Malformed pixmap bytes."""


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation data."""


class SequenceError(ValueError):
    """A sequence directory that violates the layout contract."""


@dataclass(frozen=True)
class Frame:
    """One grayscale frame; pixels are a (height, width) uint8 array."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ValueError("frame pixels must be a 2-D uint8 array")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("frame dimensions must be >= 1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class AnnotationRecord:
    frame_index: int
    category: Category
    box: BoundingBox


def _read_header_tokens(data: bytes, count: int) -> Tuple[List[int], int]:
    """Read `count` whitespace-separated integer tokens after the magic,
    honoring '#' comments; returns (tokens, offset past the single
    whitespace byte that terminates the header)."""
    pos = 2  # past the 2-byte magic
    tokens: List[int] = []
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol == -1:
                raise FormatError("unterminated comment in pixmap header")
            pos = eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise FormatError("truncated pixmap header")
        if not re.fullmatch(rb"\d+", token):
            raise FormatError(f"non-numeric pixmap header field: {token!r}")
        tokens.append(int(token))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("pixmap header not terminated by whitespace")
    return tokens, pos + 1


def read_pixmap_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """Parse a P5/P6 header: (magic, width, height, maxval, raster offset)."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported pixmap magic: {magic!r}")
    (width, height, maxval), offset = _read_header_tokens(data, 3)
    if width < 1 or height < 1:
        raise FormatError(f"invalid pixmap size: {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported pixmap maxval: {maxval} (only 255)")
    return magic, width, height, maxval, offset


def decode_pixmap(data: bytes, index: int = 0) -> Frame:
    """Decode P5 (grayscale) or P6 (color, reduced by luminance) bytes."""
    magic, width, height, _, offset = read_pixmap_header(data)
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    raster = data[offset : offset + expected]
    if len(raster) < expected:
        raise FormatError(
            f"truncated pixmap payload: expected {expected} bytes, got {len(raster)}"
        )
    samples = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        pixels = samples.reshape(height, width).copy()
    else:
        rgb = samples.reshape(height, width, 3).astype(np.uint32)
        pixels = ((77 * rgb[:, :, 0] + 150 * rgb[:, :, 1] + 29 * rgb[:, :, 2]) >> 8).astype(
            np.uint8
        )
    return Frame(index=index, pixels=pixels)


def encode_pixmap(frame: Frame) -> bytes:
    """Canonical P5 encoding: single-space header fields, LF terminated."""
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + frame.pixels.tobytes()


def parse_annotations(text: str) -> List[AnnotationRecord]:
    """Parse annotation CSV text; raises AnnotationError with a line number."""
    lines = text.split("\n")
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise AnnotationError(
            f"line 1: expected header {ANNOTATION_HEADER!r}, got {lines[0].strip()!r}"
        )
    records: List[AnnotationRecord] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise AnnotationError(f"line {number}: expected 6 fields, got {len(parts)}")
        raw_frame, raw_cat, *raw_box = [p.strip() for p in parts]
        try:
            frame_index = int(raw_frame)
            x, y, w, h = (float(v) for v in raw_box)
        except ValueError:
            raise AnnotationError(f"line {number}: non-numeric field in {line!r}") from None
        if frame_index < 0:
            raise AnnotationError(f"line {number}: negative frame index {frame_index}")
        try:
            category = Category(raw_cat)
        except ValueError:
            raise AnnotationError(f"line {number}: unknown category {raw_cat!r}") from None
        if w <= 0 or h <= 0:
            raise AnnotationError(f"line {number}: non-positive box size {w}x{h}")
        records.append(AnnotationRecord(frame_index, category, BoundingBox(x, y, w, h)))
    return records


def emit_annotations(records: Sequence[AnnotationRecord]) -> str:
    """Canonical annotation CSV: sorted by (frame, category), LF endings."""
    ordered = sorted(records, key=lambda r: (r.frame_index, r.category.value))
    lines = [ANNOTATION_HEADER]
    for rec in ordered:
        b = rec.box
        lines.append(
            f"{rec.frame_index},{rec.category.value},{b.x!r},{b.y!r},{b.w!r},{b.h!r}"
        )
    return "\n".join(lines) + "\n"


def _check_wearer_uniqueness(records: Sequence[AnnotationRecord]) -> None:
    seen: set = set()
    for rec in records:
        if rec.category not in (Category.LEFT, Category.RIGHT):
            continue
        key = (rec.frame_index, rec.category)
        if key in seen:
            raise AnnotationError(
                f"frame {rec.frame_index}: duplicate {rec.category.value} annotation"
            )
        seen.add(key)


@dataclass
class FrameSequence:
    """An ordered run of frames plus ground-truth annotations.

    Frames load lazily through `_loader`; iteration decodes one frame at a
    time so long sequences never sit in memory at once.
    """

    n_frames: int
    canvas: Tuple[int, int]  # (width, height)
    annotations: List[AnnotationRecord]
    participant_id: str = ""
    sequence_id: str = ""
    _loader: Callable[[int], Frame] = field(default=None, repr=False)
    _gt_index: Dict[Tuple[int, Category], AnnotationRecord] = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.n_frames < 0:
            raise SequenceError("frame count must be non-negative")
        width, height = self.canvas
        for rec in self.annotations:
            if not 0 <= rec.frame_index < self.n_frames:
                raise SequenceError(
                    f"annotation references frame {rec.frame_index}, "
                    f"but the sequence has frames 0..{self.n_frames - 1}"
                )
            b = rec.box
            if b.x < 0 or b.y < 0 or b.x2 > width or b.y2 > height:
                raise SequenceError(
                    f"frame {rec.frame_index}: annotation box "
                    f"({b.x}, {b.y}, {b.w}, {b.h}) outside {width}x{height} canvas"
                )
        _check_wearer_uniqueness(self.annotations)
        self._gt_index = {}
        for rec in self.annotations:
            if rec.category in (Category.LEFT, Category.RIGHT):
                self._gt_index[(rec.frame_index, rec.category)] = rec

    def __len__(self) -> int:
        return self.n_frames

    def frame(self, index: int) -> Frame:
        if not 0 <= index < self.n_frames:
            raise IndexError(f"frame index {index} out of range 0..{self.n_frames - 1}")
        return self._loader(index)

    def iter_frames(self) -> Iterator[Frame]:
        for index in range(self.n_frames):
            yield self._loader(index)

    def gt_box(self, frame_index: int, category: Category) -> Optional[BoundingBox]:
        rec = self._gt_index.get((frame_index, category))
        return rec.box if rec else None

    def annotated_frames(self, category: Category) -> List[int]:
        return sorted(i for (i, c) in self._gt_index if c is category)


def from_frames(
    frames: Sequence[Frame],
    annotations: Sequence[AnnotationRecord],
    participant_id: str = "",
    sequence_id: str = "",
) -> FrameSequence:
    """Wrap in-memory frames as a FrameSequence."""
    if not frames:
        raise SequenceError("a sequence needs at least one frame")
    canvas = (frames[0].width, frames[0].height)
    frame_list = list(frames)
    return FrameSequence(
        n_frames=len(frame_list),
        canvas=canvas,
        annotations=list(annotations),
        participant_id=participant_id,
        sequence_id=sequence_id,
        _loader=lambda i: frame_list[i],
    )


def open_sequence(directory: str | Path) -> FrameSequence:
    """Open a sequence directory, validating layout eagerly but decoding
    frame rasters lazily (at most one decoded frame per consumer step)."""
    root = Path(directory)
    if not root.is_dir():
        raise SequenceError(f"not a directory: {root}")
    indices = sorted(
        int(m.group(1))
        for m in (re.fullmatch(r"frame_(\d{6})\.pgm", p.name) for p in root.iterdir())
        if m
    )
    if not indices:
        raise SequenceError(f"no frame_%06d.pgm files in {root}")
    missing = sorted(set(range(indices[-1] + 1)) - set(indices))
    if missing:
        shown = ", ".join(str(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise SequenceError(f"gap in frame numbering; missing indices: {shown}{more}")
    n_frames = len(indices)

    ann_path = root / ANNOTATIONS_FILE
    if not ann_path.is_file():
        raise SequenceError(f"missing {ANNOTATIONS_FILE} in {root}")
    annotations = parse_annotations(ann_path.read_text(encoding="utf-8"))

    # Canvas comes from frame 0's header alone; the raster stays on disk.
    with open(root / (FRAME_FILE_PATTERN % 0), "rb") as fh:
        head = fh.read(512)
    _, width, height, _, _ = read_pixmap_header(head)

    def load(index: int) -> Frame:
        data = (root / (FRAME_FILE_PATTERN % index)).read_bytes()
        frame = decode_pixmap(data, index=index)
        if (frame.width, frame.height) != (width, height):
            raise SequenceError(
                f"frame {index} is {frame.width}x{frame.height}, "
                f"expected {width}x{height}"
            )
        return frame

    return FrameSequence(
        n_frames=n_frames,
        canvas=(width, height),
        annotations=annotations,
        participant_id="",
        sequence_id=root.name,
        _loader=load,
    )


def write_sequence(seq: FrameSequence, directory: str | Path) -> None:
    """Materialize a sequence as canonical PGMs + annotations.csv."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for frame in seq.iter_frames():
        (root / (FRAME_FILE_PATTERN % frame.index)).write_bytes(encode_pixmap(frame))
    (root / ANNOTATIONS_FILE).write_text(
        emit_annotations(seq.annotations), encoding="utf-8"
    )
