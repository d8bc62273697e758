"""Domain model and wire formats for densely annotated film clips.

An annotation campaign produces, per annotator and film, freely
delimited timeline spans rated with one of four ordered levels:

* ``EN`` (easy negative): nothing suggestive on screen; no concept may
  be attached. Also the default for watched but unselected time.
* ``HN`` (hard negative): concept elements present without producing
  the overall effect.
* ``NS`` (not sure): borderline.
* ``S`` (sure): concept elements present and producing the effect.

Positive levels carry one or more of eight visual concepts (type of
shot, look, body, posture, clothing, appearance, expression of emotion,
activity). Downstream stages project spans onto fixed clip
delimitations and consume per-clip embedding vectors.

Three file formats are owned here, all bit-exact:

* annotation JSONL, one span per line with keys ``film``, ``annotator``,
  ``start``, ``end``, ``level``, ``concepts``;
* clip index CSV, ``clip_id,film_id,start_s,end_s`` without a header;
* embedding tables, either binary (magic ``OBYEMB01``, little-endian
  u32 dimension, then ``[u16 id length, UTF-8 id, dim float32]``
  records) or a CSV fallback ``clip_id,v0,...,v{dim-1}``.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    EmptyMatrix,
    InvariantViolation,
    MalformedRecord,
    MissingEmbedding,
    NonFiniteValue,
    OverlappingClips,
)

EMBEDDING_MAGIC = b"OBYEMB01"


class ObjLevel(IntEnum):
    """Objectification level, totally ordered EN < HN < NS < S.

    The integer value is the rank used by max-merging; the member name
    is the wire spelling.
    """

    EN = 0
    HN = 1
    NS = 2
    S = 3

    @classmethod
    def from_name(cls, name: str) -> "ObjLevel":
        try:
            return cls[name]
        except KeyError:
            raise InvariantViolation(f"unknown level {name!r}") from None


class Concept(IntEnum):
    """One of the eight visual concepts, in canonical index order.

    The canonical order fixes one-hot layouts and the axis order of the
    concept subspace everywhere in the package.
    """

    TYPE_OF_SHOT = 0
    LOOK = 1
    BODY = 2
    POSTURE = 3
    CLOTHING = 4
    APPEARANCE = 5
    EXPRESSION_OF_EMOTION = 6
    ACTIVITY = 7

    @property
    def label(self) -> str:
        return _CONCEPT_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Concept":
        try:
            return _CONCEPTS_BY_LABEL[label]
        except KeyError:
            raise InvariantViolation(f"unknown concept {label!r}") from None


_CONCEPT_LABELS = {
    Concept.TYPE_OF_SHOT: "TypeOfShot",
    Concept.LOOK: "Look",
    Concept.BODY: "Body",
    Concept.POSTURE: "Posture",
    Concept.CLOTHING: "Clothing",
    Concept.APPEARANCE: "Appearance",
    Concept.EXPRESSION_OF_EMOTION: "ExpressionOfEmotion",
    Concept.ACTIVITY: "Activity",
}
_CONCEPTS_BY_LABEL = {label: c for c, label in _CONCEPT_LABELS.items()}

#: All concepts in canonical order.
CONCEPTS: tuple[Concept, ...] = tuple(Concept)


def _check_level_concepts(level: ObjLevel, concepts: frozenset[Concept]) -> None:
    if level is ObjLevel.EN and concepts:
        raise InvariantViolation("no concept can be attached to an EN rating")
    if level is not ObjLevel.EN and not concepts:
        raise InvariantViolation(f"{level.name} rating requires at least one concept")


@dataclass(frozen=True)
class SpanAnnotation:
    """One freely delimited timeline span rated by one annotator."""

    film_id: str
    annotator_id: str
    start: float
    end: float
    level: ObjLevel
    concepts: frozenset[Concept]

    def __post_init__(self):
        object.__setattr__(self, "concepts", frozenset(self.concepts))
        if self.start < 0:
            raise InvariantViolation(f"negative start {self.start}")
        if not self.start < self.end:
            raise InvariantViolation(f"empty or inverted span [{self.start}, {self.end})")
        _check_level_concepts(self.level, self.concepts)

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ClipDelimitation:
    """A fixed clip boundary within a film."""

    clip_id: str
    film_id: str
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise InvariantViolation(
                f"clip {self.clip_id!r}: empty or inverted range [{self.start}, {self.end})"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ClipLabel:
    """A clip-aligned rating with aggregated concepts and provenance."""

    clip_id: str
    level: ObjLevel
    concepts: frozenset[Concept]
    annotators: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "concepts", frozenset(self.concepts))
        object.__setattr__(self, "annotators", frozenset(self.annotators))
        _check_level_concepts(self.level, self.concepts)


class EmbeddingTable:
    """Per-clip embedding vectors of one fixed dimension.

    Vectors are stored as float32, the width of the binary format, so
    binary and CSV round trips are both exact. Tables are immutable
    after construction and safe to share across workers.
    """

    def __init__(self, rows: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]):
        items = rows.items() if isinstance(rows, Mapping) else rows
        table: dict[str, np.ndarray] = {}
        dim: int | None = None
        for clip_id, vec in items:
            if clip_id in table:
                raise InvariantViolation(f"duplicate clip id {clip_id!r}")
            arr = np.asarray(vec, dtype=np.float32).reshape(-1)
            if dim is None:
                if arr.size == 0:
                    raise InvariantViolation(f"clip {clip_id!r}: empty vector")
                dim = arr.size
            elif arr.size != dim:
                raise DimensionMismatch(clip_id, dim, arr.size)
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise NonFiniteValue(clip_id, int(bad[0]))
            arr.flags.writeable = False
            table[clip_id] = arr
        if dim is None:
            raise InvariantViolation("embedding table has no rows")
        self._rows = table
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def rows(self) -> Mapping[str, np.ndarray]:
        return self._rows

    def clip_ids(self) -> tuple[str, ...]:
        return tuple(self._rows)

    def matrix(self, clip_ids: Iterable[str]) -> np.ndarray:
        """Stack the vectors of ``clip_ids`` into one (n, dim) array."""
        out = []
        for cid in clip_ids:
            if cid not in self._rows:
                raise MissingEmbedding(cid)
            out.append(self._rows[cid])
        return np.stack(out) if out else np.empty((0, self._dim), dtype=np.float32)

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self._rows

    def __getitem__(self, clip_id: str) -> np.ndarray:
        return self._rows[clip_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        if self._dim != other._dim or self._rows.keys() != other._rows.keys():
            return False
        return all(np.array_equal(v, other._rows[k]) for k, v in self._rows.items())


@dataclass(frozen=True)
class FrameTokenMatrix:
    """Per-frame token vectors of one clip, shape (frames, dim)."""

    clip_id: str
    tokens: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise EmptyMatrix(f"clip {self.clip_id!r}: need a non-empty (frames, dim) matrix")
        object.__setattr__(self, "tokens", arr)


def pool_frames(m: FrameTokenMatrix) -> np.ndarray:
    """Collapse frame tokens to a single vector by componentwise max."""
    if m.tokens.shape[0] < 1:
        raise EmptyMatrix(f"clip {m.clip_id!r}: no frames to pool")
    return m.tokens.max(axis=0)


# --- annotation JSONL ---------------------------------------------------

_ANNOTATION_KEYS = {"film", "annotator", "start", "end", "level", "concepts"}


def parse_annotations(text: str) -> list[SpanAnnotation]:
    """Parse annotation JSONL into spans, preserving line order.

    Raises MalformedRecord for lines that are not well-formed records
    and InvariantViolation (tagged with the line number) for records
    that break the domain rules.
    """
    spans: list[SpanAnnotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise MalformedRecord(lineno, f"invalid JSON ({e.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(lineno, "record is not a JSON object")
        missing = _ANNOTATION_KEYS - obj.keys()
        if missing:
            raise MalformedRecord(lineno, f"missing fields {sorted(missing)}")
        if not isinstance(obj["film"], str) or not isinstance(obj["annotator"], str):
            raise MalformedRecord(lineno, "film and annotator must be strings")
        if not isinstance(obj["start"], (int, float)) or not isinstance(obj["end"], (int, float)):
            raise MalformedRecord(lineno, "start and end must be numbers")
        if not isinstance(obj["level"], str) or not isinstance(obj["concepts"], list):
            raise MalformedRecord(lineno, "level must be a string, concepts an array")
        try:
            level = ObjLevel.from_name(obj["level"])
            concepts = frozenset(Concept.from_label(c) for c in obj["concepts"])
            span = SpanAnnotation(
                film_id=obj["film"],
                annotator_id=obj["annotator"],
                start=float(obj["start"]),
                end=float(obj["end"]),
                level=level,
                concepts=concepts,
            )
        except InvariantViolation as e:
            raise InvariantViolation(e.reason, line=lineno) from None
        spans.append(span)
    return spans


def serialize_annotations(spans: Iterable[SpanAnnotation]) -> str:
    """Inverse of parse_annotations, one JSON record per line."""
    lines = []
    for s in spans:
        obj = {
            "film": s.film_id,
            "annotator": s.annotator_id,
            "start": s.start,
            "end": s.end,
            "level": s.level.name,
            "concepts": [c.label for c in sorted(s.concepts)],
        }
        lines.append(json.dumps(obj))
    return "".join(line + "\n" for line in lines)


# --- clip index CSV ------------------------------------------------------


def parse_clip_index(text: str) -> list[ClipDelimitation]:
    """Parse a headerless ``clip_id,film_id,start_s,end_s`` CSV.

    Returns clips grouped by film and sorted by start within each film;
    overlapping or duplicate clips within a film are rejected.
    """
    clips: list[ClipDelimitation] = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise MalformedRecord(lineno, f"expected 4 columns, got {len(row)}")
        clip_id, film_id, start_s, end_s = (c.strip() for c in row)
        try:
            start, end = float(start_s), float(end_s)
        except ValueError:
            raise MalformedRecord(lineno, "start and end must be numbers") from None
        try:
            clips.append(ClipDelimitation(clip_id, film_id, start, end))
        except InvariantViolation as e:
            raise InvariantViolation(e.reason, line=lineno) from None

    by_film: dict[str, list[ClipDelimitation]] = {}
    for clip in clips:
        by_film.setdefault(clip.film_id, []).append(clip)
    ordered: list[ClipDelimitation] = []
    for film_id in sorted(by_film):
        film_clips = sorted(by_film[film_id], key=lambda c: (c.start, c.clip_id))
        seen: set[str] = set()
        for prev, cur in zip(film_clips, film_clips[1:]):
            if cur.start < prev.end:
                raise OverlappingClips(film_id, prev.clip_id, cur.clip_id)
        for clip in film_clips:
            if clip.clip_id in seen:
                raise InvariantViolation(
                    f"duplicate clip id {clip.clip_id!r} in film {film_id!r}"
                )
            seen.add(clip.clip_id)
        ordered.extend(film_clips)
    return ordered


def serialize_clip_index(clips: Iterable[ClipDelimitation]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for c in clips:
        writer.writerow([c.clip_id, c.film_id, repr(float(c.start)), repr(float(c.end))])
    return out.getvalue()


# --- embedding tables ----------------------------------------------------


def load_embeddings(data: bytes) -> EmbeddingTable:
    """Load an embedding table from either wire encoding.

    Payloads starting with the 8-byte magic are decoded as binary;
    anything else must be UTF-8 CSV text.
    """
    if data[:8] == EMBEDDING_MAGIC:
        return _load_embeddings_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise BadMagic("payload is neither magic-prefixed binary nor UTF-8 CSV") from None
    return _load_embeddings_csv(text)


def _load_embeddings_binary(data: bytes) -> EmbeddingTable:
    if len(data) < 12:
        raise MalformedRecord(0, "binary payload truncated before header")
    (dim,) = struct.unpack_from("<I", data, 8)
    if dim == 0:
        raise MalformedRecord(0, "dimension must be positive")
    offset = 12
    rows: list[tuple[str, np.ndarray]] = []
    record = 0
    while offset < len(data):
        record += 1
        if offset + 2 > len(data):
            raise MalformedRecord(record, "truncated id length")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len > len(data):
            raise MalformedRecord(record, "truncated clip id")
        try:
            clip_id = data[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedRecord(record, "clip id is not valid UTF-8") from None
        offset += id_len
        vec_bytes = 4 * dim
        if offset + vec_bytes > len(data):
            raise MalformedRecord(record, "truncated vector")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        rows.append((clip_id, vec))
    return EmbeddingTable(rows)


def _load_embeddings_csv(text: str) -> EmbeddingTable:
    rows: list[tuple[str, np.ndarray]] = []
    dim: int | None = None
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 2:
            raise MalformedRecord(lineno, "expected clip_id followed by components")
        clip_id = row[0]
        try:
            vec = np.array([float(v) for v in row[1:]], dtype=np.float64)
        except ValueError:
            raise MalformedRecord(lineno, "non-numeric component") from None
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise DimensionMismatch(clip_id, dim, vec.size)
        bad = np.flatnonzero(~np.isfinite(vec))
        if bad.size:
            raise NonFiniteValue(clip_id, int(bad[0]))
        rows.append((clip_id, vec.astype(np.float32)))
    return EmbeddingTable(rows)


def dump_embeddings(table: EmbeddingTable, encoding: str = "binary") -> bytes:
    """Serialize a table; ``encoding`` is ``"binary"`` or ``"csv"``."""
    if encoding == "binary":
        parts = [EMBEDDING_MAGIC, struct.pack("<I", table.dim)]
        for clip_id in table.clip_ids():
            idb = clip_id.encode("utf-8")
            if len(idb) > 0xFFFF:
                raise InvariantViolation(f"clip id too long for binary encoding: {clip_id!r}")
            parts.append(struct.pack("<H", len(idb)))
            parts.append(idb)
            parts.append(table[clip_id].astype("<f4").tobytes())
        return b"".join(parts)
    if encoding == "csv":
        lines = []
        for clip_id in table.clip_ids():
            if "," in clip_id or "\n" in clip_id or '"' in clip_id:
                raise InvariantViolation(
                    f"clip id {clip_id!r} needs quoting; use the binary encoding"
                )
            comps = ",".join(repr(float(v)) for v in table[clip_id])
            lines.append(f"{clip_id},{comps}")
        return ("".join(line + "\n" for line in lines)).encode("utf-8")
    raise ValueError(f"unknown encoding {encoding!r}")
