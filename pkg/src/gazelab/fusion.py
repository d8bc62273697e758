"""Projection of free spans onto clip delimitations and annotator merging.

A span counts toward a clip when their overlap fraction reaches a
threshold (default 20%, measured against the clip duration). Each clip
takes the highest qualifying level, with the concept sets of the spans
at that level unioned; clips with no qualifying span default to EN.
Merging annotators repeats the same rule across timelines: the maximum
level wins and concepts are unioned only across the annotators that
chose it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .core import ClipDelimitation, ClipLabel, ObjLevel, SpanAnnotation
from .errors import (
    ClipSetMismatch,
    EmptyInput,
    FilmMismatch,
    InvariantViolation,
    UnannotatedFilmWarning,
)


class OverlapBasis(Enum):
    """Denominator of the overlap fraction."""

    CLIP_DURATION = "clip"
    SPAN_DURATION = "span"


@dataclass(frozen=True)
class ProjectionConfig:
    overlap_threshold: float = 0.2
    overlap_basis: OverlapBasis = OverlapBasis.CLIP_DURATION

    def __post_init__(self):
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise InvariantViolation(
                f"overlap threshold must be in (0, 1], got {self.overlap_threshold}"
            )


def overlap_fraction(
    span: SpanAnnotation, clip: ClipDelimitation, basis: OverlapBasis
) -> float:
    """Fraction of the basis duration covered by the span/clip intersection."""
    inter = min(span.end, clip.end) - max(span.start, clip.start)
    if inter <= 0:
        return 0.0
    denom = clip.duration if basis is OverlapBasis.CLIP_DURATION else span.duration
    return inter / denom


def project(
    spans: Sequence[SpanAnnotation],
    clips: Sequence[ClipDelimitation],
    cfg: ProjectionConfig = ProjectionConfig(),
    annotator_id: str | None = None,
) -> list[ClipLabel]:
    """Project one annotator's spans onto a film's clips.

    Every clip gets a label: the highest level among spans whose overlap
    fraction meets the threshold (concepts unioned across the spans at
    that level), or EN when nothing qualifies. An empty span list is the
    implicit all-EN timeline of an annotator who selected nothing; pass
    ``annotator_id`` to attribute it.
    """
    if spans:
        films = {s.film_id for s in spans} | {c.film_id for c in clips}
        if len(films) > 1:
            raise FilmMismatch(f"spans and clips cover several films: {sorted(films)}")
        annotators = {s.annotator_id for s in spans}
        if len(annotators) > 1:
            raise InvariantViolation(
                f"project expects a single annotator, got {sorted(annotators)}"
            )
        inferred = next(iter(annotators))
        if annotator_id is not None and annotator_id != inferred:
            raise InvariantViolation(
                f"annotator_id {annotator_id!r} does not match spans ({inferred!r})"
            )
        annotator_id = inferred
    provenance = frozenset() if annotator_id is None else frozenset({annotator_id})

    labels: list[ClipLabel] = []
    for clip in clips:
        qualifying = [
            s
            for s in spans
            if overlap_fraction(s, clip, cfg.overlap_basis) >= cfg.overlap_threshold
        ]
        if not qualifying:
            labels.append(ClipLabel(clip.clip_id, ObjLevel.EN, frozenset(), provenance))
            continue
        top = max(s.level for s in qualifying)
        concepts = frozenset().union(
            *(s.concepts for s in qualifying if s.level == top)
        )
        labels.append(ClipLabel(clip.clip_id, top, concepts, provenance))
    return labels


def merge(per_annotator: Sequence[tuple[str, Sequence[ClipLabel]]]) -> list[ClipLabel]:
    """Merge per-annotator timelines labeled on the identical clip set.

    Per clip, the merged level is the maximum over annotators and the
    merged concepts are the union over exactly the annotators at that
    maximum; those annotators form the provenance set.
    """
    if not per_annotator:
        raise EmptyInput("merge needs at least one annotator timeline")
    first_ids = [lbl.clip_id for lbl in per_annotator[0][1]]
    by_annotator: dict[str, dict[str, ClipLabel]] = {}
    for annotator_id, labels in per_annotator:
        table = {lbl.clip_id: lbl for lbl in labels}
        if set(table) != set(first_ids) or len(table) != len(labels):
            raise ClipSetMismatch(
                f"annotator {annotator_id!r} labels a different clip set"
            )
        by_annotator[annotator_id] = table

    merged: list[ClipLabel] = []
    for clip_id in first_ids:
        entries = [(aid, table[clip_id]) for aid, table in by_annotator.items()]
        top = max(lbl.level for _, lbl in entries)
        winners = [(aid, lbl) for aid, lbl in entries if lbl.level == top]
        concepts = frozenset().union(*(lbl.concepts for _, lbl in winners))
        annotators = frozenset(aid for aid, _ in winners)
        merged.append(ClipLabel(clip_id, top, concepts, annotators))
    return merged


def fuse(
    spans: Sequence[SpanAnnotation],
    clips: Sequence[ClipDelimitation],
    cfg: ProjectionConfig = ProjectionConfig(),
    annotators: Iterable[str] | None = None,
) -> tuple[dict[str, dict[str, list[ClipLabel]]], dict[str, list[ClipLabel]]]:
    """Project and merge a whole annotation export.

    Returns ``(projections, merged)`` where ``projections[film][annotator]``
    is that annotator's clip timeline and ``merged[film]`` the fused one.
    Annotators with no spans on a film are projected as implicit all-EN
    timelines when an explicit ``annotators`` roster is given; otherwise
    each film is merged over the annotators that touched it. Films whose
    clip index has no annotator at all are fused as all-EN with empty
    provenance.
    """
    spans_by_film: dict[str, dict[str, list[SpanAnnotation]]] = {}
    for s in spans:
        spans_by_film.setdefault(s.film_id, {}).setdefault(s.annotator_id, []).append(s)

    clips_by_film: dict[str, list[ClipDelimitation]] = {}
    for c in clips:
        clips_by_film.setdefault(c.film_id, []).append(c)

    roster = set(annotators) if annotators is not None else None
    projections: dict[str, dict[str, list[ClipLabel]]] = {}
    merged: dict[str, list[ClipLabel]] = {}
    for film_id in sorted(clips_by_film):
        film_clips = clips_by_film[film_id]
        film_annotators = sorted(spans_by_film.get(film_id, {}))
        if roster is not None:
            film_annotators = sorted(set(film_annotators) | roster)
        per_annotator: list[tuple[str, list[ClipLabel]]] = []
        film_proj: dict[str, list[ClipLabel]] = {}
        for aid in film_annotators:
            labels = project(
                spans_by_film.get(film_id, {}).get(aid, []),
                film_clips,
                cfg,
                annotator_id=aid,
            )
            film_proj[aid] = labels
            per_annotator.append((aid, labels))
        projections[film_id] = film_proj
        if per_annotator:
            merged[film_id] = merge(per_annotator)
        else:
            warnings.warn(
                f"film {film_id!r} has no annotations; fused as all-EN",
                UnannotatedFilmWarning,
                stacklevel=2,
            )
            merged[film_id] = project([], film_clips, cfg)
    return projections, merged


@dataclass(frozen=True)
class SweepRow:
    """Merged class counts for one overlap threshold."""

    threshold: float
    counts: Mapping[ObjLevel, int]
    deltas: Mapping[ObjLevel, int]


def sweep_thresholds(
    spans_by_annotator: Mapping[str, Sequence[SpanAnnotation]],
    clips: Sequence[ClipDelimitation],
    thresholds: Sequence[float],
    basis: OverlapBasis = OverlapBasis.CLIP_DURATION,
) -> list[SweepRow]:
    """Run project+merge at each threshold and tabulate level counts.

    Deltas are reported against the first threshold in the list.
    """
    if not thresholds:
        raise EmptyInput("no thresholds to sweep")
    all_spans = [s for spans in spans_by_annotator.values() for s in spans]
    rows: list[SweepRow] = []
    base: dict[ObjLevel, int] | None = None
    for t in thresholds:
        cfg = ProjectionConfig(overlap_threshold=t, overlap_basis=basis)
        _, merged = fuse(all_spans, clips, cfg, annotators=spans_by_annotator.keys())
        counts = {level: 0 for level in ObjLevel}
        for labels in merged.values():
            for lbl in labels:
                counts[lbl.level] += 1
        if base is None:
            base = counts
        deltas = {level: counts[level] - base[level] for level in ObjLevel}
        rows.append(SweepRow(threshold=t, counts=counts, deltas=deltas))
    return rows


def labels_as_spans(
    labels: Sequence[ClipLabel],
    clips: Sequence[ClipDelimitation],
    annotator_id: str,
) -> list[SpanAnnotation]:
    """Re-express clip labels as spans on the clip boundaries.

    EN clips become EN spans, so reprojecting at any threshold up to 1
    reproduces the input labels exactly (the spans are clip-aligned).
    """
    by_id = {c.clip_id: c for c in clips}
    spans = []
    for lbl in labels:
        clip = by_id[lbl.clip_id]
        spans.append(
            SpanAnnotation(
                film_id=clip.film_id,
                annotator_id=annotator_id,
                start=clip.start,
                end=clip.end,
                level=lbl.level,
                concepts=lbl.concepts,
            )
        )
    return spans
