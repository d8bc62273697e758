"""Concept vectors and the interpretable bottleneck pipeline.

For every concept, a linear SVM separates embeddings of clips carrying
the concept from a negative pool, and the unit normal of its hyperplane
becomes the concept's axis. Projecting a clip embedding onto the eight
axes yields an 8-dimensional, human-readable coordinate vector; a
decision tree or logistic regression trained on those coordinates
detects objectification while staying inspectable concept by concept.

Two negative pools are supported when fitting a concept axis: EN clips
only, or EN plus the S/HN clips that lack the concept. The second pool
removes the shortcut of separating "anything suggestive" from "nothing
suggestive" and is the harder setting.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .core import CONCEPTS, ClipLabel, Concept, EmbeddingTable, ObjLevel
from .errors import (
    DimensionMismatch,
    EmptyClass,
    InvariantViolation,
    PreconditionError,
)
from .harness import (
    EvalReport,
    FoldPlan,
    ModelKind,
    TaskConfig,
    balanced_train_sets,
    derive_seed,
    make_folds_from_ids,
    run_task,
)
from .models import (
    DecisionTree,
    LinearModel,
    Metrics,
    f1 as f1_score,
    train_logreg,
    train_svm,
    train_tree,
)

DEFAULT_C_GRID: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)


class NegativeMode(Enum):
    EN_ONLY = "en-only"
    EN_PLUS_WITHOUT = "en-plus-without"


@dataclass(frozen=True)
class CavCvConfig:
    """Fold layout for concept-axis fitting: the last of ``k`` folds is
    the held-out test fold and validation rotates over the first
    ``rotations`` remaining folds."""

    k: int = 10
    rotations: int = 8

    def __post_init__(self):
        if not 2 <= self.rotations <= self.k - 1:
            raise InvariantViolation(
                f"need 2 <= rotations <= k-1, got k={self.k}, rotations={self.rotations}"
            )


@dataclass(frozen=True)
class ConceptVector:
    """Unit normal and offset of one concept's separating hyperplane."""

    concept: Concept
    unit_normal: np.ndarray
    bias: float
    negative_mode: NegativeMode
    cv_f1: float

    def __post_init__(self):
        norm = float(np.linalg.norm(self.unit_normal))
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise InvariantViolation(f"normal must have unit norm, got {norm}")

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.unit_normal + self.bias

    def to_json(self) -> dict:
        return {
            "format": "gazelab-model/1",
            "kind": "cav",
            "concept": self.concept.label,
            "unit_normal": [float(v) for v in self.unit_normal],
            "bias": self.bias,
            "negative_mode": self.negative_mode.value,
            "cv_f1": self.cv_f1,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ConceptVector":
        if doc.get("kind") != "cav":
            raise ValueError(f"not a concept-vector document: {doc.get('kind')!r}")
        return cls(
            concept=Concept.from_label(doc["concept"]),
            unit_normal=np.array(doc["unit_normal"], dtype=np.float64),
            bias=float(doc["bias"]),
            negative_mode=NegativeMode(doc["negative_mode"]),
            cv_f1=float(doc["cv_f1"]),
        )


@dataclass(frozen=True)
class ConceptScores:
    clip_id: str
    scores: np.ndarray  # length 8, canonical concept order

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if arr.size != len(CONCEPTS):
            raise DimensionMismatch(self.clip_id, len(CONCEPTS), arr.size)
        object.__setattr__(self, "scores", arr)


def build_concept_sets(
    labels: Sequence[ClipLabel],
    concept: Concept,
    mode: NegativeMode = NegativeMode.EN_ONLY,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Positive and negative clip ids for one concept.

    Positives are S/HN clips carrying the concept. Negatives are the EN
    clips, plus (in the harder mode) the S/HN clips without it. The
    label set must not contain NS clips.
    """
    pos: list[str] = []
    neg: list[str] = []
    for lbl in labels:
        if lbl.level is ObjLevel.NS:
            raise PreconditionError("NS clips must be dropped before concept fitting")
        if lbl.level is ObjLevel.EN:
            neg.append(lbl.clip_id)
        elif concept in lbl.concepts:
            pos.append(lbl.clip_id)
        elif mode is NegativeMode.EN_PLUS_WITHOUT:
            neg.append(lbl.clip_id)
    if not pos:
        raise EmptyClass(concept.label, "positive")
    if not neg:
        raise EmptyClass(concept.label, "negative")
    return tuple(pos), tuple(neg)


def _balanced_draws(
    pos: Sequence[str], neg: Sequence[str], rng: np.random.Generator
) -> list[tuple[list[str], list[str]]]:
    """Disjoint negative sub-samples matching the positive count."""
    n_draws = max(1, len(neg) // len(pos))
    order = rng.permutation(len(neg))
    size = min(len(pos), len(neg))
    draws = []
    for i in range(n_draws):
        chunk = order[i * size : (i + 1) * size]
        draws.append((list(pos), [neg[j] for j in chunk]))
    return draws


def fit_cav(
    emb: EmbeddingTable,
    pos: Sequence[str],
    neg: Sequence[str],
    concept: Concept,
    mode: NegativeMode = NegativeMode.EN_ONLY,
    cv: CavCvConfig = CavCvConfig(),
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    seed: int = 0,
) -> ConceptVector:
    """Select the margin tolerance by cross-validation and fit the axis.

    Both classes split into ``cv.k`` folds; the last fold of each is
    held out as test. Validation rotates over the first ``cv.rotations``
    remaining folds, each rotation training on the other folds with
    balanced negative draws. The margin tolerance with the best mean
    validation F1 (ties to the smaller value) is refit on all non-test
    data; the returned score is the test-fold F1 of that refit model.

    Classes too small to fold (fewer than ``cv.k`` samples) skip the
    selection and fit once on everything with the grid's middle
    tolerance; the score is then the training F1.
    """
    if not pos or not neg:
        raise EmptyClass(concept.label, "positive" if not pos else "negative")

    def matrices(pos_ids: Sequence[str], neg_ids: Sequence[str]):
        X = emb.matrix(list(pos_ids) + list(neg_ids)).astype(np.float64)
        y = np.array([1] * len(pos_ids) + [0] * len(neg_ids), dtype=np.int64)
        return X, y

    def finish(model: LinearModel, score: float) -> ConceptVector:
        norm = float(np.linalg.norm(model.weights))
        if norm == 0.0:
            raise InvariantViolation(
                f"degenerate separator for concept {concept.label!r} (zero normal)"
            )
        return ConceptVector(
            concept=concept,
            unit_normal=model.weights / norm,
            bias=model.bias / norm,
            negative_mode=mode,
            cv_f1=score,
        )

    if len(pos) < cv.k or len(neg) < cv.k:
        X, y = matrices(pos, neg)
        c_mid = sorted(c_grid)[len(c_grid) // 2]
        model = train_svm(X, y, c=c_mid)
        return finish(model, f1_score(model.predict(X), y).f1)

    plan: FoldPlan = make_folds_from_ids({"pos": pos, "neg": neg}, k=cv.k, seed=seed)

    c_means: list[tuple[float, float]] = []
    for c in sorted(c_grid):
        scores: list[float] = []
        for rotation in range(cv.rotations):
            train_pos: list[str] = []
            train_neg: list[str] = []
            for fold in range(cv.k - 1):
                if fold == rotation:
                    continue
                train_pos.extend(plan.fold_ids("pos", fold))
                train_neg.extend(plan.fold_ids("neg", fold))
            val_X, val_y = matrices(
                plan.fold_ids("pos", rotation), plan.fold_ids("neg", rotation)
            )
            rng = np.random.default_rng(derive_seed(seed, 3, rotation))
            for draw_pos, draw_neg in _balanced_draws(train_pos, train_neg, rng):
                X, y = matrices(draw_pos, draw_neg)
                model = train_svm(X, y, c=c)
                scores.append(f1_score(model.predict(val_X), val_y).f1)
        c_means.append((c, float(np.mean(scores))))
    best_c = max(c_means, key=lambda item: item[1])[0]

    refit_pos = [cid for fold in range(cv.k - 1) for cid in plan.fold_ids("pos", fold)]
    refit_neg = [cid for fold in range(cv.k - 1) for cid in plan.fold_ids("neg", fold)]
    X, y = matrices(refit_pos, refit_neg)
    model = train_svm(X, y, c=best_c)
    test_X, test_y = matrices(
        plan.fold_ids("pos", plan.test_fold), plan.fold_ids("neg", plan.test_fold)
    )
    return finish(model, f1_score(model.predict(test_X), test_y).f1)


def fit_all_cavs(
    emb: EmbeddingTable,
    labels: Sequence[ClipLabel],
    mode: NegativeMode = NegativeMode.EN_ONLY,
    cv: CavCvConfig = CavCvConfig(),
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    seed: int = 0,
) -> list[ConceptVector]:
    """One concept vector per concept, in canonical order."""
    cavs = []
    for concept in CONCEPTS:
        pos, neg = build_concept_sets(labels, concept, mode)
        cavs.append(
            fit_cav(
                emb,
                pos,
                neg,
                concept,
                mode=mode,
                cv=cv,
                c_grid=c_grid,
                seed=derive_seed(seed, 4, int(concept)),
            )
        )
    return cavs


def _check_cavs(cavs: Sequence[ConceptVector]) -> None:
    if len(cavs) != len(CONCEPTS) or any(
        cav.concept is not concept for cav, concept in zip(cavs, CONCEPTS)
    ):
        raise InvariantViolation(
            "need one concept vector per concept, in canonical order"
        )


def concept_scores(x: np.ndarray, cavs: Sequence[ConceptVector]) -> np.ndarray:
    """Coordinates of an embedding in the concept subspace.

    Plain dot products with the unit normals; the hyperplane offsets
    are deliberately excluded (these are projection coordinates, not
    presence calls).
    """
    _check_cavs(cavs)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cavs[0].unit_normal.size:
        raise DimensionMismatch("<vector>", cavs[0].unit_normal.size, x.shape[-1])
    basis = np.stack([cav.unit_normal for cav in cavs])
    return x @ basis.T


def score_table(emb: EmbeddingTable, cavs: Sequence[ConceptVector]) -> dict[str, np.ndarray]:
    """Concept coordinates for every clip in the table."""
    _check_cavs(cavs)
    basis = np.stack([cav.unit_normal for cav in cavs])
    return {cid: emb[cid].astype(np.float64) @ basis.T for cid in emb.clip_ids()}


def concept_presence_f1(
    cav: ConceptVector,
    emb: EmbeddingTable,
    test_pos: Sequence[str],
    test_neg: Sequence[str],
    include_bias: bool = True,
) -> Metrics:
    """Score presence detection on held-out clips.

    Presence is a positive signed distance to the hyperplane; with
    ``include_bias=False`` the raw projection coordinate is thresholded
    at zero instead.
    """
    X = emb.matrix(list(test_pos) + list(test_neg)).astype(np.float64)
    y = np.array([1] * len(test_pos) + [0] * len(test_neg), dtype=np.int64)
    scores = X @ cav.unit_normal + (cav.bias if include_bias else 0.0)
    return f1_score((scores > 0).astype(np.int64), y)


@dataclass(frozen=True)
class PcbmResult:
    model: DecisionTree | LinearModel
    report: EvalReport


def train_pcbm(
    scores: Mapping[str, np.ndarray],
    labels: Sequence[ClipLabel],
    kind: ModelKind,
    train_negatives: ObjLevel = ObjLevel.EN,
    test_negatives: frozenset[ObjLevel] = frozenset({ObjLevel.EN}),
    seed: int = 0,
    k: int = 10,
    tree_max_depth: int = 10,
    logreg_l2: float = 1e-3,
) -> PcbmResult:
    """Interpretable classifier on concept coordinates.

    Reuses the task harness (folds, balanced draws, trivial baselines)
    with the 8-dimensional coordinates as features; the returned model
    is the one fitted on the last balanced draw, the report aggregates
    all draws.
    """
    if kind not in (ModelKind.PCBM_DT, ModelKind.PCBM_LR):
        raise InvariantViolation(f"kind must be PCBM_DT or PCBM_LR, got {kind}")
    cfg = TaskConfig(
        train_negatives=train_negatives,
        test_negatives=test_negatives,
        model=kind,
        seed=seed,
        k=k,
        tree_max_depth=tree_max_depth,
        logreg_l2=logreg_l2,
    )
    report = run_task(cfg, labels, scores)
    # Refit on the final draw so callers get an inspectable model.
    by_level: dict[ObjLevel, list[str]] = {}
    for lbl in labels:
        by_level.setdefault(lbl.level, []).append(lbl.clip_id)
    plan = make_folds_from_ids(by_level, k=k, seed=seed)
    pos_ids, neg_ids = balanced_train_sets(plan, ObjLevel.S, train_negatives)[-1]
    X = np.stack([scores[cid] for cid in list(pos_ids) + list(neg_ids)])
    y = np.array([1] * len(pos_ids) + [0] * len(neg_ids), dtype=np.int64)
    if kind is ModelKind.PCBM_DT:
        model = train_tree(X, y, max_depth=tree_max_depth)
    else:
        model = train_logreg(X, y, l2=logreg_l2, seed=derive_seed(seed, 5))
    return PcbmResult(model=model, report=report)


def export_tree_report(tree: DecisionTree, feature_names: Sequence[str] | None = None) -> str:
    """Readable rendering of a tree over named concept coordinates.

    One line per branch; internal branches show the split condition and
    the node majority, leaf branches end with the predicted class.
    """
    names = list(feature_names) if feature_names is not None else [c.label for c in CONCEPTS]
    if tree.n_features != len(names):
        raise DimensionMismatch("<tree>", len(names), tree.n_features)
    class_names = {0: "negative", 1: "positive"}

    lines: list[str] = []

    def describe(node) -> str:
        counts = node.class_counts
        return f"{class_names[node.majority]} ({int(counts[0])}/{int(counts[1])})"

    def walk(node, prefix: str) -> None:
        if node.is_leaf:
            return
        name = names[node.feature]
        for child, op in ((node.left, "<="), (node.right, ">")):
            head = f"{prefix}|--- {name} {op} {node.threshold:.4f}"
            if child.is_leaf:
                lines.append(f"{head}: {describe(child)}")
            else:
                lines.append(f"{head} [{describe(child)}]")
                walk(child, prefix + "|    ")

    if tree.root.is_leaf:
        lines.append(describe(tree.root))
    else:
        walk(tree.root, "")
    return "\n".join(lines) + "\n"
