"""Self-contained training kernels and classification metrics.

Everything downstream stages train lives here: a linear SVM and a
logistic regression fitted by deterministic full-batch (sub)gradient
descent, a CART decision tree, a two-layer MLP trained by seeded
mini-batch gradient descent, binary F1, and the closed-form F1 of
data-independent baselines. All trainers are pure functions of
(inputs, hyperparameters, seed); two runs produce bit-identical
models. Positive class is 1 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (
    BothZero,
    InvariantViolation,
    LengthMismatch,
    NonFiniteInput,
    NonFiniteLoss,
    PreconditionError,
    SingleClass,
)

MODEL_FORMAT = "gazelab-model/1"
MLP_HIDDEN = 128


def _check_binary_training_data(X: np.ndarray, y: np.ndarray) -> None:
    if not np.isfinite(X).all():
        raise NonFiniteInput("training matrix contains non-finite entries")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass(f"need both classes, got only {classes.tolist()}")
    if not np.isin(classes, (0, 1)).all():
        raise InvariantViolation(f"labels must be 0/1, got {classes.tolist()}")


class LinearKind(Enum):
    SVM = "svm"
    LOGISTIC = "logreg"


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: LinearKind

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)


def train_svm(
    X: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    seed: int = 0,
    max_iter: int = 2500,
) -> LinearModel:
    """L2-regularized hinge loss, regularization strength 1/(c*n).

    Full-batch subgradient descent with a staged step-size decay and
    best-objective tracking; deterministic from a zero start (``seed``
    is accepted for interface uniformity only).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_binary_training_data(X, y)
    n, dim = X.shape
    s = np.where(y == 1, 1.0, -1.0)
    lam = 1.0 / (c * n)

    def objective(w, b):
        margins = s * (X @ w + b)
        return 0.5 * lam * (w @ w) + np.maximum(0.0, 1.0 - margins).mean()

    w = np.zeros(dim)
    b = 0.0
    best_w, best_b = w.copy(), b
    best_obj = objective(w, b)
    mean_sq_norm = float((X * X).sum(axis=1).mean())
    eta0 = 1.0 / (1.0 + mean_sq_norm)

    stages = 5
    per_stage = max(1, max_iter // stages)
    for stage in range(stages):
        eta = eta0 / (5.0**stage)
        w, b = best_w.copy(), best_b
        stale = 0
        for _ in range(per_stage):
            margins = s * (X @ w + b)
            viol = margins < 1.0
            gw = lam * w - (s[viol] @ X[viol]) / n
            gb = -s[viol].sum() / n
            w -= eta * gw
            b -= eta * gb
            obj = objective(w, b)
            if obj < best_obj - 1e-12 * (1.0 + abs(best_obj)):
                best_obj = obj
                best_w, best_b = w.copy(), b
                stale = 0
            else:
                stale += 1
                if stale > 100:
                    break
    return LinearModel(weights=best_w, bias=float(best_b), kind=LinearKind.SVM)


def train_logreg(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
    seed: int = 0,
    max_iter: int = 10000,
    tol: float = 1e-6,
) -> LinearModel:
    """L2-penalized logistic regression by plain gradient descent.

    The bias is unpenalized. Stops when the gradient infinity norm
    drops below ``tol`` or at the iteration cap. Deterministic from a
    zero start (``seed`` accepted for interface uniformity only).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_binary_training_data(X, y)
    n, dim = X.shape
    s = np.where(y == 1, 1.0, -1.0)

    # Hessian spectral norm of the (weights, bias) system is bounded by
    # 0.25 * (||X||_F^2 + n) / n + l2; the +n term covers the bias column.
    lipschitz = 0.25 * (float((X * X).sum()) + n) / n + l2 + 1e-12
    step = 1.0 / lipschitz

    w = np.zeros(dim)
    b = 0.0
    for _ in range(max_iter):
        z = s * (X @ w + b)
        # sigmoid(-z), stable on both tails
        sig = np.exp(-np.logaddexp(0.0, z))
        gw = -(X.T @ (s * sig)) / n + l2 * w
        gb = -(s * sig).mean()
        if max(np.abs(gw).max(), abs(gb)) < tol:
            break
        w -= step * gw
        b -= step * gb
    return LinearModel(weights=w, bias=float(b), kind=LinearKind.LOGISTIC)


# --- CART ----------------------------------------------------------------


@dataclass
class TreeNode:
    class_counts: np.ndarray  # (2,) training samples per class at this node
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def majority(self) -> int:
        # Ties resolve to the lower class index.
        return int(np.argmax(self.class_counts))


@dataclass
class DecisionTree:
    root: TreeNode
    max_depth: int
    n_features: int

    def leaf(self, x: np.ndarray) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.leaf(x).majority for x in X], dtype=np.int64)

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def _best_split(
    X: np.ndarray, y: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Lowest weighted child Gini over every (feature, threshold).

    Candidate thresholds are midpoints between consecutive distinct
    values. Ties resolve to the lowest feature index, then the lowest
    threshold, by scanning in that order and requiring a strict
    improvement to switch.
    """
    n = y.size
    best: tuple[int, float, float] | None = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        vals = X[order, j]
        labels = y[order]
        distinct = np.flatnonzero(vals[:-1] != vals[1:])
        if distinct.size == 0:
            continue
        ones = np.cumsum(labels)
        left_n = distinct + 1
        right_n = n - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_ones = ones[distinct]
        right_ones = ones[-1] - left_ones
        g_left = 1.0 - (left_ones / left_n) ** 2 - ((left_n - left_ones) / left_n) ** 2
        g_right = (
            1.0 - (right_ones / right_n) ** 2 - ((right_n - right_ones) / right_n) ** 2
        )
        weighted = (left_n * g_left + right_n * g_right) / n
        weighted = np.where(valid, weighted, np.inf)
        score = float(weighted.min())
        if not np.isfinite(score):
            continue
        # Exact-math ties can differ by an ulp between candidates, so pick
        # the first candidate within tolerance of the minimum (lowest
        # threshold) and only switch features on a clear improvement.
        pos = int(np.flatnonzero(weighted <= score + 1e-12)[0])
        if best is None or score < best[2] - 1e-12:
            thr = float((vals[distinct[pos]] + vals[distinct[pos] + 1]) / 2.0)
            best = (j, thr, score)
    return best


def train_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int = 10,
    min_leaf: int = 1,
) -> DecisionTree:
    """CART with Gini impurity and an exhaustive per-feature split scan.

    Impure nodes split as long as depth and leaf-size limits allow,
    even when the best split does not reduce impurity immediately (a
    later level may); single-class data degenerates to one leaf.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("training matrix contains non-finite entries")
    if y.size < 2 * min_leaf:
        raise PreconditionError(
            f"need at least {2 * min_leaf} samples for min_leaf={min_leaf}, got {y.size}"
        )

    def counts_of(labels: np.ndarray) -> np.ndarray:
        return np.bincount(labels, minlength=2)[:2]

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        labels = y[rows]
        node = TreeNode(class_counts=counts_of(labels), depth=depth)
        if (
            depth >= max_depth
            or np.unique(labels).size < 2
            or rows.size < 2 * min_leaf
        ):
            return node
        found = _best_split(X[rows], labels, min_leaf)
        if found is None:
            return node
        j, thr, _ = found
        mask = X[rows, j] <= thr
        node.feature = j
        node.threshold = thr
        node.left = build(rows[mask], depth + 1)
        node.right = build(rows[~mask], depth + 1)
        return node

    root = build(np.arange(y.size), 0)
    return DecisionTree(root=root, max_depth=max_depth, n_features=X.shape[1])


# --- MLP -----------------------------------------------------------------


@dataclass
class MlpModel:
    """Two dense layers: ReLU hidden layer of 128 units, softmax pair out."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "MlpModel":
        return MlpModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        hidden = np.maximum(X @ self.w1 + self.b1, 0.0)
        logits = hidden @ self.w2 + self.b2
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.probabilities(X)[:, 1] > 0.5).astype(np.int64)

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        p = self.probabilities(X)[np.arange(len(y)), np.asarray(y, dtype=np.int64)]
        return float(-np.log(np.maximum(p, 1e-300)).mean())


def init_mlp(dim: int, seed: int) -> MlpModel:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
    rng = np.random.default_rng(seed)
    bound1 = 1.0 / np.sqrt(dim)
    bound2 = 1.0 / np.sqrt(MLP_HIDDEN)
    return MlpModel(
        w1=rng.uniform(-bound1, bound1, size=(dim, MLP_HIDDEN)),
        b1=rng.uniform(-bound1, bound1, size=MLP_HIDDEN),
        w2=rng.uniform(-bound2, bound2, size=(MLP_HIDDEN, 2)),
        b2=rng.uniform(-bound2, bound2, size=2),
    )


def mlp_gradient(
    model: MlpModel, X: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagation gradients of the mean cross-entropy on a batch."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} samples vs {y.shape[0]} labels")
    n = X.shape[0]
    z1 = X @ model.w1 + model.b1
    hidden = np.maximum(z1, 0.0)
    logits = hidden @ model.w2 + model.b2
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ model.w2.T
    dz1 = dhidden * (z1 > 0.0)
    dw1 = X.T @ dz1
    db1 = dz1.sum(axis=0)
    return dw1, db1, dw2, db2


@dataclass
class MlpTrainResult:
    model: MlpModel
    snapshots: list[MlpModel] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    epochs: int = 100,
    lr: float = 1e-3,
    batch: int = 32,
    seed: int = 0,
    keep_snapshots: bool = True,
) -> MlpTrainResult:
    """Mini-batch gradient descent on mean cross-entropy.

    Shuffling and initialization are driven by ``seed``; the result is
    bit-identical across runs. With ``keep_snapshots`` the parameters
    after each epoch are retained so a caller can pick the best epoch
    on a validation set. Zero epochs returns the initialization.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_binary_training_data(X, y)
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    model = init_mlp(X.shape[1], seed)
    result = MlpTrainResult(model=model)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            dw1, db1, dw2, db2 = mlp_gradient(model, X[idx], y[idx])
            model.w1 -= lr * dw1
            model.b1 -= lr * db1
            model.w2 -= lr * dw2
            model.b2 -= lr * db2
        loss = model.loss(X, y)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"training diverged (loss={loss}); lower the learning rate")
        result.epoch_losses.append(loss)
        if keep_snapshots:
            result.snapshots.append(model.copy())
    result.model = model
    return result


# --- metrics -------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support_positive(self) -> int:
        return self.tp + self.fn

    @property
    def support_negative(self) -> int:
        return self.fp + self.tn


def f1(preds: Sequence[int], labels: Sequence[int]) -> Metrics:
    """Binary F1 on the positive class; 0 when precision+recall is 0."""
    p = np.asarray(preds, dtype=np.int64)
    t = np.asarray(labels, dtype=np.int64)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.shape[0]} predictions vs {t.shape[0]} labels")
    tp = int(((p == 1) & (t == 1)).sum())
    fp = int(((p == 1) & (t == 0)).sum())
    fn = int(((p == 0) & (t == 1)).sum())
    tn = int(((p == 0) & (t == 0)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, score, tp, fp, fn, tn)


def trivial_baseline_f1(f_data: float, f_classifier: float) -> float:
    """F1 of a label-independent classifier.

    ``f_data`` is the positive fraction of the test set (the precision
    of any data-independent predictor), ``f_classifier`` the fraction
    it predicts positive (its recall).
    """
    if not (0.0 <= f_data <= 1.0 and 0.0 <= f_classifier <= 1.0):
        raise BothZero(f"fractions must be in [0, 1], got {(f_data, f_classifier)}")
    if f_data == 0.0 and f_classifier == 0.0:
        raise BothZero("both fractions are zero; F1 is undefined")
    return 2.0 * f_data * f_classifier / (f_data + f_classifier)


# --- serialization -------------------------------------------------------


def _node_to_json(node: TreeNode) -> dict:
    doc = {
        "class_counts": [int(c) for c in node.class_counts],
        "depth": node.depth,
    }
    if not node.is_leaf:
        doc.update(
            feature=node.feature,
            threshold=node.threshold,
            left=_node_to_json(node.left),
            right=_node_to_json(node.right),
        )
    return doc


def _node_from_json(doc: dict) -> TreeNode:
    node = TreeNode(
        class_counts=np.array(doc["class_counts"], dtype=np.int64),
        depth=doc["depth"],
    )
    if "feature" in doc:
        node.feature = doc["feature"]
        node.threshold = doc["threshold"]
        node.left = _node_from_json(doc["left"])
        node.right = _node_from_json(doc["right"])
    return node


def model_to_json(model) -> dict:
    """Versioned JSON document for inspection and replay."""
    if isinstance(model, LinearModel):
        return {
            "format": MODEL_FORMAT,
            "kind": model.kind.value,
            "dim": int(model.weights.size),
            "weights": [float(v) for v in model.weights],
            "bias": model.bias,
        }
    if isinstance(model, DecisionTree):
        return {
            "format": MODEL_FORMAT,
            "kind": "tree",
            "max_depth": model.max_depth,
            "n_features": model.n_features,
            "root": _node_to_json(model.root),
        }
    if isinstance(model, MlpModel):
        return {
            "format": MODEL_FORMAT,
            "kind": "mlp",
            "dim": int(model.w1.shape[0]),
            "hidden": int(model.w1.shape[1]),
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    kind = doc["kind"]
    if kind in (LinearKind.SVM.value, LinearKind.LOGISTIC.value):
        return LinearModel(
            weights=np.array(doc["weights"], dtype=np.float64),
            bias=float(doc["bias"]),
            kind=LinearKind(kind),
        )
    if kind == "tree":
        return DecisionTree(
            root=_node_from_json(doc["root"]),
            max_depth=doc["max_depth"],
            n_features=doc["n_features"],
        )
    if kind == "mlp":
        return MlpModel(
            w1=np.array(doc["w1"], dtype=np.float64),
            b1=np.array(doc["b1"], dtype=np.float64),
            w2=np.array(doc["w2"], dtype=np.float64),
            b2=np.array(doc["b2"], dtype=np.float64),
        )
    raise ValueError(f"unknown model kind {kind!r}")
