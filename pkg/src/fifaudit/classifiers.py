"""Black-box binary predictors consumed by the audit.

Every predictor maps a Dataset to a vector of hard {0,1} predictions.
Predictors are pure: the same rows always yield the same bits, and the
label column is never read at prediction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import DataError, SchemaError, TrainingError


class Predictor:
    """Evaluation contract: one {0,1} prediction per dataset row."""

    tag = "abstract"

    def predict(self, d: Dataset) -> np.ndarray:
        raise NotImplementedError

    def positive_fraction(self, d: Dataset) -> float:
        w = d.effective_weights()
        return float(np.sum(w * self.predict(d)) / np.sum(w))


# ---------------------------------------------------------------------------
# Fixed threshold trees (the DT1 / DT2 classifiers of the insurance example)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeNode:
    """Internal node: go to `ge` when feature >= threshold, else `lt`."""

    feature: str
    threshold: float
    ge: "TreeNode | int"
    lt: "TreeNode | int"

    def to_dict(self):
        def enc(child):
            return {"leaf": child} if isinstance(child, int) else child.to_dict()

        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "ge": enc(self.ge),
            "lt": enc(self.lt),
        }

    @classmethod
    def from_dict(cls, raw) -> "TreeNode | int":
        if "leaf" in raw:
            leaf = int(raw["leaf"])
            if leaf not in (0, 1):
                raise SchemaError(f"tree leaf must be 0 or 1, got {raw['leaf']!r}")
            return leaf
        try:
            return cls(
                feature=raw["feature"],
                threshold=float(raw["threshold"]),
                ge=cls.from_dict(raw["ge"]),
                lt=cls.from_dict(raw["lt"]),
            )
        except KeyError as exc:
            raise SchemaError(f"tree node is missing key {exc}") from exc


class ThresholdTree(Predictor):
    """Fixed decision tree over named features; no training involved."""

    tag = "fixed-tree"

    def __init__(self, root: TreeNode):
        if isinstance(root, int):
            raise SchemaError("tree root must be an internal node")
        self.root = root

    def _features(self, node, acc):
        if isinstance(node, int):
            return acc
        acc.add(node.feature)
        self._features(node.ge, acc)
        self._features(node.lt, acc)
        return acc

    def predict(self, d: Dataset) -> np.ndarray:
        unknown = self._features(self.root, set()) - set(d.schema.feature_names)
        if unknown:
            raise SchemaError(f"tree references unknown features: {sorted(unknown)}")
        out = np.empty(d.n_rows, dtype=np.int8)
        cols = {name: d.feature_column(name) for name in self._features(self.root, set())}
        for i in range(d.n_rows):
            node = self.root
            while not isinstance(node, int):
                node = node.ge if cols[node.feature][i] >= node.threshold else node.lt
            out[i] = node
        return out

    def to_json(self, path=None):
        payload = self.root.to_dict()
        if path is None:
            return json.dumps(payload, indent=2, sort_keys=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return None

    @classmethod
    def from_json(cls, path) -> "ThresholdTree":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read tree spec {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"tree spec {path} is not valid JSON: {exc}") from exc
        return cls(TreeNode.from_dict(raw))


def build_fixed_tree(root: TreeNode) -> ThresholdTree:
    return ThresholdTree(root)


def insurance_tree_dt1() -> ThresholdTree:
    """fitness >= 0.61 ? (income >= 0.29) : (income >= 0.69)"""
    return ThresholdTree(TreeNode(
        feature="fitness", threshold=0.61,
        ge=TreeNode(feature="income", threshold=0.29, ge=1, lt=0),
        lt=TreeNode(feature="income", threshold=0.69, ge=1, lt=0),
    ))


def insurance_tree_dt2() -> ThresholdTree:
    """DT1 with the low-fitness income threshold relaxed to 0.555."""
    return ThresholdTree(TreeNode(
        feature="fitness", threshold=0.61,
        ge=TreeNode(feature="income", threshold=0.29, ge=1, lt=0),
        lt=TreeNode(feature="income", threshold=0.555, ge=1, lt=0),
    ))


# ---------------------------------------------------------------------------
# Logistic regression (weighted IRLS, zero initialization)
# ---------------------------------------------------------------------------

def _design(d: Dataset, include_sensitive: bool):
    cols = [np.ones((d.n_rows, 1)), d.x]
    if include_sensitive:
        for j in range(d.a.shape[1]):
            values = sorted(set(d.a[:, j]))
            for v in values[1:]:  # drop first level to avoid collinearity
                cols.append((d.a[:, j] == v).astype(np.float64).reshape(-1, 1))
    return np.hstack(cols)


class LogisticModel(Predictor):
    tag = "logistic"

    def __init__(self, coef: np.ndarray, include_sensitive: bool,
                 sensitive_levels, converged: bool, iterations: int):
        self.coef = coef
        self.include_sensitive = include_sensitive
        self.sensitive_levels = sensitive_levels
        self.converged = converged
        self.iterations = iterations

    def decision_values(self, d: Dataset) -> np.ndarray:
        return _design(d, self.include_sensitive) @ self.coef

    def predict(self, d: Dataset) -> np.ndarray:
        return (self.decision_values(d) >= 0.0).astype(np.int8)

    def to_dict(self):
        return {
            "tag": self.tag,
            "coef": self.coef.tolist(),
            "include_sensitive": self.include_sensitive,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _check_trainable(d: Dataset):
    if d.n_rows < 2:
        raise TrainingError("training needs at least 2 rows")
    if len(set(int(v) for v in d.y)) < 2:
        raise TrainingError("training needs both label classes present")


def train_logistic(d: Dataset, l2: float = 1e-3, max_iter: int = 100,
                   include_sensitive: bool = False, tol: float = 1e-10) -> LogisticModel:
    """Weighted maximum-likelihood fit via IRLS, starting from zero.

    The intercept is not penalized.  Predictions threshold the fitted
    probability at 0.5.  Reports (rather than raises on) non-convergence
    and returns the last iterate.
    """
    _check_trainable(d)
    if l2 < 0:
        raise TrainingError("l2 must be non-negative")
    phi = _design(d, include_sensitive)
    y = d.y.astype(np.float64)
    w = d.effective_weights()
    w = w / np.sum(w)
    beta = np.zeros(phi.shape[1])
    penalty = np.full(phi.shape[1], l2)
    penalty[0] = 0.0

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = np.clip(phi @ beta, -30, 30)
        mu = 1.0 / (1.0 + np.exp(-eta))
        s = np.maximum(mu * (1.0 - mu), 1e-10)
        grad = phi.T @ (w * (y - mu)) - penalty * beta
        hess = (phi * (w * s)[:, None]).T @ phi + np.diag(penalty + 1e-12)
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    levels = [sorted(set(d.a[:, j])) for j in range(d.a.shape[1])] if include_sensitive else None
    return LogisticModel(beta, include_sensitive, levels, converged, iterations)


# ---------------------------------------------------------------------------
# CART decision tree (weighted Gini, non-sensitive features only)
# ---------------------------------------------------------------------------

class CartTree(Predictor):
    tag = "tree"

    def __init__(self, root, feature_names):
        self.root = root  # nested dict {"feature": j, "threshold": t, "lt":, "ge":} or {"leaf": c}
        self.feature_names = feature_names

    def predict(self, d: Dataset) -> np.ndarray:
        out = np.empty(d.n_rows, dtype=np.int8)
        for i in range(d.n_rows):
            node = self.root
            while "leaf" not in node:
                xi = d.x[i, node["feature"]]
                node = node["ge"] if xi >= node["threshold"] else node["lt"]
            out[i] = node["leaf"]
        return out

    def to_dict(self):
        def enc(node):
            if "leaf" in node:
                return {"leaf": int(node["leaf"])}
            return {
                "feature": self.feature_names[node["feature"]],
                "threshold": node["threshold"],
                "ge": enc(node["ge"]),
                "lt": enc(node["lt"]),
            }

        return {"tag": self.tag, "tree": enc(self.root)}


def _gini(counts):
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _majority(w1, w0):
    # Deterministic tie-break toward class 0.
    return 1 if w1 > w0 else 0


def _grow(x, y, w, depth, max_depth):
    w1 = float(np.sum(w * y))
    w0 = float(np.sum(w)) - w1
    if depth >= max_depth or w1 == 0.0 or w0 == 0.0:
        return {"leaf": _majority(w1, w0)}

    parent_gini = _gini(np.array([w0, w1]))
    best = None  # (impurity, feature, threshold)
    n, k = x.shape
    for j in range(k):
        order = np.argsort(x[:, j], kind="stable")
        xs, ys, ws = x[order, j], y[order], w[order]
        cum_w = np.cumsum(ws)
        cum_w1 = np.cumsum(ws * ys)
        total_w, total_w1 = cum_w[-1], cum_w1[-1]
        # candidate split between consecutive distinct values
        boundaries = np.flatnonzero(xs[1:] > xs[:-1])
        for b in boundaries:
            left_w, left_w1 = cum_w[b], cum_w1[b]
            right_w, right_w1 = total_w - left_w, total_w1 - left_w1
            gl = _gini(np.array([left_w - left_w1, left_w1]))
            gr = _gini(np.array([right_w - right_w1, right_w1]))
            impurity = (left_w * gl + right_w * gr) / total_w
            threshold = 0.5 * (xs[b] + xs[b + 1])
            cand = (impurity, j, threshold)
            if best is None or cand < best:  # ties: lowest feature, lowest threshold
                best = cand

    if best is None or best[0] >= parent_gini - 1e-12:
        return {"leaf": _majority(w1, w0)}

    _, j, threshold = best
    mask = x[:, j] >= threshold
    return {
        "feature": j,
        "threshold": threshold,
        "ge": _grow(x[mask], y[mask], w[mask], depth + 1, max_depth),
        "lt": _grow(x[~mask], y[~mask], w[~mask], depth + 1, max_depth),
    }


def train_tree(d: Dataset, max_depth: int = 3) -> CartTree:
    """Greedy CART on weighted Gini impurity over non-sensitive features.

    Ties between candidate splits break toward the lowest feature index,
    then the lowest threshold, so training is fully deterministic.
    """
    _check_trainable(d)
    if max_depth < 0:
        raise TrainingError("max_depth must be >= 0")
    y = d.y.astype(np.float64)
    w = d.effective_weights()
    root = _grow(d.x, y, w, 0, max_depth)
    return CartTree(root, d.schema.feature_names)


# ---------------------------------------------------------------------------
# Prediction-column adapter (audit externally trained models)
# ---------------------------------------------------------------------------

class ColumnPredictor(Predictor):
    """Returns the precomputed prediction column of whatever dataset it sees."""

    tag = "column"

    def predict(self, d: Dataset) -> np.ndarray:
        if d.yhat is None:
            raise DataError(
                "column predictor queried on a dataset without a prediction column"
            )
        return d.yhat.copy()


def from_prediction_column(d: Dataset) -> ColumnPredictor:
    if d.schema.prediction_name is None or d.yhat is None:
        raise DataError("dataset has no prediction column to adapt")
    return ColumnPredictor()


class LabelTarget(Predictor):
    """Adapter exposing the ground-truth label as the decomposition target.

    Used by the predictive-parity path, where the quantity decomposed per
    group is the regression of Y on X rather than the classifier output.
    """

    tag = "label"

    def predict(self, d: Dataset) -> np.ndarray:
        return d.y.copy()


class OverridePredictor(Predictor):
    """Wrap a predictor, flipping the output bit of one fixed row.

    Only valid on the group slice it was built for (checked by row count):
    the audit uses it to lift a degenerate group off a constant output.
    """

    tag = "override"

    def __init__(self, base: Predictor, row_index: int, n_rows: int):
        self.base = base
        self.row_index = int(row_index)
        self.n_rows = int(n_rows)

    def predict(self, d: Dataset) -> np.ndarray:
        if d.n_rows != self.n_rows:
            raise DataError(
                "degenerate-group override is only valid on the "
                f"{self.n_rows}-row group it was built for"
            )
        out = self.base.predict(d).copy()
        out[self.row_index] = 1 - out[self.row_index]
        return out
