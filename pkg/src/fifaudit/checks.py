"""Self-contained identity and oracle fixtures behind the `check` command.

Each check returns (name, passed, detail).  They re-verify the algebra
the audit rests on: the Bernoulli variance identity, exact ANOVA closure
on small discrete instances, the partition of unity of the spline basis,
and agreement between the fast covariance shares and their brute-force
recomputation.
"""

from __future__ import annotations

import numpy as np

from . import oracle
from .classifiers import Predictor
from .dataset import Dataset, Schema
from .gsa import backfit, basis_matrix, cubic_knots, evaluate_component, variance_shares


class _TablePredictor(Predictor):
    """Prediction = tabulated g thresholded; used only by the self-checks."""

    tag = "table"

    def __init__(self, fn):
        self.fn = fn

    def predict(self, d: Dataset) -> np.ndarray:
        return np.array([self.fn(row) for row in d.x], dtype=np.int8)


def _instance_dataset(inst: oracle.DiscreteInstance) -> Dataset:
    """One weighted row per support tuple, so sample means are exact."""
    pts, probs, _ = inst.support_rows()
    k = pts.shape[1]
    schema = Schema(
        feature_names=tuple(f"z{j + 1}" for j in range(k)),
        sensitive_names=("group",),
        label_name="y",
    )
    return Dataset(
        schema=schema,
        x=pts,
        a=np.array([["only"]] * len(probs)),
        y=np.zeros(len(probs), dtype=np.int8),
        weights=probs,
    )


def check_scaled_variance_identity(seed: int, n_pairs: int = 1000):
    rng = np.random.default_rng(seed)
    pairs = [(0.704, 0.172)]
    while len(pairs) < n_pairs + 1:
        p1, p2 = rng.random(2)
        if abs(1.0 - (p1 + p2)) > 1e-3:
            pairs.append((float(p1), float(p2)))
    worst = max(oracle.scaled_variance_identity(p1, p2) for p1, p2 in pairs)
    return ("scaled-variance identity", worst <= 1e-12, f"worst residual {worst:.3e}")


def _anova_fixtures(seed: int):
    rng = np.random.default_rng(seed)
    fixtures = {
        "constant": oracle.DiscreteInstance.from_marginals(
            [(0.0, 1.0), (0.0, 1.0)], [(0.5, 0.5), (0.5, 0.5)],
            np.full((2, 2), 0.7),
        ),
        "first-feature": oracle.DiscreteInstance.from_marginals(
            [(0.0, 1.0), (0.0, 1.0)], [(0.5, 0.5), (0.5, 0.5)],
            np.array([[0.0, 0.0], [1.0, 1.0]]),
        ),
        "xor": oracle.DiscreteInstance.from_marginals(
            [(0.0, 1.0), (0.0, 1.0)], [(0.5, 0.5), (0.5, 0.5)],
            np.array([[0.0, 1.0], [1.0, 0.0]]),
        ),
    }
    for i in range(3):
        k = int(rng.integers(2, 4))
        marginals = []
        for _ in range(k):
            p = rng.uniform(0.15, 0.85)
            marginals.append((1.0 - p, p))
        g = rng.random((2,) * k)
        fixtures[f"random-{i}"] = oracle.DiscreteInstance.from_marginals(
            [(0.0, 1.0)] * k, marginals, g,
        )
    return fixtures


def check_anova_closure(seed: int):
    worst = 0.0
    for name, inst in _anova_fixtures(seed).items():
        shares = oracle.anova_exhaustive(inst)
        gap = abs(sum(shares.values()) - inst.variance())
        worst = max(worst, gap)
    return ("ANOVA closure on fixtures", worst <= 1e-10, f"worst closure gap {worst:.3e}")


def check_xor_interaction(seed: int):
    inst = _anova_fixtures(seed)["xor"]
    shares = oracle.anova_exhaustive(inst)
    ok = (
        abs(shares[(1,)]) <= 1e-12
        and abs(shares[(2,)]) <= 1e-12
        and abs(shares[(1, 2)] - 0.25) <= 1e-12
    )
    return ("XOR isolates the pairwise term", ok, f"shares {shares}")


def check_partition_of_unity(seed: int):
    rng = np.random.default_rng(seed)
    values = rng.random(400)
    kv = cubic_knots(values, interior=6)
    grid = np.linspace(values.min(), values.max(), 512)
    sums = basis_matrix(kv, grid).sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0)))
    return ("spline partition of unity", worst <= 1e-10, f"worst |sum-1| {worst:.3e}")


def check_covariance_agreement(seed: int):
    rng = np.random.default_rng(seed)
    g = rng.random((2, 2, 2))
    marginals = [(0.4, 0.6), (0.55, 0.45), (0.3, 0.7)]
    inst = oracle.DiscreteInstance.from_marginals([(0.0, 1.0)] * 3, marginals, g)
    d = _instance_dataset(inst)

    def fn(row):
        idx = tuple(int(v) for v in row)
        return inst.g[idx]

    class _RealOutput(_TablePredictor):
        def predict(self, dd):
            return np.array([self.fn(row) for row in dd.x], dtype=np.float64)

    target = _RealOutput(fn)
    model = backfit(target, d, max_order=3, tol=1e-12, max_iter=400, ridge=1e-10)
    fast = variance_shares(model, target, d)
    slow = oracle.empirical_covariance_decomposition(inst, model)
    diff_impl = max(abs(fast[s] - slow[s]) for s in fast)

    anova = oracle.anova_exhaustive(inst)
    tol = max(1e-3, 3.0 * model.delta)
    diff_anova = max(abs(fast[s] - anova[s]) for s in fast)
    ok = diff_impl <= 1e-12 and diff_anova <= tol
    return (
        "covariance shares vs brute force / ANOVA",
        ok,
        f"impl gap {diff_impl:.3e}, anova gap {diff_anova:.3e} (tol {tol:.3e})",
    )


def check_covariance_identity(seed: int):
    rng = np.random.default_rng(seed)
    n = 300
    schema = Schema(("z1", "z2"), ("group",), "y")
    x = rng.random((n, 2))
    d = Dataset(schema=schema, x=x, a=np.array([["only"]] * n), y=np.zeros(n, dtype=np.int8))

    class _Smooth(Predictor):
        tag = "smooth"

        def predict(self, dd):
            return np.sin(3 * dd.x[:, 0]) + dd.x[:, 1] ** 2 + 0.5 * dd.x[:, 0] * dd.x[:, 1]

    target = _Smooth()
    model = backfit(target, d, max_order=2, tol=1e-10, max_iter=300)
    w = np.full(n, 1.0 / n)
    vals = {
        s: evaluate_component(c, np.column_stack([x[:, j - 1] for j in s]))
        for s, c in model.components.items()
    }
    total = sum(vals.values())
    worst = 0.0
    for s, v in vals.items():
        # under the set-additive model the group output is f0 + sum of components
        lhs = float(np.sum(w * v * total))
        rhs = float(np.sum(w * v * v)) + float(np.sum(w * v * (total - v)))
        worst = max(worst, abs(lhs - rhs))
    return (
        "covariance splits into variance + cross terms",
        worst <= 1e-10,
        f"worst gap {worst:.3e}",
    )


def run_checks(seed: int = 0):
    return [
        check_scaled_variance_identity(seed),
        check_anova_closure(seed),
        check_xor_interaction(seed),
        check_partition_of_unity(seed),
        check_covariance_agreement(seed),
        check_covariance_identity(seed),
    ]
