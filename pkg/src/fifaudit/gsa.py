"""Set-additive surrogate fitting and covariance-form variance shares.

The classifier restricted to one sensitive group is approximated by a
constant plus component functions over feature subsets up to a maximum
order.  Components are tensor-product B-splines fit by backfitting:
cycle over subsets, refit each against the partial residual, subtract
the empirical mean, repeat until the largest component change is small.
Each subset's share of the group-conditional output variance is the
covariance of its component with the (centered) full output.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .classifiers import Predictor
from .dataset import Dataset, GroupKey
from .errors import DataError, FitError

# Feature subsets are 1-based index tuples, sorted ascending.
SubsetIndex = tuple[int, ...]

#: Group-local features with at most this many distinct values get an
#: indicator basis; cubic splines on so few points are singular.
DISCRETE_VALUE_LIMIT = 4

CUBIC_ORDER = 4


def enumerate_subsets(k: int, max_order: int) -> list[SubsetIndex]:
    """All non-empty subsets of [1..k] with size <= max_order, by (size, lex)."""
    if not 1 <= max_order <= k:
        raise ValueError(f"max_order must be in [1, {k}], got {max_order}")
    out: list[SubsetIndex] = []
    for size in range(1, max_order + 1):
        out.extend(itertools.combinations(range(1, k + 1), size))
    return out


# ---------------------------------------------------------------------------
# B-spline basis (de Boor recursion)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnotVector:
    """Strictly increasing knots with boundary padding for order-n evaluation.

    `m` counts the interior knots of the primary span; for cubic vectors
    three padding knots sit on each side so every basis function touching
    the data range is defined.  Indicator (order-1) vectors hold the
    distinct values plus one sentinel.
    """

    knots: np.ndarray
    m: int
    order: int

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)
        if np.any(np.diff(knots) <= 0):
            raise FitError("knot vector must be strictly increasing")
        if self.n_basis < 1:
            raise FitError("knot vector too short for the requested order")

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.order


def bspline_basis(r: int, order: int, knots: KnotVector | np.ndarray, x: float) -> float:
    """Value of the order-n B-spline basis function B_{r,n} at x.

    Order 1 is the half-open indicator [t_r, t_{r+1}); higher orders use
    the de Boor recursion with ratios treated as 0 on coincident knots.
    Out-of-support x gives 0.
    """
    t = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=np.float64)
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0 <= r <= len(t) - order - 1:
        raise IndexError(f"basis index {r} invalid for {len(t)} knots at order {order}")
    vals = [1.0 if t[j] <= x < t[j + 1] else 0.0 for j in range(r, r + order)]
    for n in range(1, order):
        nxt = []
        for off in range(order - n):
            j = r + off
            p_left = (x - t[j]) / (t[j + n] - t[j]) if t[j + n] != t[j] else 0.0
            p_right = (x - t[j + 1]) / (t[j + 1 + n] - t[j + 1]) if t[j + 1 + n] != t[j + 1] else 0.0
            nxt.append(p_left * vals[off] + (1.0 - p_right) * vals[off + 1])
        vals = nxt
    return vals[0]


def basis_matrix(kv: KnotVector, xs: np.ndarray) -> np.ndarray:
    """(n, n_basis) matrix of every basis function evaluated at xs."""
    t = kv.knots
    x = np.asarray(xs, dtype=np.float64)[:, None]
    b = ((x >= t[None, :-1]) & (x < t[None, 1:])).astype(np.float64)
    for n in range(1, kv.order):
        dl = t[n:-1] - t[: -n - 1]
        dr = t[n + 1:] - t[1: -n]
        with np.errstate(divide="ignore", invalid="ignore"):
            p_left = np.where(dl != 0, (x - t[None, : -n - 1]) / dl, 0.0)
            p_right = np.where(dr != 0, (x - t[None, 1: -n]) / dr, 0.0)
        b = p_left * b[:, :-1] + (1.0 - p_right) * b[:, 1:]
    return b[:, : kv.n_basis]


def cubic_knots(values: np.ndarray, interior: int = 6) -> KnotVector:
    """Quantile-placed interior knots over the observed range, padded for order 4.

    The upper primary knot sits a hair above the maximum so the half-open
    basis covers the largest sample; padding knots extend the vector by
    the mean primary spacing on each side.
    """
    v = np.asarray(values, dtype=np.float64)
    lo = float(v.min())
    hi = float(v.max())
    span = hi - lo
    if span <= 0:
        raise FitError("cannot place cubic knots on a constant feature")
    eps = 1e-9 * max(span, 1.0)
    hi_pad = hi + eps
    qs = np.quantile(v, [(i + 1) / (interior + 1) for i in range(interior)])
    inner = []
    for q in sorted(qs):
        q = float(q)
        if q <= lo + eps or q >= hi - eps:
            continue
        if inner and q - inner[-1] <= eps:
            continue
        inner.append(q)
    primary = np.array([lo] + inner + [hi_pad])
    h = (hi_pad - lo) / (len(primary) - 1)
    left = lo - h * np.arange(3, 0, -1)
    right = hi_pad + h * np.arange(1, 4)
    return KnotVector(np.concatenate([left, primary, right]), m=len(inner), order=CUBIC_ORDER)


def indicator_knots(values: np.ndarray) -> KnotVector:
    """Order-1 basis with one indicator per distinct observed value."""
    vs = np.unique(np.asarray(values, dtype=np.float64))
    gap = float(vs[-1] - vs[0]) / len(vs) if len(vs) > 1 else 1.0
    sentinel = vs[-1] + max(gap, 1.0)
    return KnotVector(np.append(vs, sentinel), m=len(vs), order=1)


def knots_for_feature(values: np.ndarray, interior: int = 6) -> KnotVector:
    if len(np.unique(values)) <= DISCRETE_VALUE_LIMIT:
        return indicator_knots(values)
    return cubic_knots(values, interior)


# ---------------------------------------------------------------------------
# Components and models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplineComponent:
    """Tensor-product spline term over one feature subset (1-based indices)."""

    subset: SubsetIndex
    knots: tuple[KnotVector, ...]
    coef: np.ndarray  # rank == len(subset), shape (n_basis_1, ..., n_basis_d)

    def __post_init__(self):
        coef = np.ascontiguousarray(self.coef, dtype=np.float64)
        expected = tuple(kv.n_basis for kv in self.knots)
        if coef.shape != expected:
            raise FitError(f"coefficient shape {coef.shape} != basis shape {expected}")
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "subset", tuple(self.subset))

    def to_dict(self):
        return {
            "subset": list(self.subset),
            "knots": [kv.knots.tolist() for kv in self.knots],
            "orders": [kv.order for kv in self.knots],
            "m": [kv.m for kv in self.knots],
            "coef": self.coef.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, raw) -> "SplineComponent":
        kvs = tuple(
            KnotVector(np.array(k), m=m, order=o)
            for k, m, o in zip(raw["knots"], raw["m"], raw["orders"])
        )
        shape = tuple(kv.n_basis for kv in kvs)
        return cls(tuple(raw["subset"]), kvs, np.array(raw["coef"]).reshape(shape))


def evaluate_component(c: SplineComponent, x_s: np.ndarray) -> np.ndarray | float:
    """Tensor-product spline sum at one point (1-D input) or many (2-D input)."""
    pts = np.asarray(x_s, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[1] != len(c.subset):
        raise ValueError(f"expected {len(c.subset)} coordinates, got {pts.shape[1]}")
    mats = [basis_matrix(kv, pts[:, d]) for d, kv in enumerate(c.knots)]
    out = _tensor_values(mats, c.coef)
    return float(out[0]) if single else out


def _tensor_values(mats: list[np.ndarray], coef: np.ndarray) -> np.ndarray:
    if len(mats) == 1:
        return mats[0] @ coef
    if len(mats) == 2:
        return np.einsum("ip,iq,pq->i", mats[0], mats[1], coef, optimize=True)
    if len(mats) == 3:
        return np.einsum("ip,iq,ir,pqr->i", mats[0], mats[1], mats[2], coef, optimize=True)
    raise FitError("components beyond third order are not supported")


def _tensor_design(mats: list[np.ndarray]) -> np.ndarray:
    """Row-wise tensor product of the per-dimension basis matrices."""
    if len(mats) == 1:
        return mats[0]
    if len(mats) == 2:
        n = mats[0].shape[0]
        return np.einsum("ip,iq->ipq", mats[0], mats[1]).reshape(n, -1)
    if len(mats) == 3:
        n = mats[0].shape[0]
        return np.einsum("ip,iq,ir->ipqr", mats[0], mats[1], mats[2]).reshape(n, -1)
    raise FitError("components beyond third order are not supported")


def _lower_subsets(s: SubsetIndex) -> list[SubsetIndex]:
    """Immediate sub-subsets whose spans a component must stay clear of."""
    return list(itertools.combinations(s, len(s) - 1))


def _spread_into_tensor(coef: np.ndarray, s: SubsetIndex, sub: SubsetIndex,
                        beta: np.ndarray, shape) -> None:
    """Add a lower-order coefficient block into a full tensor, broadcast
    along the axes the sub-subset does not cover."""
    view = coef.reshape(shape)
    idx = [None] * len(s)
    for pos_sub, j in enumerate(sub):
        idx[s.index(j)] = pos_sub
    expand = [slice(None) if i is not None else np.newaxis for i in idx]
    block = beta.reshape(tuple(shape[s.index(j)] for j in sub))
    view += block[tuple(expand)]


def _solve_component(design: np.ndarray, weights: np.ndarray, targets: np.ndarray,
                     ridge: float) -> np.ndarray:
    """Minimize the weighted mean squared error plus ridge * ||c||^2."""
    gram = (design * weights[:, None]).T @ design
    gram[np.diag_indices_from(gram)] += ridge
    rhs = design.T @ (weights * targets)
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError(
            "singular spline system; retry with ridge > 0"
        ) from exc


def fit_spline_component(
    residual_targets,
    subset: SubsetIndex,
    knots: tuple[KnotVector, ...] | list[KnotVector],
    ridge: float = 0.0,
) -> SplineComponent:
    """Least-squares fit of a tensor-product spline to (x_S, target) pairs.

    Deterministic: normal equations with fixed ordering.  A singular
    system with ridge == 0 raises FitError.
    """
    if len(subset) > 3:
        raise FitError("subsets beyond size 3 have no basis expansion")
    pts = np.array([list(np.atleast_1d(x)) for x, _ in residual_targets], dtype=np.float64)
    t = np.array([v for _, v in residual_targets], dtype=np.float64)
    if pts.size == 0:
        raise FitError("need at least one target")
    knots = tuple(knots)
    mats = [basis_matrix(kv, pts[:, d]) for d, kv in enumerate(knots)]
    w = np.full(len(t), 1.0 / len(t))
    coef = _solve_component(_tensor_design(mats), w, t, ridge)
    shape = tuple(kv.n_basis for kv in knots)
    return SplineComponent(tuple(subset), knots, coef.reshape(shape))


@dataclass(frozen=True)
class ComponentModel:
    """Fitted set-additive surrogate of one group's conditioned output."""

    group: GroupKey
    f0: float
    components: dict  # SubsetIndex -> SplineComponent
    max_order: int
    delta: float      # weighted mean squared residual of the expansion
    converged: bool
    iterations: int

    def to_dict(self):
        return {
            "group": list(self.group),
            "f0": self.f0,
            "max_order": self.max_order,
            "delta": self.delta,
            "converged": self.converged,
            "iterations": self.iterations,
            "components": [c.to_dict() for c in self.components.values()],
        }

    @classmethod
    def from_dict(cls, raw) -> "ComponentModel":
        comps = {}
        for entry in raw["components"]:
            comp = SplineComponent.from_dict(entry)
            comps[comp.subset] = comp
        return cls(
            group=tuple(raw["group"]),
            f0=raw["f0"],
            components=comps,
            max_order=raw["max_order"],
            delta=raw["delta"],
            converged=raw["converged"],
            iterations=raw["iterations"],
        )


@dataclass(frozen=True)
class VarianceShare:
    group: GroupKey
    subset: SubsetIndex
    value: float


def _group_of(d_group: Dataset) -> GroupKey:
    first = tuple(d_group.a[0])
    if d_group.n_rows > 1 and not (d_group.a == d_group.a[0]).all():
        raise DataError("backfit expects rows from a single sensitive group")
    return first


def backfit(
    m: Predictor,
    d_group: Dataset,
    max_order: int = 2,
    knot_count: int = 6,
    tol: float = 1e-5,
    max_iter: int = 100,
    ridge: float = 1e-8,
) -> ComponentModel:
    """Learn the set-additive surrogate of m on one group's rows.

    Starts from the (weighted) group mean with all components at zero,
    then cycles over subsets in (size, lexicographic) order: refit each
    component against the partial residual, subtract its empirical mean.
    Stops when the largest weighted RMS component change falls below tol;
    otherwise reports converged=False on the returned model.
    """
    group = _group_of(d_group)
    n, k = d_group.x.shape
    if n < 2:
        raise DataError("backfit needs at least 2 rows")
    outputs = m.predict(d_group).astype(np.float64)
    return _backfit_values(group, d_group.x, outputs, d_group.effective_weights(),
                           min(max_order, k), knot_count, tol, max_iter, ridge)


def _backfit_values(group, xs, outputs, weights, max_order, knot_count,
                    tol, max_iter, ridge) -> ComponentModel:
    n, k = xs.shape
    w = weights / np.sum(weights)
    f0 = float(np.sum(w * outputs))
    centered = outputs - f0

    feature_knots = [knots_for_feature(xs[:, j], knot_count) for j in range(k)]
    feature_bases = [basis_matrix(kv, xs[:, j]) for j, kv in enumerate(feature_knots)]

    subsets = enumerate_subsets(k, max_order)
    shapes = {}
    designs = {}
    solvers = {}
    # Higher-order tensor bases contain every lower-order span, so the raw
    # refit leaves the order split unidentified.  After each refit the
    # component's content along its sub-subset spans is projected out and
    # handed down, which pins the split without changing the total fit.
    lower_map = {}
    lower_solvers = {}
    for s in subsets:
        design = _tensor_design([feature_bases[j - 1] for j in s])
        gram = (design * w[:, None]).T @ design
        gram[np.diag_indices_from(gram)] += ridge
        try:
            solvers[s] = np.linalg.inv(gram)
        except np.linalg.LinAlgError as exc:
            raise FitError(
                f"singular spline system for subset {s}; increase ridge"
            ) from exc
        designs[s] = design
        shapes[s] = tuple(feature_knots[j - 1].n_basis for j in s)
        if len(s) > 1:
            lowers = _lower_subsets(s)
            stacked = np.hstack([designs[sub] for sub in lowers])
            lgram = (stacked * w[:, None]).T @ stacked
            lgram[np.diag_indices_from(lgram)] += ridge
            lower_map[s] = lowers
            lower_solvers[s] = (stacked, np.linalg.inv(lgram))

    coefs = {s: np.zeros(designs[s].shape[1]) for s in subsets}
    values = {s: np.zeros(n) for s in subsets}

    def recentre(s):
        shift = float(np.sum(w * values[s]))
        if shift != 0.0:
            # basis rows sum to one on the samples, so a constant shift of
            # every coefficient recenters the component exactly
            coefs[s] -= shift
            values[s] -= shift

    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        snapshot = {s: values[s].copy() for s in subsets}
        for s in subsets:
            others = centered - sum(
                (values[o] for o in subsets if o != s), np.zeros(n)
            )
            coef = solvers[s] @ (designs[s].T @ (w * others))
            vals = designs[s] @ coef
            if len(s) > 1:
                stacked, proj = lower_solvers[s]
                beta = proj @ (stacked.T @ (w * vals))
                vals = vals - stacked @ beta
                offset = 0
                for sub in lower_map[s]:
                    width = designs[sub].shape[1]
                    block = beta[offset: offset + width]
                    offset += width
                    _spread_into_tensor(coef, s, sub, -block, shapes[s])
                    coefs[sub] = coefs[sub] + block
                    values[sub] = values[sub] + designs[sub] @ block
                    recentre(sub)
            coefs[s] = coef
            values[s] = vals
            recentre(s)
        max_change = max(
            float(np.sqrt(np.sum(w * (values[s] - snapshot[s]) ** 2)))
            for s in subsets
        )
        if max_change <= tol:
            converged = True
            break

    residual = centered - sum(values.values())
    components = {}
    for s in subsets:
        kvs = tuple(feature_knots[j - 1] for j in s)
        components[s] = SplineComponent(s, kvs, coefs[s].reshape(shapes[s]))

    delta = float(np.sum(w * residual ** 2))
    return ComponentModel(
        group=group,
        f0=f0,
        components=components,
        max_order=max_order,
        delta=delta,
        converged=converged,
        iterations=sweeps,
    )


def component_covariance(
    model: ComponentModel,
    m: Predictor,
    d_group: Dataset,
    subset: SubsetIndex,
) -> VarianceShare:
    """Covariance of one component with the centered group output.

    Empirical means divide by the (weighted) group size, which keeps the
    shares on the probability scale where their total approximates the
    group-conditional output variance.
    """
    if subset not in model.components:
        raise KeyError(f"model has no component for subset {subset}")
    outputs = m.predict(d_group).astype(np.float64)
    w = d_group.effective_weights()
    return _covariance_of_values(model, d_group.x, outputs, w, subset)


def _covariance_of_values(model, xs, outputs, weights, subset) -> VarianceShare:
    comp = model.components[subset]
    cols = np.column_stack([xs[:, j - 1] for j in subset])
    f_vals = evaluate_component(comp, cols)
    w = weights / np.sum(weights)
    value = float(np.sum(w * f_vals * (outputs - model.f0)))
    return VarianceShare(group=model.group, subset=subset, value=value)


def variance_shares(model: ComponentModel, m: Predictor, d_group: Dataset) -> dict:
    """All covariance shares of a fitted model, keyed by subset."""
    outputs = m.predict(d_group).astype(np.float64)
    w = d_group.effective_weights()
    return {
        s: _covariance_of_values(model, d_group.x, outputs, w, s).value
        for s in model.components
    }
