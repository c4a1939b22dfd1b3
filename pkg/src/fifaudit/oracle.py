"""Brute-force verification backends.

Everything here trades speed for independence: exact ANOVA variance
decomposition by enumerating small discrete instances, a slow re-summation
of covariance shares, and the algebraic identity behind the influence
formula's denominator.  Production code never calls this module; tests
and the `check` command do.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import OracleError
from .gsa import ComponentModel, SplineComponent, bspline_basis

PROB_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteInstance:
    """Finite-support instance: per-feature values, joint table, tabulated g."""

    values: tuple[tuple[float, ...], ...]
    joint: np.ndarray   # probability tensor, shape = value-set sizes
    g: np.ndarray       # tabulated real function on the same grid
    product_form: bool

    def __post_init__(self):
        joint = np.ascontiguousarray(self.joint, dtype=np.float64)
        g = np.ascontiguousarray(self.g, dtype=np.float64)
        shape = tuple(len(v) for v in self.values)
        if joint.shape != shape or g.shape != shape:
            raise OracleError(
                f"joint/g shape must match value-set sizes {shape}"
            )
        if np.any(joint < 0) or abs(float(joint.sum()) - 1.0) > PROB_TOL:
            raise OracleError("joint probabilities must be non-negative and sum to 1")
        if not np.isfinite(g).all():
            raise OracleError("g must be finite on the whole support")
        joint.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "values", tuple(tuple(float(x) for x in v) for v in self.values))

    @property
    def k(self) -> int:
        return len(self.values)

    def marginal(self, axis: int) -> np.ndarray:
        axes = tuple(i for i in range(self.k) if i != axis)
        return self.joint.sum(axis=axes)

    @classmethod
    def from_marginals(cls, values, marginals, g) -> "DiscreteInstance":
        """Independent product-form instance from per-feature marginals."""
        joint = np.array(1.0)
        for p in marginals:
            joint = np.multiply.outer(joint, np.asarray(p, dtype=np.float64))
        return cls(tuple(tuple(v) for v in values), joint, np.asarray(g), product_form=True)

    @classmethod
    def from_table(cls, values, joint, g) -> "DiscreteInstance":
        joint = np.asarray(joint, dtype=np.float64)
        inst = cls(tuple(tuple(v) for v in values), joint, np.asarray(g), product_form=False)
        prod = np.array(1.0)
        for axis in range(inst.k):
            prod = np.multiply.outer(prod, inst.marginal(axis))
        if np.allclose(joint, prod, atol=1e-12, rtol=0.0):
            object.__setattr__(inst, "product_form", True)
        return inst

    @classmethod
    def from_json(cls, path) -> "DiscreteInstance":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        shape = tuple(len(v) for v in raw["values"])
        return cls.from_table(
            raw["values"],
            np.array(raw["joint"]).reshape(shape),
            np.array(raw["g"]).reshape(shape),
        )

    def to_json(self, path):
        payload = {
            "values": [list(v) for v in self.values],
            "joint": self.joint.ravel().tolist(),
            "g": self.g.ravel().tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    def support_rows(self):
        """(points, probabilities, g values), one entry per support tuple."""
        pts, probs, gs = [], [], []
        for idx in np.ndindex(*self.joint.shape):
            pts.append([self.values[d][i] for d, i in enumerate(idx)])
            probs.append(float(self.joint[idx]))
            gs.append(float(self.g[idx]))
        return np.array(pts), np.array(probs), np.array(gs)

    def mean(self) -> float:
        return float(np.sum(self.joint * self.g))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.sum(self.joint * (self.g - mu) ** 2))


def _all_subsets(k: int):
    for size in range(1, k + 1):
        yield from itertools.combinations(range(1, k + 1), size)


def anova_exhaustive(inst: DiscreteInstance) -> dict:
    """Exact variance decomposition V_S for every non-empty subset.

    Valid only for independent (product-form) inputs: each V_S is the
    variance of the conditional mean given Z_S minus the V of every
    proper non-empty sub-subset.  Closes to Var[g] by construction.
    """
    if not inst.product_form:
        raise OracleError("ANOVA decomposition requires an independent product distribution")
    if inst.joint.size > 10 ** 6:
        raise OracleError("support too large for exhaustive enumeration")
    marginals = [inst.marginal(axis) for axis in range(inst.k)]
    mu = inst.mean()

    raw = {}
    for s in _all_subsets(inst.k):
        axes_out = tuple(i for i in range(inst.k) if (i + 1) not in s)
        # E[g | Z_S]: average the complement axes with their marginals.
        cond = inst.g
        for axis in sorted(axes_out, reverse=True):
            cond = np.tensordot(cond, marginals[axis], axes=([axis], [0]))
        weight = np.array(1.0)
        for j in s:
            weight = np.multiply.outer(weight, marginals[j - 1])
        raw[s] = float(np.sum(weight * (cond - mu) ** 2))

    shares = {}
    for s in _all_subsets(inst.k):
        acc = raw[s]
        for size in range(1, len(s)):
            for sub in itertools.combinations(s, size):
                acc -= shares[sub]
        shares[s] = acc
    return shares


def _slow_component_value(comp: SplineComponent, point) -> float:
    """Nested-loop tensor-product sum, independent of the vectorized path."""
    total = 0.0
    for idx in np.ndindex(*comp.coef.shape):
        term = float(comp.coef[idx])
        if term == 0.0:
            continue
        for d, r in enumerate(idx):
            term *= bspline_basis(r, comp.knots[d].order, comp.knots[d], float(point[d]))
        total += term
    return total


def empirical_covariance_decomposition(inst: DiscreteInstance, model: ComponentModel) -> dict:
    """Recompute every covariance share by direct summation over the support.

    Expectations are taken under the instance's joint table, so a model
    fitted on the probability-weighted support rows must agree with the
    fast implementation to round-off.
    """
    pts, probs, gs = inst.support_rows()
    out = {}
    for s, comp in model.components.items():
        acc = 0.0
        for point, p, gval in zip(pts, probs, gs):
            coords = [point[j - 1] for j in s]
            acc += p * _slow_component_value(comp, coords) * (gval - model.f0)
        out[s] = acc
    return out


def scaled_variance_identity(p1: float, p2: float) -> float:
    """Residual of (Var1 - Var2) / (1 - (p1 + p2)) == p1 - p2 for Bernoulli rates."""
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise OracleError("rates must lie in [0, 1]")
    denom = 1.0 - (p1 + p2)
    if denom == 0.0:
        raise OracleError("identity undefined at p1 + p2 == 1")
    quotient = (p1 * (1.0 - p1) - p2 * (1.0 - p2)) / denom
    return abs(quotient - (p1 - p2))
