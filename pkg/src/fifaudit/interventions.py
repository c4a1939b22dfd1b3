"""Desk-scale fairness interventions and their influence footprints.

`reweigh` is the classic group-label reweighing rule (weights make the
sensitive assignment and the label look independent); `poison_labels` is
a deliberately crude bias-increasing lever that flips positive labels in
the least favored group.  Both only touch training inputs; the audit
measures their effect after retraining.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, group_keys, group_mask
from .errors import DataError, GroupError
from .fif import FifReport
from .metrics import MetricResult


@dataclass(frozen=True)
class InterventionRecord:
    kind: str
    params: dict
    before: MetricResult
    after: MetricResult
    fif_before: FifReport
    fif_after: FifReport
    deltas: tuple  # ((names, delta_w), ...) sorted by |delta| descending

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": self.params,
            "before": {"metric": self.before.to_dict(), "fif": self.fif_before.to_dict()},
            "after": {"metric": self.after.to_dict(), "fif": self.fif_after.to_dict()},
            "deltas": [{"subset": list(names), "delta_w": dv} for names, dv in self.deltas],
        }


def reweigh(d: Dataset) -> Dataset:
    """Attach weights w(a, y) = P[A=a] P[Y=y] / P[A=a, Y=y] to every row.

    Frequencies are empirical (respecting any existing weights).  When a
    (group, label) cell is empty the rule is undefined there; a warning is
    emitted and, having no rows, the cell needs no weight anyway.
    """
    keys = group_keys(d)
    if len(keys) < 2:
        raise GroupError("reweighing needs at least two sensitive groups")
    if len(set(int(v) for v in d.y)) < 2:
        raise DataError("reweighing needs both label classes present")

    w0 = d.effective_weights()
    total = float(np.sum(w0))
    p_y = {c: float(np.sum(w0[d.y == c])) / total for c in (0, 1)}
    new_weights = np.zeros(d.n_rows)
    for g in keys:
        gmask = group_mask(d, g)
        p_a = float(np.sum(w0[gmask])) / total
        for c in (0, 1):
            cell = gmask & (d.y == c)
            p_cell = float(np.sum(w0[cell])) / total
            if p_cell == 0.0:
                warnings.warn(
                    f"empty cell (group={g}, y={c}): reweighing undefined there",
                    stacklevel=2,
                )
                continue
            new_weights[cell] = p_a * p_y[c] / p_cell
    return d.replace(weights=new_weights)


def poison_labels(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Flip Y from 1 to 0 for a seeded random share of the least favored group.

    "Least favored" means the lowest (weighted) base rate of Y; exactly
    ceil(fraction * count) of that group's positive rows are flipped.
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError("fraction must lie in (0, 1]")
    keys = group_keys(d)
    w = d.effective_weights()

    def base_rate(g):
        mask = group_mask(d, g)
        return float(np.sum(w[mask] * d.y[mask]) / np.sum(w[mask]))

    target = min(keys, key=lambda g: (base_rate(g), keys.index(g)))
    flippable = np.flatnonzero(group_mask(d, target) & (d.y == 1))
    if len(flippable) == 0:
        raise GroupError(f"least favored group {target} has no positive rows to flip")
    count = math.ceil(fraction * len(flippable))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(flippable, size=count, replace=False)
    y = d.y.copy()
    y[chosen] = 0
    return d.replace(y=y)


def compare_fifs(before: FifReport, after: FifReport) -> tuple:
    """Aligned per-subset influence deltas, sorted by magnitude."""
    if before.metric is not after.metric:
        raise DataError("cannot compare influence reports for different metrics")
    if before.max_order != after.max_order:
        raise DataError("cannot compare influence reports at different max orders")
    b = {e.names: e.w for e in before.entries}
    a = {e.names: e.w for e in after.entries}
    if set(b) != set(a):
        raise DataError("influence reports cover different feature subsets")
    deltas = [(names, a[names] - b[names]) for names in b]
    deltas.sort(key=lambda item: (-abs(item[1]), item[0]))
    return tuple(deltas)


def build_record(kind: str, params: dict, before: MetricResult, after: MetricResult,
                 fif_before: FifReport, fif_after: FifReport) -> InterventionRecord:
    return InterventionRecord(
        kind=kind,
        params=params,
        before=before,
        after=after,
        fif_before=fif_before,
        fif_after=fif_after,
        deltas=compare_fifs(fif_before, fif_after),
    )
