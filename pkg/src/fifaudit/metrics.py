"""Group-fairness metrics computed exactly by (weighted) counting.

All three metrics reduce to max-minus-min conditional rates across the
sensitive groups; equalized odds stratifies rows by the ground-truth
class and predictive parity by the predicted class.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .classifiers import Predictor
from .dataset import Dataset, GroupKey, group_keys, group_mask
from .errors import GroupError, MetricError


class MetricKind(enum.Enum):
    STATISTICAL_PARITY = "sp"
    EQUALIZED_ODDS = "eo"
    PREDICTIVE_PARITY = "pp"


@dataclass(frozen=True)
class MetricResult:
    kind: MetricKind
    value: float
    rates: dict  # SP: {group: rate}; EO/PP: {(group, class): rate}
    a_max: GroupKey
    a_min: GroupKey
    conditioning_class: int | None = None

    def to_dict(self):
        if self.kind is MetricKind.STATISTICAL_PARITY:
            rates = [
                {"group": list(g), "rate": r} for g, r in self.rates.items()
            ]
        else:
            rates = [
                {"group": list(g), "class": c, "rate": r}
                for (g, c), r in self.rates.items()
            ]
        return {
            "kind": self.kind.value,
            "value": self.value,
            "a_max": list(self.a_max),
            "a_min": list(self.a_min),
            "conditioning_class": self.conditioning_class,
            "rates": rates,
        }


def _weighted_rate(values: np.ndarray, weights: np.ndarray) -> float:
    total = float(np.sum(weights))
    if total <= 0:
        raise MetricError("conditioning selects only zero-weight rows")
    return float(np.sum(weights * values) / total)


def positive_rate(m: Predictor, d: Dataset, g: GroupKey) -> float:
    """Weighted fraction of group-g rows predicted positive."""
    mask = group_mask(d, g)
    if not mask.any():
        raise GroupError(f"group {g} is absent")
    w = d.effective_weights()[mask]
    preds = m.predict(d)[mask]
    return _weighted_rate(preds.astype(np.float64), w)


def _gap(rates: dict, keys: list[GroupKey]):
    """Max-minus-min over the given rates; ties resolve to the first key."""
    a_max = max(keys, key=lambda g: (rates[g], -keys.index(g)))
    a_min = min(keys, key=lambda g: (rates[g], keys.index(g)))
    return rates[a_max] - rates[a_min], a_max, a_min


def statistical_parity(m: Predictor, d: Dataset) -> MetricResult:
    keys = group_keys(d)
    if len(keys) < 2:
        raise MetricError("statistical parity needs at least two sensitive groups")
    preds = m.predict(d).astype(np.float64)
    w = d.effective_weights()
    rates = {}
    for g in keys:
        mask = group_mask(d, g)
        rates[g] = _weighted_rate(preds[mask], w[mask])
    value, a_max, a_min = _gap(rates, keys)
    return MetricResult(MetricKind.STATISTICAL_PARITY, value, rates, a_max, a_min)


def _stratified(kind: MetricKind, strata_col: np.ndarray, target_col: np.ndarray,
                d: Dataset) -> MetricResult:
    """Shared EO/PP machinery: per-stratum rate gaps, maximized over strata.

    A stratum is usable only when at least two groups have rows (and
    positive weight) inside it; groups without rows in a stratum drop out
    of that stratum's max/min.  Stratum ties break toward class 1.
    """
    keys = group_keys(d)
    if len(keys) < 2:
        raise MetricError(f"{kind.value} needs at least two sensitive groups")
    w = d.effective_weights()
    rates = {}
    per_stratum = {}
    for c in (0, 1):
        stratum = strata_col == c
        usable_keys = []
        stratum_rates = {}
        for g in keys:
            mask = group_mask(d, g) & stratum
            if not mask.any() or float(np.sum(w[mask])) <= 0:
                continue
            r = _weighted_rate(target_col[mask].astype(np.float64), w[mask])
            stratum_rates[g] = r
            usable_keys.append(g)
        for g, r in stratum_rates.items():
            rates[(g, c)] = r
        if len(usable_keys) >= 2:
            per_stratum[c] = _gap(stratum_rates, usable_keys)

    if not per_stratum:
        raise MetricError(f"{kind.value}: no stratum has two or more groups")
    # max over strata; tie toward class 1
    best_class = max(per_stratum, key=lambda c: (per_stratum[c][0], c))
    value, a_max, a_min = per_stratum[best_class]
    return MetricResult(kind, value, rates, a_max, a_min, conditioning_class=best_class)


def equalized_odds(m: Predictor, d: Dataset) -> MetricResult:
    """Gap of Pr[Yhat=1 | A, Y=c] across groups, maximized over c."""
    preds = m.predict(d)
    return _stratified(MetricKind.EQUALIZED_ODDS, d.y, preds, d)


def predictive_parity(m: Predictor, d: Dataset) -> MetricResult:
    """Gap of Pr[Y=1 | A, Yhat=c] across groups, maximized over c."""
    preds = m.predict(d)
    return _stratified(MetricKind.PREDICTIVE_PARITY, preds, d.y, d)


def compute_metric(kind: MetricKind, m: Predictor, d: Dataset) -> MetricResult:
    if kind is MetricKind.STATISTICAL_PARITY:
        return statistical_parity(m, d)
    if kind is MetricKind.EQUALIZED_ODDS:
        return equalized_odds(m, d)
    return predictive_parity(m, d)
