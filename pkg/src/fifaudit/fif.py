"""Fairness influence functions: per-subset contributions to group bias.

Each subset's influence is the difference of its variance shares between
the most and least favored groups, scaled by 1/(1 - (p_max + p_min)).
Positive influence amplifies bias, negative influence suppresses it, and
the influences of all subsets up to the maximum order sum to the
estimated bias.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import LabelTarget, OverridePredictor, Predictor
from .dataset import Dataset, GroupKey, filter_group, group_keys
from .errors import GroupError, MetricError
from .gsa import ComponentModel, enumerate_subsets, backfit, variance_shares
from .metrics import (
    MetricKind,
    equalized_odds,
    predictive_parity,
    statistical_parity,
)

#: Magnitude substituted for the scaling denominator when p_max + p_min
#: lands within this distance of 1.
EPSILON_GUARD = 1e-6


@dataclass(frozen=True)
class AuditOptions:
    """Surrogate-fitting knobs shared by every influence computation."""

    knot_count: int = 6
    tol: float = 1e-5
    max_iter: int = 100
    ridge: float = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class FifEntry:
    subset: tuple[int, ...]      # 1-based feature indices
    names: tuple[str, ...]
    w: float

    def label(self) -> str:
        return " & ".join(self.names)


@dataclass(frozen=True)
class FifReport:
    metric: MetricKind
    bias: float                  # exact metric value from counting
    a_max: GroupKey
    a_min: GroupKey
    p_max: float                 # rates used in the scaling denominator
    p_min: float
    entries: tuple[FifEntry, ...]
    max_order: int
    estimated_bias: float        # sum of all influences
    estimation_error: float
    epsilon_applied: bool
    degenerate_perturbed: bool
    conditioning_class: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "metric": self.metric.value,
            "bias": self.bias,
            "estimated_bias": self.estimated_bias,
            "estimation_error": self.estimation_error,
            "a_max": list(self.a_max),
            "a_min": list(self.a_min),
            "p_max": self.p_max,
            "p_min": self.p_min,
            "lambda": self.max_order,
            "conditioning_class": self.conditioning_class,
            "epsilon_applied": self.epsilon_applied,
            "degenerate_perturbed": self.degenerate_perturbed,
            "entries": [{"subset": list(e.names), "w": e.w} for e in self.entries],
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class RankedFifs:
    """Top entries by |influence| plus one residual bucket for the rest."""

    kept: tuple[FifEntry, ...]
    residual: float
    estimated_bias: float

    def rows(self):
        out = [(e.label(), e.w) for e in self.kept]
        out.append(("residual", self.residual))
        return out


def resolve_degenerate(d_group: Dataset, m: Predictor, seed: int):
    """Lift a constant-output group by flipping one seeded row's prediction.

    Returns (predictor, flag): the original predictor untouched when the
    group rate is already inside (0, 1), otherwise a wrapper that flips a
    uniformly chosen positive-weight row.  A single-row group cannot be
    flipped without staying constant, so it is rejected.
    """
    w = d_group.effective_weights()
    preds = m.predict(d_group).astype(np.float64)
    rate = float(np.sum(w * preds) / np.sum(w))
    if 0.0 < rate < 1.0:
        return m, False
    candidates = np.flatnonzero(w > 0)
    if d_group.n_rows < 2 or len(candidates) < 2:
        raise GroupError(
            "cannot perturb a degenerate group with fewer than two weighted rows"
        )
    rng = np.random.default_rng(seed)
    row = int(candidates[int(rng.integers(len(candidates)))])
    return OverridePredictor(m, row, d_group.n_rows), True


def _threads() -> int:
    raw = os.environ.get("FIFAUDIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _fit_group(target: Predictor, d_group: Dataset, rate: float, gap: float,
               max_order: int, opts: AuditOptions):
    """Backfit one group, perturbing first if its output is constant.

    The perturbation only makes sense when there is bias to attribute, so
    a zero rate gap leaves even a degenerate group untouched (its
    components are identically zero, as is every influence).
    """
    predictor, flipped = (target, False)
    if rate in (0.0, 1.0) and gap != 0.0:
        predictor, flipped = resolve_degenerate(d_group, target, opts.seed)
    if flipped:
        w = d_group.effective_weights()
        preds = predictor.predict(d_group).astype(np.float64)
        rate = float(np.sum(w * preds) / np.sum(w))
    model = backfit(
        predictor,
        d_group,
        max_order=max_order,
        knot_count=opts.knot_count,
        tol=opts.tol,
        max_iter=opts.max_iter,
        ridge=opts.ridge,
    )
    shares = variance_shares(model, predictor, d_group)
    return rate, flipped, model, shares


def _fif_core(
    d: Dataset,
    target: Predictor,
    metric: MetricKind,
    bias: float,
    max_order: int,
    opts: AuditOptions,
    conditioning_class: int | None = None,
) -> FifReport:
    keys = group_keys(d)
    if len(keys) < 2:
        raise MetricError("influence computation needs at least two sensitive groups")
    sp_here = statistical_parity(target, d)
    a_max, a_min = sp_here.a_max, sp_here.a_min
    gap_here = sp_here.value

    k = d.schema.n_features
    order = min(max_order, k)
    jobs = [
        (filter_group(d, a_max), sp_here.rates[a_max]),
        (filter_group(d, a_min), sp_here.rates[a_min]),
    ]

    def run(job):
        d_group, rate = job
        return _fit_group(target, d_group, rate, gap_here, order, opts)

    if _threads() > 1 and a_max != a_min:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fitted = list(pool.map(run, jobs))
    else:
        fitted = [run(job) for job in jobs]

    (p_max, flipped_max, model_max, shares_max) = fitted[0]
    (p_min, flipped_min, model_min, shares_min) = fitted[1]

    denom = 1.0 - (p_max + p_min)
    epsilon_applied = abs(denom) < EPSILON_GUARD
    if epsilon_applied:
        denom = math.copysign(EPSILON_GUARD, denom) if denom != 0.0 else EPSILON_GUARD

    entries = []
    for s in enumerate_subsets(k, order):
        w_s = (shares_max[s] - shares_min[s]) / denom
        names = tuple(d.schema.feature_names[j - 1] for j in s)
        entries.append(FifEntry(subset=s, names=names, w=w_s))

    estimated = math.fsum(e.w for e in entries)
    return FifReport(
        metric=metric,
        bias=bias,
        a_max=a_max,
        a_min=a_min,
        p_max=p_max,
        p_min=p_min,
        entries=tuple(entries),
        max_order=max_order,
        estimated_bias=estimated,
        estimation_error=abs(bias - estimated),
        epsilon_applied=epsilon_applied,
        degenerate_perturbed=flipped_max or flipped_min,
        conditioning_class=conditioning_class,
        diagnostics={
            "group_max": _model_diag(model_max),
            "group_min": _model_diag(model_min),
        },
    )


def _model_diag(model: ComponentModel):
    return {
        "group": list(model.group),
        "delta": model.delta,
        "converged": model.converged,
        "iterations": model.iterations,
    }


def _check_order(max_order: int):
    if not 1 <= max_order <= 3:
        raise ValueError(f"max order must be in [1, 3], got {max_order}")


def fif_statistical_parity(
    m: Predictor, d: Dataset, max_order: int = 2, opts: AuditOptions | None = None
) -> FifReport:
    """Influences whose total matches the statistical parity of m on d."""
    _check_order(max_order)
    opts = opts or AuditOptions()
    result = statistical_parity(m, d)
    return _fif_core(d, m, MetricKind.STATISTICAL_PARITY, result.value, max_order, opts)


def _stratified_fif(
    d: Dataset,
    target: Predictor,
    strata_col: np.ndarray,
    metric: MetricKind,
    bias: float,
    max_order: int,
    opts: AuditOptions,
) -> FifReport:
    reports = {}
    failures = {}
    for c in (1, 0):
        mask = strata_col == c
        if not mask.any():
            failures[c] = "stratum is empty"
            continue
        sub = d.take(np.flatnonzero(mask))
        if len(group_keys(sub)) < 2:
            failures[c] = "stratum has fewer than two groups"
            continue
        reports[c] = _fif_core(sub, target, metric, bias, max_order, opts,
                               conditioning_class=c)
    if not reports:
        raise MetricError(f"{metric.value}: no usable stratum ({failures})")
    # the stratum whose influences sum highest carries the metric; ties -> class 1
    best = max(reports, key=lambda c: (reports[c].estimated_bias, c))
    return reports[best]


def fif_equalized_odds(
    m: Predictor, d: Dataset, max_order: int = 2, opts: AuditOptions | None = None
) -> FifReport:
    """Influence report for the ground-class stratum with the largest total."""
    _check_order(max_order)
    opts = opts or AuditOptions()
    result = equalized_odds(m, d)
    return _stratified_fif(d, m, d.y, MetricKind.EQUALIZED_ODDS, result.value,
                           max_order, opts)


def fif_predictive_parity(
    m: Predictor, d: Dataset, max_order: int = 2, opts: AuditOptions | None = None
) -> FifReport:
    """Influence report over prediction strata, decomposing the label regression.

    Within each stratum the decomposed quantity is the ground truth Y, so
    group rates are Pr[Y=1 | group, prediction class].
    """
    _check_order(max_order)
    opts = opts or AuditOptions()
    result = predictive_parity(m, d)
    preds = m.predict(d)
    return _stratified_fif(d, LabelTarget(), preds, MetricKind.PREDICTIVE_PARITY,
                           result.value, max_order, opts)


def compute_fif(kind: MetricKind, m: Predictor, d: Dataset, max_order: int = 2,
                opts: AuditOptions | None = None) -> FifReport:
    if kind is MetricKind.STATISTICAL_PARITY:
        return fif_statistical_parity(m, d, max_order, opts)
    if kind is MetricKind.EQUALIZED_ODDS:
        return fif_equalized_odds(m, d, max_order, opts)
    return fif_predictive_parity(m, d, max_order, opts)


def rank_and_residual(r: FifReport, top_n: int = 7) -> RankedFifs:
    """Keep the top_n influences by magnitude; fold the rest into one bucket."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    order = sorted(
        range(len(r.entries)),
        key=lambda i: (-abs(r.entries[i].w), i),
    )
    kept = tuple(r.entries[i] for i in order[:top_n])
    residual = math.fsum(r.entries[i].w for i in order[top_n:])
    return RankedFifs(kept=kept, residual=residual, estimated_bias=r.estimated_bias)
