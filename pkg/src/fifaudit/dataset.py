"""Tabular datasets with designated sensitive features.

A dataset holds real-valued non-sensitive features X, categorical
sensitive features A, a binary label Y, an optional precomputed binary
prediction column, and optional per-row sample weights.  Instances are
immutable after construction and safe to share across audit runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GroupError, SchemaError

# A group key is one categorical value per sensitive feature, in schema order.
GroupKey = tuple[str, ...]


@dataclass(frozen=True)
class Schema:
    """Column roles: features, sensitive features, label, optional prediction."""

    feature_names: tuple[str, ...]
    sensitive_names: tuple[str, ...]
    label_name: str
    prediction_name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "sensitive_names", tuple(self.sensitive_names))
        if not self.feature_names:
            raise SchemaError("schema needs at least one non-sensitive feature")
        if not self.sensitive_names:
            raise SchemaError("schema needs at least one sensitive feature")
        names = list(self.all_names())
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"column names used in more than one role: {sorted(dupes)}")

    def all_names(self):
        names = list(self.feature_names) + list(self.sensitive_names) + [self.label_name]
        if self.prediction_name is not None:
            names.append(self.prediction_name)
        return names

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @classmethod
    def from_json(cls, path) -> "Schema":
        """Load the JSON sidecar {features, sensitive, label, prediction}."""
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read schema sidecar {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema sidecar {path} is not valid JSON: {exc}") from exc
        try:
            return cls(
                feature_names=tuple(raw["features"]),
                sensitive_names=tuple(raw["sensitive"]),
                label_name=raw["label"],
                prediction_name=raw.get("prediction"),
            )
        except KeyError as exc:
            raise SchemaError(f"schema sidecar is missing key {exc}") from exc

    def to_json(self, path):
        payload = {
            "features": list(self.feature_names),
            "sensitive": list(self.sensitive_names),
            "label": self.label_name,
            "prediction": self.prediction_name,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable rows of (x, a, y, optional yhat) with optional weights."""

    schema: Schema
    x: np.ndarray          # (n, k) float64
    a: np.ndarray          # (n, m_s) str
    y: np.ndarray          # (n,) int8 in {0, 1}
    yhat: np.ndarray | None = None   # (n,) int8 in {0, 1}
    weights: np.ndarray | None = None  # (n,) non-negative float64

    def __post_init__(self):
        x = _frozen(np.ascontiguousarray(self.x, dtype=np.float64))
        a = _frozen(np.asarray(self.a, dtype=str))
        y = _frozen(np.asarray(self.y, dtype=np.int8))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        if self.yhat is not None:
            object.__setattr__(self, "yhat", _frozen(np.asarray(self.yhat, dtype=np.int8)))
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=np.float64)))
        self._validate()

    def _validate(self):
        n = len(self.y)
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if self.x.shape != (n, self.schema.n_features):
            raise DataError(
                f"feature matrix shape {self.x.shape} does not match "
                f"{n} rows x {self.schema.n_features} features"
            )
        if self.a.shape != (n, len(self.schema.sensitive_names)):
            raise DataError("sensitive matrix shape does not match schema")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("label column contains values outside {0, 1}")
        if self.yhat is not None:
            if self.yhat.shape != (n,):
                raise DataError("prediction column length does not match rows")
            if not np.isin(self.yhat, (0, 1)).all():
                raise DataError("prediction column contains values outside {0, 1}")
        if self.weights is not None:
            if self.weights.shape != (n,):
                raise DataError("weight column length does not match rows")
            if np.any(self.weights < 0) or not np.isfinite(self.weights).all():
                raise DataError("weights must be finite and non-negative")
            if not np.any(self.weights > 0):
                raise DataError("weights must include at least one positive entry")
        if not np.isfinite(self.x).all():
            bad = np.argwhere(~np.isfinite(self.x))[0]
            raise DataError(
                "non-finite feature value",
                row=int(bad[0]),
                column=self.schema.feature_names[int(bad[1])],
            )

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def effective_weights(self) -> np.ndarray:
        """Per-row weights, defaulting to 1.0 when none were attached."""
        if self.weights is None:
            return np.ones(self.n_rows)
        return np.asarray(self.weights, dtype=np.float64)

    def replace(self, **changes) -> "Dataset":
        """Copy with the given fields replaced (arrays are re-frozen)."""
        fields = {
            "schema": self.schema,
            "x": self.x,
            "a": self.a,
            "y": self.y,
            "yhat": self.yhat,
            "weights": self.weights,
        }
        fields.update(changes)
        return Dataset(**fields)

    def take(self, indices) -> "Dataset":
        """Row subset in the given index order, preserving weights/predictions."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            schema=self.schema,
            x=self.x[idx].copy(),
            a=self.a[idx].copy(),
            y=self.y[idx].copy(),
            yhat=None if self.yhat is None else self.yhat[idx].copy(),
            weights=None if self.weights is None else self.weights[idx].copy(),
        )

    def feature_column(self, name: str) -> np.ndarray:
        return self.x[:, self.schema.feature_names.index(name)]


def group_keys(d: Dataset) -> list[GroupKey]:
    """Distinct sensitive assignments in first-occurrence order."""
    seen: dict[GroupKey, None] = {}
    for row in d.a:
        seen.setdefault(tuple(str(v) for v in row), None)
    return list(seen)


def group_mask(d: Dataset, g: GroupKey) -> np.ndarray:
    if len(g) != len(d.schema.sensitive_names):
        raise GroupError(
            f"group key arity {len(g)} does not match "
            f"{len(d.schema.sensitive_names)} sensitive features"
        )
    mask = np.ones(d.n_rows, dtype=bool)
    for j, value in enumerate(g):
        mask &= d.a[:, j] == value
    return mask


def filter_group(d: Dataset, g: GroupKey) -> Dataset:
    """Sub-dataset of rows whose sensitive vector equals g, order preserved."""
    mask = group_mask(d, g)
    if not mask.any():
        raise GroupError(f"sensitive group {g} is absent from the dataset")
    return d.take(np.flatnonzero(mask))


def format_group(g: GroupKey) -> str:
    return "|".join(g)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _parse_binary(cell: str, row: int, column: str) -> int:
    text = cell.strip()
    if text == "0":
        return 0
    if text == "1":
        return 1
    raise DataError(f"expected 0 or 1, got {cell!r}", row=row, column=column)


def _parse_real(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if not text:
        raise DataError("missing cell", row=row, column=column)
    try:
        return float(text)
    except ValueError:
        raise DataError(f"unparseable numeric cell {cell!r}", row=row, column=column) from None


def load_csv(path, schema: Schema, weight_name: str | None = None) -> Dataset:
    """Parse a comma-separated file (one header row, UTF-8) into a Dataset.

    Row numbers in error messages are 1-based data-row indices, i.e. the
    header is row 0.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        col = {}
        for name in schema.all_names() + ([weight_name] if weight_name else []):
            if name not in header:
                raise DataError(f"{path}: missing column {name!r} in header")
            col[name] = header.index(name)

        xs, as_, ys, yhats, ws = [], [], [], [], []
        for i, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(
                    f"expected {len(header)} cells, got {len(record)}", row=i
                )
            xs.append([_parse_real(record[col[n]], i, n) for n in schema.feature_names])
            as_.append([record[col[n]].strip() for n in schema.sensitive_names])
            ys.append(_parse_binary(record[col[schema.label_name]], i, schema.label_name))
            if schema.prediction_name is not None:
                yhats.append(_parse_binary(record[col[schema.prediction_name]], i, schema.prediction_name))
            if weight_name is not None:
                ws.append(_parse_real(record[col[weight_name]], i, weight_name))

    if not ys:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        schema=schema,
        x=np.array(xs, dtype=np.float64),
        a=np.array(as_, dtype=str),
        y=np.array(ys, dtype=np.int8),
        yhat=np.array(yhats, dtype=np.int8) if yhats else None,
        weights=np.array(ws, dtype=np.float64) if ws else None,
    )


def write_csv(d: Dataset, path, weight_name: str | None = None):
    """Inverse of load_csv; float cells use repr so round-trips are exact."""
    header = list(d.schema.feature_names) + list(d.schema.sensitive_names) + [d.schema.label_name]
    if d.schema.prediction_name is not None:
        header.append(d.schema.prediction_name)
    if weight_name is not None:
        if d.weights is None:
            raise DataError("cannot write weights: dataset has none")
        header.append(weight_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(d.n_rows):
            record = [repr(float(v)) for v in d.x[i]]
            record += [str(v) for v in d.a[i]]
            record.append(str(int(d.y[i])))
            if d.schema.prediction_name is not None:
                record.append(str(int(d.yhat[i])))
            if weight_name is not None:
                record.append(repr(float(d.weights[i])))
            writer.writerow(record)


# ---------------------------------------------------------------------------
# Synthetic insurance example
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedNormal:
    """Gaussian restricted to [lo, hi], sampled by rejection."""

    mean: float
    sd: float
    lo: float = 0.0
    hi: float = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        filled = 0
        while filled < size:
            draw = rng.normal(self.mean, self.sd, size=2 * (size - filled))
            keep = draw[(draw >= self.lo) & (draw <= self.hi)][: size - filled]
            out[filled:filled + len(keep)] = keep
            filled += len(keep)
        return out


@dataclass(frozen=True)
class InsuranceParams:
    """Age-conditional (income, fitness) distributions for the toy example.

    The defaults were frozen after a one-off grid search so that the fixed
    decision tree with thresholds (0.61, 0.29, 0.69) reaches group positive
    rates of about 0.704 (young) and 0.172 (elderly).
    """

    income_young: TruncatedNormal = field(default_factory=lambda: TruncatedNormal(0.4272, 0.1078))
    income_elderly: TruncatedNormal = field(default_factory=lambda: TruncatedNormal(0.5956, 0.0800))
    fitness_young: TruncatedNormal = field(default_factory=lambda: TruncatedNormal(0.7083, 0.1253))
    fitness_elderly: TruncatedNormal = field(default_factory=lambda: TruncatedNormal(0.3831, 0.1462))
    label_noise: float = 0.05


INSURANCE_SCHEMA = Schema(
    feature_names=("income", "fitness"),
    sensitive_names=("age",),
    label_name="insured",
)

#: Seed used by the repo's own examples and acceptance checks.
INSURANCE_SEED = 38


def generate_insurance_example(
    n_per_group: int,
    params: InsuranceParams | None = None,
    seed: int = INSURANCE_SEED,
) -> Dataset:
    """Two equal-size age groups with age-conditional income and fitness.

    The ground-truth label is "insurable by the fixed tree" with a small
    seeded flip rate, so trainable classifiers have signal plus noise.
    Bit-reproducible given (n_per_group, params, seed).
    """
    if n_per_group < 1:
        raise DataError("n_per_group must be >= 1")
    params = params or InsuranceParams()
    rng = np.random.default_rng(seed)

    income = np.concatenate([
        params.income_young.sample(rng, n_per_group),
        params.income_elderly.sample(rng, n_per_group),
    ])
    fitness = np.concatenate([
        params.fitness_young.sample(rng, n_per_group),
        params.fitness_elderly.sample(rng, n_per_group),
    ])
    age = np.array(["young"] * n_per_group + ["elderly"] * n_per_group)

    # Label: the DT1 rule, with a seeded flip rate to keep training honest.
    rule = np.where(
        fitness >= 0.61,
        (income >= 0.29).astype(np.int8),
        (income >= 0.69).astype(np.int8),
    )
    flips = rng.random(2 * n_per_group) < params.label_noise
    y = np.where(flips, 1 - rule, rule).astype(np.int8)

    return Dataset(
        schema=INSURANCE_SCHEMA,
        x=np.column_stack([income, fitness]),
        a=age.reshape(-1, 1),
        y=y,
    )
