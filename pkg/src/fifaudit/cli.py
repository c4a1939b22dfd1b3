"""Command-line audit runner.

Four subcommands: `metrics` (exact fairness metrics), `explain` (ranked
influence report with an optional SVG chart), `check` (identity and
oracle fixtures), and `simulate` (before/intervene/retrain/after
comparison).  All randomness flows through --seed, and every output file
is written atomically (temp + rename) so failures leave no partial
output.

Exit codes: 0 success, 2 usage error, 3 data/contract error, 4 check
failure.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path

import click

from . import interventions as iv
from .checks import run_checks
from .classifiers import (
    ThresholdTree,
    from_prediction_column,
    train_logistic,
    train_tree,
)
from .dataset import (
    INSURANCE_SEED,
    Schema,
    format_group,
    generate_insurance_example,
    load_csv,
    write_csv,
)
from .errors import FifauditError
from .fif import AuditOptions, compute_fif, rank_and_residual
from .metrics import MetricKind, compute_metric, equalized_odds, predictive_parity, statistical_parity
from .plotting import comparison_chart, fif_chart

EXIT_DATA_ERROR = 3
EXIT_CHECK_FAILURE = 4

METRIC_CHOICES = {
    "sp": MetricKind.STATISTICAL_PARITY,
    "eo": MetricKind.EQUALIZED_ODDS,
    "pp": MetricKind.PREDICTIVE_PARITY,
}


def _atomic_write(path: Path, data: str | bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    kwargs = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": ""}
    with open(tmp, mode, **kwargs) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_figure(render, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.svg")
    render(tmp)
    os.replace(tmp, path)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_inputs(data, schema):
    sc = Schema.from_json(schema)
    return load_csv(data, sc)


def _resolve_model(spec: str, d, seed: int):
    if spec == "logistic":
        return train_logistic(d)
    if spec == "tree":
        return train_tree(d)
    if spec == "column":
        return from_prediction_column(d)
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return ThresholdTree.from_json(path)
    raise click.UsageError(
        f"--model must be logistic|tree|column or a tree-spec JSON path, got {spec!r}"
    )


def _fail_data(exc: FifauditError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_DATA_ERROR)


common_options = [
    click.option("--data", required=True, type=click.Path(), help="CSV data file"),
    click.option("--schema", required=True, type=click.Path(), help="JSON schema sidecar"),
    click.option("--model", default="logistic", show_default=True,
                 help="logistic | tree | column | path to tree-spec JSON"),
    click.option("--seed", default=0, show_default=True, type=int),
    click.option("--out", required=True, type=click.Path(), help="output file path"),
]


def _add_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def main():
    """Fairness-influence auditing for tabular binary classifiers."""


@main.command()
@_add_options(common_options)
@click.option("--format", "fmt", default="json", show_default=True,
              type=click.Choice(["json", "csv"]))
def metrics(data, schema, model, seed, out, fmt):
    """Compute all three group-fairness metrics of the model on the data."""
    try:
        d = _load_inputs(data, schema)
        m = _resolve_model(model, d, seed)
        results = [statistical_parity(m, d), equalized_odds(m, d), predictive_parity(m, d)]
    except FifauditError as exc:
        _fail_data(exc)
    if fmt == "json":
        payload = {r.kind.value: r.to_dict() for r in results}
        _atomic_write(Path(out), _json_text(payload))
    else:
        rows = []
        for r in results:
            rows.append([r.kind.value, "value", "", "", repr(r.value)])
            rows.append([r.kind.value, "a_max", format_group(r.a_max), "", ""])
            rows.append([r.kind.value, "a_min", format_group(r.a_min), "", ""])
            if r.kind.value == "sp":
                for g, rate in r.rates.items():
                    rows.append([r.kind.value, "rate", format_group(g), "", repr(rate)])
            else:
                for (g, c), rate in r.rates.items():
                    rows.append([r.kind.value, "rate", format_group(g), str(c), repr(rate)])
        _atomic_write(Path(out), _csv_text(["metric", "record", "group", "class", "value"], rows))
    click.echo(f"wrote {out}")


@main.command()
@_add_options(common_options)
@click.option("--metric", "metric_name", default="sp", show_default=True,
              type=click.Choice(sorted(METRIC_CHOICES)))
@click.option("--max-order", default=2, show_default=True, type=click.IntRange(1, 3))
@click.option("--top", default=7, show_default=True, type=click.IntRange(min=1))
@click.option("--format", "fmt", default="json", show_default=True,
              type=click.Choice(["json", "csv", "svg"]))
def explain(data, schema, model, seed, out, metric_name, max_order, top, fmt):
    """Rank influence of feature subsets on the chosen fairness metric."""
    try:
        d = _load_inputs(data, schema)
        m = _resolve_model(model, d, seed)
        kind = METRIC_CHOICES[metric_name]
        report = compute_fif(kind, m, d, max_order=max_order, opts=AuditOptions(seed=seed))
        ranked = rank_and_residual(report, top)
    except FifauditError as exc:
        _fail_data(exc)

    payload = report.to_dict()
    payload["ranked"] = [{"label": label, "w": w} for label, w in ranked.rows()]
    out = Path(out)
    if fmt == "json":
        _atomic_write(out, _json_text(payload))
    elif fmt == "csv":
        rows = [[label, repr(w)] for label, w in ranked.rows()]
        rows.append(["estimated_bias", repr(report.estimated_bias)])
        rows.append(["bias", repr(report.bias)])
        _atomic_write(out, _csv_text(["subset", "influence"], rows))
    else:
        # chart at <out>.svg with the machine-readable report alongside
        _atomic_figure(lambda p: fif_chart(report, ranked, p), out.with_suffix(".svg"))
        _atomic_write(out.with_suffix(".json"), _json_text(payload))
        out = out.with_suffix(".svg")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(), help="optional JSON results file")
def check(seed, out):
    """Run the identity and oracle fixtures; nonzero exit on any failure."""
    results = run_checks(seed)
    width = max(len(name) for name, _, _ in results)
    ok_all = True
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        ok_all &= ok
        click.echo(f"{status}  {name:<{width}}  {detail}")
    if out is not None:
        payload = [
            {"name": name, "passed": ok, "detail": detail}
            for name, ok, detail in results
        ]
        _atomic_write(Path(out), _json_text(payload))
    if not ok_all:
        sys.exit(EXIT_CHECK_FAILURE)


@main.command()
@_add_options(common_options)
@click.option("--metric", "metric_name", default="sp", show_default=True,
              type=click.Choice(sorted(METRIC_CHOICES)))
@click.option("--max-order", default=2, show_default=True, type=click.IntRange(1, 3))
@click.option("--top", default=7, show_default=True, type=click.IntRange(min=1))
@click.option("--intervention", default="reweigh", show_default=True,
              type=click.Choice(["reweigh", "poison"]))
@click.option("--fraction", default=0.5, show_default=True, type=float,
              help="share of flippable rows poisoned (poison only)")
@click.option("--format", "fmt", default="json", show_default=True,
              type=click.Choice(["json", "csv", "svg"]))
def simulate(data, schema, model, seed, out, metric_name, max_order, top,
             intervention, fraction, fmt):
    """Before/intervene/retrain/after comparison of metrics and influences."""
    if model not in ("logistic", "tree"):
        raise click.UsageError("simulate needs a trainable model: logistic or tree")
    try:
        d = _load_inputs(data, schema)
        kind = METRIC_CHOICES[metric_name]
        opts = AuditOptions(seed=seed)

        def audit(dataset, trained):
            return (
                compute_metric(kind, trained, dataset),
                compute_fif(kind, trained, dataset, max_order=max_order, opts=opts),
            )

        trainer = train_logistic if model == "logistic" else train_tree
        before_metric, before_fif = audit(d, trainer(d))
        if intervention == "reweigh":
            modified = iv.reweigh(d)
            params = {}
        else:
            modified = iv.poison_labels(d, fraction, seed)
            params = {"fraction": fraction, "seed": seed}
        retrained = trainer(modified)
        after_metric, after_fif = audit(d, retrained)
        record = iv.build_record(intervention, params, before_metric, after_metric,
                                 before_fif, after_fif)
    except FifauditError as exc:
        _fail_data(exc)

    out = Path(out)
    if fmt == "svg":
        _atomic_write(out.with_suffix(".json"), _json_text(record.to_dict()))
    elif fmt == "json":
        _atomic_write(out, _json_text(record.to_dict()))
    else:
        rows = [[" & ".join(names), repr(dv)] for names, dv in record.deltas]
        rows.append(["bias_before", repr(record.before.value)])
        rows.append(["bias_after", repr(record.after.value)])
        _atomic_write(out, _csv_text(["subset", "delta_influence"], rows))
    # a before/after chart is always paired with the record
    _atomic_figure(lambda p: comparison_chart(record, top, p), out.with_suffix(".svg"))
    click.echo(
        f"{metric_name} before={record.before.value:.4f} "
        f"after={record.after.value:.4f}; wrote {out}"
    )


@main.command("generate-example")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--n-per-group", default=500, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=INSURANCE_SEED, show_default=True, type=int)
def generate_example(out_dir, n_per_group, seed):
    """Write the synthetic insurance dataset, schema, and fixed-tree specs."""
    from .classifiers import insurance_tree_dt1, insurance_tree_dt2

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = generate_insurance_example(n_per_group, seed=seed)
    write_csv(d, out / "insurance.csv")
    d.schema.to_json(out / "insurance.schema.json")
    insurance_tree_dt1().to_json(out / "dt1.json")
    insurance_tree_dt2().to_json(out / "dt2.json")
    click.echo(f"wrote insurance.csv, insurance.schema.json, dt1.json, dt2.json in {out}")


if __name__ == "__main__":
    main()
