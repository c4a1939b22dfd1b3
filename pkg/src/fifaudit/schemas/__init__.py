"""JSON Schemas for the machine-readable CLI outputs."""

import json
from importlib import resources

_NAMES = ("metric_result", "fif_report", "intervention_record")


def load(name: str) -> dict:
    if name not in _NAMES:
        raise KeyError(f"unknown schema {name!r}; available: {_NAMES}")
    ref = resources.files(__package__).joinpath(f"{name}.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))
