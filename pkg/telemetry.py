"""
Trial reports for the command-line driver.

A report is one run of the CLI: the configuration, the mode, the seed, one row
per trial (a sampled run or an enumerated leaf) and a summary. Serialization
is deterministic: JSON is key-sorted and CSV uses a fixed column order. Floats
are written with 17 significant digits in both, which round-trips every double.

Usage:
    report = TrialReport(config={"d1": 2, "d2": 2, "d": 4}, mode="sample", seed=7)
    report.add_trial(TrialRecord(trial_id="7:0", outcomes={...}, ...))
    report.summary = summarize_trials(report.trials, tolerance=1e-9)
    report.write("json")  # stdout
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Any

from protocol import MESSAGE_TAGS

CSV_COLUMNS = ["trial_id", *MESSAGE_TAGS, "probability", "fidelity_alpha", "fidelity_beta"]

# Stands in for a float while json lays out the document; json escapes the NUL
_FLOAT_SLOT = "\x00float"
_FLOAT_SLOT_PATTERN = re.compile(r'"\\u0000float(\d+)"')


def format_float(value: float) -> str:
    """17 significant digits, always with a fraction or exponent so it reads back as a float."""
    text = format(value, ".17g")
    return text if any(c in text for c in ".e") else f"{text}.0"


def _slot_floats(value: Any, floats: list[str]) -> Any:
    """Copy value with each finite float replaced by a numbered slot and non-finite ones by None."""
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        floats.append(format_float(value))
        return f"{_FLOAT_SLOT}{len(floats) - 1}"
    if isinstance(value, dict):
        return {k: _slot_floats(v, floats) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_slot_floats(v, floats) for v in value]
    return value


def _csv_float(value: float | None) -> str:
    if value is None or not math.isfinite(value):
        return ""
    return format(value, ".17g")


@dataclass
class TrialRecord:
    """One sampled run or one enumerated branch leaf."""

    trial_id: str
    outcomes: dict[str, int | None]
    probability: float | None
    fidelity_alpha: float | None
    fidelity_beta: float | None
    sampled: bool = False
    input_label: str = ""

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "input": self.input_label,
            "outcomes": {tag: self.outcomes.get(tag) for tag in MESSAGE_TAGS},
            "probability": self.probability,
            "sampled": self.sampled,
            "fidelity_alpha": self.fidelity_alpha,
            "fidelity_beta": self.fidelity_beta,
        }

    def to_row(self) -> list[str]:
        row = [self.trial_id]
        for tag in MESSAGE_TAGS:
            value = self.outcomes.get(tag)
            row.append(str(-1 if value is None else value))
        row.extend(_csv_float(v) for v in (self.probability, self.fidelity_alpha, self.fidelity_beta))
        return row


@dataclass
class TrialReport:
    config: dict | None
    mode: str
    seed: int
    trials: list[TrialRecord] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def add_trial(self, trial: TrialRecord) -> None:
        self.trials.append(trial)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mode": self.mode,
            "seed": self.seed,
            "trials": [t.to_dict() for t in self.trials],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        floats: list[str] = []
        text = json.dumps(_slot_floats(self.to_dict(), floats), sort_keys=True, indent=2)
        return _FLOAT_SLOT_PATTERN.sub(lambda m: floats[int(m.group(1))], text) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for trial in self.trials:
            writer.writerow(trial.to_row())
        return buffer.getvalue()

    def render(self, output_format: str) -> str:
        if output_format == "json":
            return self.to_json()
        if output_format == "csv":
            return self.to_csv()
        raise ValueError(f"Unknown output format {output_format!r}")

    def write(self, output_format: str, path: str | None = None) -> None:
        """Write to path, or to stdout when path is None."""
        text = self.render(output_format)
        if path is None:
            sys.stdout.write(text)
            return
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(text)


def summarize_trials(trials: list[TrialRecord], tolerance: float) -> dict[str, Any]:
    """Min/mean fidelities over trials and whether all of them reach 1 - tolerance."""
    values = [
        v for t in trials for v in (t.fidelity_alpha, t.fidelity_beta) if v is not None
    ]
    if not values:
        return {"trial_count": len(trials), "min_fidelity": None, "mean_fidelity": None, "passed": False}
    return {
        "trial_count": len(trials),
        "min_fidelity": min(values),
        "mean_fidelity": sum(values) / len(values),
        "passed": min(values) >= 1.0 - tolerance,
    }
