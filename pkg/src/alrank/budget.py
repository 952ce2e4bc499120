"""Annotation/compute cost model and per-iteration cost reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class CostConfig:
    """Rate constants: assessments/hour, annotator $/h, accelerator $/h, CPU $/h."""

    assessments_per_hour: float = 75.0
    annotator_cost_per_hour: float = 50.0
    gpu_cost_per_hour: float = 3.060
    cpu_cost_per_hour: float = 0.408
    selection_hours_per_iteration: float = 0.05

    def __post_init__(self):
        for name in (
            "assessments_per_hour",
            "annotator_cost_per_hour",
            "gpu_cost_per_hour",
            "cpu_cost_per_hour",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.selection_hours_per_iteration < 0:
            raise ValueError("selection_hours_per_iteration must be >= 0")


@dataclass
class TimeLedger:
    """Per-iteration training hours (accelerator meter) and selection hours."""

    training_hours: dict[int, float] = field(default_factory=dict)
    selection_hours: dict[int, float] = field(default_factory=dict)

    def record(self, iteration: int, training: float, selection: float) -> None:
        if training < 0 or selection < 0:
            raise ValueError("hours must be >= 0")
        self.training_hours[iteration] = training
        self.selection_hours[iteration] = selection

    def cumulative_training(self, iteration: int) -> float:
        return sum(h for i, h in self.training_hours.items() if i <= iteration)

    def mean_selection(self) -> float:
        if not self.selection_hours:
            return 0.0
        return sum(self.selection_hours.values()) / len(self.selection_hours)


@dataclass(frozen=True)
class CostRow:
    iteration: int
    assessments: int
    annotation_cost: float
    compute_cost: float
    total: float


@dataclass
class CostReport:
    rows: list[CostRow]

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "assessments", "C_A", "C_C", "C_total"])
            for r in self.rows:
                writer.writerow(
                    [r.iteration, r.assessments, repr(r.annotation_cost), repr(r.compute_cost), repr(r.total)]
                )


def annotation_cost(assessments: int, config: CostConfig) -> float:
    """Cumulative annotation spend for A(i) assessments."""
    if assessments < 0:
        raise ValueError("assessments must be >= 0")
    return (assessments / config.assessments_per_hour) * config.annotator_cost_per_hour


def compute_cost(
    gpu_hours: float, iteration: int, config: CostConfig, selection_hours: float | None = None
) -> float:
    """Cumulative compute spend: training on the accelerator meter plus
    per-iteration selection on the CPU meter (no selection before iteration 2)."""
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    h_cpu = (
        config.selection_hours_per_iteration if selection_hours is None else selection_hours
    )
    return gpu_hours * config.gpu_cost_per_hour + h_cpu * config.cpu_cost_per_hour * (
        iteration - 1
    )


def total_cost(
    assessment_totals: dict[int, int],
    time_ledger: TimeLedger,
    config: CostConfig,
    measured_selection: bool = False,
) -> CostReport:
    """Per-iteration cost rows from cumulative assessment and time ledgers.

    `assessment_totals` maps iteration -> cumulative A(i). With
    `measured_selection`, the mean measured selection time replaces the
    configured per-iteration constant.
    """
    iterations = sorted(assessment_totals)
    if time_ledger.training_hours and sorted(time_ledger.training_hours) != iterations:
        raise ValueError(
            f"time ledger iterations {sorted(time_ledger.training_hours)} do not "
            f"match assessment iterations {iterations}"
        )
    selection_hours = time_ledger.mean_selection() if measured_selection else None
    rows = []
    for i in iterations:
        c_a = annotation_cost(assessment_totals[i], config)
        c_c = compute_cost(time_ledger.cumulative_training(i), i, config, selection_hours)
        rows.append(
            CostRow(
                iteration=i,
                assessments=assessment_totals[i],
                annotation_cost=c_a,
                compute_cost=c_c,
                total=c_a + c_c,
            )
        )
    return CostReport(rows)


def load_cost_config(path: str | Path) -> CostConfig:
    """Read a flat key=value or JSON-style cost config file."""
    import json

    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("{"):
        data = json.loads(text)
    else:
        data = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            data[key.strip()] = float(value.strip())
    return CostConfig(**data)
