"""Ranking effectiveness (nDCG@k), paired significance tests, report emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .datamodel import Qrels, Run


@dataclass
class MetricResult:
    per_query: dict[str, float]
    k: int

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return sum(self.per_query.values()) / len(self.per_query)

    @property
    def query_count(self) -> int:
        return len(self.per_query)


@dataclass(frozen=True)
class SignificanceResult:
    t_statistic: float
    p_value: float
    alpha: float
    n_comparisons: int
    significant: bool

    @property
    def corrected_alpha(self) -> float:
        return self.alpha / self.n_comparisons


def _gain(grade: int, exponential: bool) -> float:
    return float(2**grade - 1) if exponential else float(grade)


def ndcg_at_k(run: Run, qrels: Qrels, k: int = 10, exponential_gain: bool = False) -> MetricResult:
    """Mean nDCG@k over queries shared by run and qrels.

    Queries without any positively graded judgment are excluded from the mean.
    Unjudged documents contribute zero gain.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    shared = [qid for qid in run.query_ids() if qid in qrels.query_ids()]
    if not shared:
        raise ValueError("run and qrels share no queries")
    per_query: dict[str, float] = {}
    for qid in shared:
        grades = qrels.grades_for(qid)
        ideal = sorted((g for g in grades.values() if g > 0), reverse=True)
        if not ideal:
            continue
        idcg = sum(
            _gain(g, exponential_gain) / math.log2(i + 2) for i, g in enumerate(ideal[:k])
        )
        dcg = sum(
            _gain(grades.get(did, 0), exponential_gain) / math.log2(rank + 1)
            for rank, (did, _) in enumerate(run[qid].entries[:k], start=1)
        )
        per_query[qid] = dcg / idcg
    return MetricResult(per_query=per_query, k=k)


# -- Student-t distribution via continued-fraction incomplete beta ----------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided p-value for a t statistic with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_ttest(
    a: list[float], b: list[float], alpha: float = 0.05, n_comparisons: int = 3
) -> SignificanceResult:
    """Two-sided paired t-test with Bonferroni-corrected decision threshold."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 paired observations")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return SignificanceResult(0.0, 1.0, alpha, n_comparisons, False)
        t = math.copysign(math.inf, mean)
    else:
        t = mean / math.sqrt(var / n)
    p = t_sf_two_sided(t, n - 1)
    return SignificanceResult(
        t_statistic=t,
        p_value=p,
        alpha=alpha,
        n_comparisons=n_comparisons,
        significant=p < alpha / n_comparisons,
    )


# -- report emission --------------------------------------------------------

MAIN_HEADER = [
    "strategy",
    "seed",
    "iteration",
    "train_size",
    "ndcg10",
    "assessments",
    "C_A",
    "C_C",
    "C_total",
]


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def emit_reports(
    rows: list[dict],
    out_dir: str | Path,
    variability: list[dict] | None = None,
) -> dict[str, Path]:
    """Write the experiment CSVs: main table, figure-shaped data, summary table.

    `rows` carry one record per (strategy, seed, iteration) with the MAIN_HEADER
    fields; `variability` rows carry (strategy, size, seed, ndcg10).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    main_path = out / "results.csv"
    with open(main_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MAIN_HEADER)
        for row in rows:
            writer.writerow([_fmt(row[key]) for key in MAIN_HEADER])
    written["results"] = main_path

    stacked_path = out / "fig_cost_stacked.csv"
    with open(stacked_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "iteration", "ndcg10", "C_A", "C_C"])
        for row in rows:
            writer.writerow(
                [_fmt(row[k]) for k in ("strategy", "seed", "iteration", "ndcg10", "C_A", "C_C")]
            )
    written["fig_cost_stacked"] = stacked_path

    assess_path = out / "fig_ndcg_vs_assessments.csv"
    with open(assess_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "assessments", "ndcg10"])
        for row in rows:
            writer.writerow(
                [_fmt(row[k]) for k in ("strategy", "seed", "assessments", "ndcg10")]
            )
    written["fig_ndcg_vs_assessments"] = assess_path

    summary_path = out / "summary.csv"
    sizes = sorted({row["train_size"] for row in rows})
    strategies = sorted({row["strategy"] for row in rows})
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy"] + [f"size_{s}" for s in sizes])
        for strategy in strategies:
            cells = []
            for size in sizes:
                vals = [
                    row["ndcg10"]
                    for row in rows
                    if row["strategy"] == strategy and row["train_size"] == size
                ]
                cells.append(repr(sum(vals) / len(vals)) if vals else "-")
            writer.writerow([strategy] + cells)
    written["summary"] = summary_path

    if variability is not None:
        var_path = out / "variability.csv"
        with open(var_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "size", "seed", "ndcg10"])
            for row in variability:
                writer.writerow(
                    [_fmt(row[k]) for k in ("strategy", "size", "seed", "ndcg10")]
                )
        written["variability"] = var_path

    return written
