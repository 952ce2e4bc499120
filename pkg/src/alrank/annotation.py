"""Simulated annotator: qrels-backed triplet construction with assessment counting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import Qrels, RankedList, TrainingTriplet


@dataclass(frozen=True)
class Exhausted:
    """No relevant document found within the examined depth."""

    examined: int


@dataclass(frozen=True)
class AnnotationRecord:
    iteration: int
    query_id: str
    outcome: str  # "triplet" or "skipped"
    assessments: int
    positive_id: str = ""
    negative_id: str = ""


def first_relevant(
    ranked: RankedList, qrels: Qrels, depth: int
) -> tuple[int, str] | Exhausted:
    """Walk the ranking top-down; (1-based rank, doc id) of the first relevant hit."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    docs = ranked.doc_ids()[:depth]
    for rank, did in enumerate(docs, start=1):
        if qrels.is_relevant(ranked.query_id, did):
            return rank, did
    return Exhausted(examined=len(docs))


def sample_negative(
    query_id: str,
    negatives_pool: RankedList,
    qrels: Qrels,
    rng: np.random.Generator,
    exclude: set[str],
    exclude_relevant: bool = True,
) -> str:
    """Uniform draw from the BM25 negatives pool, excluding given and judged-relevant docs."""
    eligible = [
        did
        for did in negatives_pool.doc_ids()
        if did not in exclude
        and not (exclude_relevant and qrels.is_relevant(query_id, did))
    ]
    if not eligible:
        raise ValueError(f"no eligible negative for query {query_id}")
    return eligible[rng.integers(len(eligible))]


def annotate_query(
    query_id: str,
    reranked: RankedList,
    bm25_negatives: RankedList,
    qrels: Qrels,
    rng: np.random.Generator,
    depth: int = 100,
    exclude_relevant_negatives: bool = True,
) -> tuple[TrainingTriplet | None, int]:
    """Query-level annotation: positive is the first relevant in the reranked list.

    Assessments equal the rank of the positive, or the examined depth when the
    walk is exhausted (in which case no triplet is produced).
    """
    found = first_relevant(reranked, qrels, depth)
    if isinstance(found, Exhausted):
        return None, found.examined
    rank, positive = found
    negative = sample_negative(
        query_id, bm25_negatives, qrels, rng, {positive}, exclude_relevant_negatives
    )
    return TrainingTriplet(query_id, positive, negative), rank


def annotate_pair(
    query_id: str,
    selected_doc: str,
    qrels: Qrels,
    reranked: RankedList,
    bm25_negatives: RankedList,
    rng: np.random.Generator,
    depth: int = 100,
    exclude_relevant_negatives: bool = True,
) -> tuple[TrainingTriplet | None, int]:
    """Pair-level annotation for uncertainty selection.

    A relevant selected doc becomes the positive (1 assessment). An irrelevant
    one becomes the negative, with the positive found by walking the reranked
    list (1 + rank assessments).
    """
    if qrels.is_relevant(query_id, selected_doc):
        negative = sample_negative(
            query_id, bm25_negatives, qrels, rng, {selected_doc}, exclude_relevant_negatives
        )
        return TrainingTriplet(query_id, selected_doc, negative), 1
    found = first_relevant(reranked, qrels, depth)
    if isinstance(found, Exhausted):
        return None, 1 + found.examined
    rank, positive = found
    if positive == selected_doc:
        # cannot happen when qrels are consistent, but keep the triplet valid
        raise ValueError(f"selected doc {selected_doc} is both positive and negative")
    return TrainingTriplet(query_id, positive, selected_doc), 1 + rank


@dataclass
class AssessmentLedger:
    """Per-iteration assessment counts with cumulative totals A(i)."""

    records: list[AnnotationRecord] = field(default_factory=list)
    per_iteration: dict[int, int] = field(default_factory=dict)

    def cumulative(self, iteration: int) -> int:
        return sum(c for i, c in self.per_iteration.items() if i <= iteration)

    def total(self) -> int:
        return sum(self.per_iteration.values())

    def update(self, iteration: int, results: list[AnnotationRecord]) -> None:
        if self.per_iteration and iteration <= max(self.per_iteration):
            raise ValueError(
                f"iteration {iteration} not after recorded iterations "
                f"{sorted(self.per_iteration)}"
            )
        for r in results:
            if r.iteration != iteration:
                raise ValueError(
                    f"record for iteration {r.iteration} in update for {iteration}"
                )
        self.per_iteration[iteration] = sum(r.assessments for r in results)
        self.records.extend(results)

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "query_id", "outcome", "assessments", "positive_id", "negative_id"]
            )
            for r in self.records:
                writer.writerow(
                    [r.iteration, r.query_id, r.outcome, r.assessments, r.positive_id, r.negative_id]
                )

    @classmethod
    def load_csv(cls, path: str | Path) -> "AssessmentLedger":
        ledger = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        by_iteration: dict[int, list[AnnotationRecord]] = {}
        for row in rows:
            rec = AnnotationRecord(
                iteration=int(row["iteration"]),
                query_id=row["query_id"],
                outcome=row["outcome"],
                assessments=int(row["assessments"]),
                positive_id=row["positive_id"],
                negative_id=row["negative_id"],
            )
            by_iteration.setdefault(rec.iteration, []).append(rec)
        for iteration in sorted(by_iteration):
            ledger.update(iteration, by_iteration[iteration])
        return ledger
