"""Incremental annotate/train/evaluate loop with resumable persisted state."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import annotation as anno
from .budget import CostConfig, TimeLedger, total_cost
from .datamodel import Corpus, Qrels, QuerySet, RankedList, Run, TrainingTriplet
from .evaluation import ndcg_at_k
from .lexical import InvertedIndex, build_index, retrieve_topk
from .ranker import Ranker, RankerConfig, RankerState, load_checkpoint, save_checkpoint
from .selection import (
    SelectionConfig,
    select_diversity,
    select_qbc,
    select_random,
    select_uncertainty,
)

SCENARIOS = ("scratch", "retrain")


def derive_seed(master_seed: int, label: str, iteration: int = 0) -> int:
    """Independent labeled sub-seed stream from the master seed."""
    blob = f"{master_seed}|{label}|{iteration}".encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "scratch"
    initial_checkpoint: str | None = None
    iterations: int = 5
    schedule: tuple[int, ...] | None = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    ranker: RankerConfig = field(default_factory=RankerConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    master_seed: int = 0
    random_repeats: int = 4
    negatives_depth: int = 1000
    training_hours_per_sample_epoch: float = 1e-6
    exhausted_back_to_pool: bool = False
    eval_depth: int = 100

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "retrain" and not self.initial_checkpoint:
            raise ValueError("retrain scenario requires initial_checkpoint")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.schedule is not None and len(self.schedule) != self.iterations:
            raise ValueError(
                f"schedule length {len(self.schedule)} does not match "
                f"iterations {self.iterations}"
            )

    def batch_for(self, iteration: int) -> int:
        if self.schedule is not None:
            return self.schedule[iteration - 1]
        return self.selection.samples_per_iteration

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DataBundle:
    """Corpus, query splits, qrels and precomputed BM25 runs."""

    corpus: Corpus
    train_queries: QuerySet
    test_queries: QuerySet
    qrels: Qrels
    index: InvertedIndex
    candidates: Run  # train-query BM25 top candidate_depth
    negatives: Run  # train-query BM25 top negatives_depth
    test_candidates: Run


def make_bundle(
    corpus: Corpus,
    train_queries: QuerySet,
    test_queries: QuerySet,
    qrels: Qrels,
    candidate_depth: int = 100,
    negatives_depth: int = 1000,
    k1: float = 0.9,
    b: float = 0.4,
    index: InvertedIndex | None = None,
) -> DataBundle:
    if index is None:
        index = build_index(corpus, k1=k1, b=b)
    candidates, negatives = {}, {}
    for qid, text in train_queries.items():
        full = retrieve_topk(index, text, negatives_depth, query_id=qid)
        negatives[qid] = full
        candidates[qid] = full.top(candidate_depth)
    test_candidates = {
        qid: retrieve_topk(index, text, candidate_depth, query_id=qid)
        for qid, text in test_queries.items()
    }
    return DataBundle(
        corpus=corpus,
        train_queries=train_queries,
        test_queries=test_queries,
        qrels=qrels,
        index=index,
        candidates=Run("bm25-candidates", candidates),
        negatives=Run("bm25-negatives", negatives),
        test_candidates=Run("bm25-test", test_candidates),
    )


@dataclass
class IterationState:
    iteration: int
    selected: list  # query ids, or [qid, did] pairs for uncertainty
    pool: list[str]  # remaining pool after this iteration
    triplets: list[TrainingTriplet]  # cumulative annotated set D
    records: list[anno.AnnotationRecord]
    assessments_cumulative: int
    ndcg10: float
    training_hours: float
    selection_hours: float
    checkpoint_name: str
    stop_reason: str = ""

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "selected": self.selected,
            "pool": self.pool,
            "triplets": [[t.query_id, t.positive_id, t.negative_id] for t in self.triplets],
            "records": [asdict(r) for r in self.records],
            "assessments_cumulative": self.assessments_cumulative,
            "ndcg10": self.ndcg10,
            "training_hours": self.training_hours,
            "selection_hours": self.selection_hours,
            "checkpoint_name": self.checkpoint_name,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_json(cls, data: dict) -> "IterationState":
        return cls(
            iteration=data["iteration"],
            selected=data["selected"],
            pool=data["pool"],
            triplets=[TrainingTriplet(*t) for t in data["triplets"]],
            records=[anno.AnnotationRecord(**r) for r in data["records"]],
            assessments_cumulative=data["assessments_cumulative"],
            ndcg10=data["ndcg10"],
            training_hours=data["training_hours"],
            selection_hours=data["selection_hours"],
            checkpoint_name=data["checkpoint_name"],
            stop_reason=data["stop_reason"],
        )


class Experiment:
    """Runs the incremental annotation/training loop for one strategy and seed."""

    def __init__(self, config: ExperimentConfig, bundle: DataBundle, out_dir: str | Path | None = None):
        self.config = config
        self.bundle = bundle
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.ranker = Ranker(config.ranker)
        self._start_state = self._scenario_start()

    def _scenario_start(self) -> RankerState:
        if self.config.scenario == "retrain":
            return load_checkpoint(self.config.initial_checkpoint, self.config.ranker)
        return self.ranker.init_state(derive_seed(self.config.master_seed, "ranker-init"))

    # -- persistence -------------------------------------------------------

    def _write_config(self) -> None:
        assert self.out_dir is not None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        payload = asdict(self.config)
        payload["fingerprint"] = self.config.fingerprint()
        (self.out_dir / "config.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2, default=str), encoding="utf-8"
        )

    def _persist(self, state: IterationState, sel_state: RankerState) -> None:
        if self.out_dir is None:
            return
        save_checkpoint(sel_state, self.out_dir / state.checkpoint_name)
        path = self.out_dir / f"iter_{state.iteration:04d}.json"
        path.write_text(json.dumps(state.to_json(), sort_keys=True), encoding="utf-8")

    def _load_persisted(self) -> list[IterationState]:
        assert self.out_dir is not None
        states = []
        for path in sorted(self.out_dir.glob("iter_*.json")):
            states.append(IterationState.from_json(json.loads(path.read_text(encoding="utf-8"))))
        return states

    # -- main loop ---------------------------------------------------------

    def run(self) -> list[IterationState]:
        if self.out_dir is not None:
            self._write_config()
        return self._run_from([], sorted(self.bundle.train_queries.ids()), None)

    def resume(self) -> list[IterationState]:
        """Continue a persisted run; no-op when already complete."""
        if self.out_dir is None:
            raise ValueError("resume requires an output directory")
        cfg_path = self.out_dir / "config.json"
        if not cfg_path.exists():
            raise ValueError(f"no persisted experiment in {self.out_dir}")
        persisted = json.loads(cfg_path.read_text(encoding="utf-8"))
        if persisted.get("fingerprint") != self.config.fingerprint():
            raise ValueError(
                "config fingerprint mismatch: persisted "
                f"{persisted.get('fingerprint')} vs current {self.config.fingerprint()}"
            )
        states = self._load_persisted()
        if not states:
            return self._run_from([], sorted(self.bundle.train_queries.ids()), None)
        last = states[-1]
        if last.iteration >= self.config.iterations or last.stop_reason:
            return states
        prev_sel = load_checkpoint(self.out_dir / last.checkpoint_name, self.config.ranker)
        return self._run_from(states, list(last.pool), prev_sel)

    def _run_from(
        self,
        states: list[IterationState],
        pool: list[str],
        prev_sel_state: RankerState | None,
    ) -> list[IterationState]:
        cfg = self.config
        triplets: list[TrainingTriplet] = list(states[-1].triplets) if states else []
        ledger = anno.AssessmentLedger()
        for st in states:
            ledger.update(st.iteration, st.records)

        start_iter = states[-1].iteration + 1 if states else 1
        for i in range(start_iter, cfg.iterations + 1):
            if not pool:
                if states:
                    states[-1].stop_reason = "pool exhausted"
                    self._persist_stop(states[-1])
                break
            s_i = min(cfg.batch_for(i), len(pool))
            selected, extra_hours = self._select(i, s_i, pool, prev_sel_state, triplets)
            new_triplets, records, pool = self._annotate(i, selected, pool, prev_sel_state)
            ledger.update(i, records)
            triplets = triplets + new_triplets

            sel_state, eval_state, train_hours = self._train(i, triplets)
            prev_sel_state = sel_state
            ndcg = self.evaluate(eval_state)

            state = IterationState(
                iteration=i,
                selected=selected,
                pool=list(pool),
                triplets=list(triplets),
                records=records,
                assessments_cumulative=ledger.cumulative(i),
                ndcg10=ndcg,
                training_hours=train_hours + extra_hours,
                selection_hours=cfg.cost.selection_hours_per_iteration if i > 1 else 0.0,
                checkpoint_name=f"iter_{i:04d}.ckpt",
            )
            states.append(state)
            self._persist(state, sel_state)
        return states

    def _persist_stop(self, state: IterationState) -> None:
        if self.out_dir is None:
            return
        path = self.out_dir / f"iter_{state.iteration:04d}.json"
        path.write_text(json.dumps(state.to_json(), sort_keys=True), encoding="utf-8")

    # -- phases ------------------------------------------------------------

    def _select(
        self,
        i: int,
        s_i: int,
        pool: list[str],
        prev_sel_state: RankerState | None,
        triplets: list[TrainingTriplet],
    ):
        """Returns (selected, extra accelerator hours from committee training)."""
        cfg = self.config
        strategy = cfg.selection.strategy
        if i == 1 or strategy == "random":
            rng = np.random.default_rng(derive_seed(cfg.master_seed, "subset", i))
            return select_random(pool, s_i, rng), 0.0
        assert prev_sel_state is not None
        if strategy == "uncertainty":
            pairs = select_uncertainty(
                self.ranker,
                prev_sel_state,
                pool,
                self.bundle.train_queries,
                self.bundle.candidates,
                self.bundle.corpus,
                cfg.selection.candidate_depth,
                s_i,
                one_pair_per_query=cfg.selection.one_pair_per_query,
            )
            return [[qid, did] for qid, did, _ in pairs], 0.0
        if strategy == "qbc":
            committee, hours = self._train_committee(i, triplets)
            self._committee = committee
            picked = select_qbc(
                self.ranker,
                committee,
                pool,
                self.bundle.train_queries,
                self.bundle.candidates,
                self.bundle.corpus,
                cfg.selection.candidate_depth,
                s_i,
                pair_depth=cfg.selection.entropy_pair_depth,
            )
            return [qid for qid, _ in picked], hours
        if strategy == "diversity":
            rng = np.random.default_rng(derive_seed(cfg.master_seed, "kmeans", i))
            return (
                select_diversity(
                    self.ranker,
                    prev_sel_state,
                    pool,
                    self.bundle.train_queries,
                    s_i,
                    rng,
                    max_iters=cfg.selection.kmeans_max_iters,
                ),
                0.0,
            )
        raise ValueError(f"unknown strategy {strategy!r}")

    def _train_committee(self, i: int, triplets: list[TrainingTriplet]):
        cfg = self.config
        committee = []
        hours = 0.0
        for m in range(cfg.selection.committee_size):
            rng = np.random.default_rng(derive_seed(cfg.master_seed, f"committee-subset-{m}", i))
            size = max(1, round(cfg.selection.member_fraction * len(triplets)))
            picked = rng.choice(len(triplets), size=size, replace=False)
            subset = [triplets[j] for j in sorted(picked)]
            member = self.ranker.train(
                self._start_state,
                subset,
                self.bundle.corpus,
                self.bundle.train_queries,
                cfg.ranker.epochs_selection,
                derive_seed(cfg.master_seed, f"committee-train-{m}", i),
            )
            hours += cfg.ranker.epochs_selection * len(subset) * cfg.training_hours_per_sample_epoch
            committee.append(member)
        return committee, hours

    def _rerank_for_annotation(self, i: int, qid: str, prev_sel_state: RankerState | None) -> RankedList:
        """Annotation walks the BM25 ranking in iteration 1 and for the random
        baseline; otherwise the previous ranker's reranking (first committee
        member for QBC)."""
        candidates = self.bundle.candidates[qid].top(self.config.selection.candidate_depth)
        strategy = self.config.selection.strategy
        if i == 1 or strategy == "random" or prev_sel_state is None:
            return candidates
        state = prev_sel_state
        if strategy == "qbc" and getattr(self, "_committee", None):
            state = self._committee[0]
        return self.ranker.rerank(state, self.bundle.train_queries[qid], candidates, self.bundle.corpus)

    def _annotate(self, i: int, selected: list, pool: list[str], prev_sel_state):
        cfg = self.config
        is_pairs = bool(selected) and isinstance(selected[0], (list, tuple))
        new_triplets: list[TrainingTriplet] = []
        records: list[anno.AnnotationRecord] = []
        touched_queries: list[str] = []

        if is_pairs:
            items = [(qid, did) for qid, did in selected]
        else:
            items = [(qid, None) for qid in selected]
        # canonical order keeps ledger totals independent of scheduling
        for qid, did in sorted(items):
            rng = np.random.default_rng(derive_seed(cfg.master_seed, f"negatives|{qid}", i))
            reranked = self._rerank_for_annotation(i, qid, prev_sel_state)
            negatives = self.bundle.negatives[qid].top(cfg.negatives_depth)
            if did is None:
                triplet, assessments = anno.annotate_query(
                    qid, reranked, negatives, self.bundle.qrels, rng,
                    depth=cfg.selection.candidate_depth,
                )
            else:
                triplet, assessments = anno.annotate_pair(
                    qid, did, self.bundle.qrels, reranked, negatives, rng,
                    depth=cfg.selection.candidate_depth,
                )
            if triplet is not None:
                new_triplets.append(triplet)
                records.append(
                    anno.AnnotationRecord(i, qid, "triplet", assessments,
                                          triplet.positive_id, triplet.negative_id)
                )
                touched_queries.append(qid)
            else:
                records.append(anno.AnnotationRecord(i, qid, "skipped", assessments))
                if not cfg.exhausted_back_to_pool:
                    touched_queries.append(qid)
        remaining = [q for q in pool if q not in set(touched_queries)]
        return new_triplets, records, remaining

    def _train(self, i: int, triplets: list[TrainingTriplet]):
        cfg = self.config
        if not triplets:
            return self._start_state, self._start_state, 0.0
        sel_state = self.ranker.train(
            self._start_state,
            triplets,
            self.bundle.corpus,
            self.bundle.train_queries,
            cfg.ranker.epochs_selection,
            derive_seed(cfg.master_seed, "train", i),
        )
        extra_epochs = cfg.ranker.epochs_evaluation - cfg.ranker.epochs_selection
        if extra_epochs > 0:
            eval_state = self.ranker.train(
                sel_state,
                triplets,
                self.bundle.corpus,
                self.bundle.train_queries,
                extra_epochs,
                derive_seed(cfg.master_seed, "train-resume", i),
            )
        else:
            eval_state = sel_state
        hours = cfg.ranker.epochs_evaluation * len(triplets) * cfg.training_hours_per_sample_epoch
        return sel_state, eval_state, hours

    def evaluate(self, state: RankerState) -> float:
        """Mean test nDCG@10 of the given state reranking the BM25 candidates."""
        rankings = {}
        for qid, text in self.bundle.test_queries.items():
            candidates = self.bundle.test_candidates[qid]
            if len(candidates) == 0:
                continue
            rankings[qid] = self.ranker.rerank(state, text, candidates, self.bundle.corpus)
        run = Run("eval", rankings)
        return ndcg_at_k(run, self.bundle.qrels, k=10).mean

    # -- reporting ---------------------------------------------------------

    def report_rows(self, states: list[IterationState], seed_label: int = 0) -> list[dict]:
        return report_rows(self.config, states, seed_label)


def report_rows(
    config: ExperimentConfig, states: list[IterationState], seed_label: int = 0
) -> list[dict]:
    """Flat per-iteration report rows (effectiveness + cost breakdown)."""
    time_ledger = TimeLedger()
    assessment_totals = {}
    for st in states:
        time_ledger.record(st.iteration, st.training_hours, st.selection_hours)
        assessment_totals[st.iteration] = st.assessments_cumulative
    report = total_cost(assessment_totals, time_ledger, config.cost)
    by_iter = {r.iteration: r for r in report.rows}
    rows = []
    for st in states:
        cost_row = by_iter[st.iteration]
        rows.append(
            {
                "strategy": config.selection.strategy,
                "seed": seed_label,
                "iteration": st.iteration,
                "train_size": len(st.triplets),
                "ndcg10": st.ndcg10,
                "assessments": st.assessments_cumulative,
                "C_A": cost_row.annotation_cost,
                "C_C": cost_row.compute_cost,
                "C_total": cost_row.total,
            }
        )
    return rows


def run_experiment(
    config: ExperimentConfig, bundle: DataBundle, out_dir: str | Path | None = None
) -> list[IterationState]:
    return Experiment(config, bundle, out_dir).run()


def resume(config: ExperimentConfig, bundle: DataBundle, out_dir: str | Path) -> list[IterationState]:
    return Experiment(config, bundle, out_dir).resume()


def run_variability(
    config: ExperimentConfig,
    bundle: DataBundle,
    sizes: list[int],
    repeats: int = 4,
) -> list[dict]:
    """Train on random subsets of each size with `repeats` seeds; (size, seed, ndcg) records."""
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    exp = Experiment(config, bundle)
    all_queries = sorted(bundle.train_queries.ids())
    records = []
    for size in sizes:
        if size > len(all_queries):
            raise ValueError(
                f"size {size} exceeds available training queries ({len(all_queries)})"
            )
        for rep in range(repeats):
            rng = np.random.default_rng(
                derive_seed(config.master_seed, f"var-subset|{size}", rep)
            )
            picked = sorted(select_random(all_queries, size, rng))
            triplets = []
            for qid in picked:
                neg_rng = np.random.default_rng(
                    derive_seed(config.master_seed, f"var-negatives|{size}|{rep}|{qid}")
                )
                candidates = bundle.candidates[qid].top(config.selection.candidate_depth)
                triplet, _ = anno.annotate_query(
                    qid,
                    candidates,
                    bundle.negatives[qid],
                    bundle.qrels,
                    neg_rng,
                    depth=config.selection.candidate_depth,
                )
                if triplet is not None:
                    triplets.append(triplet)
            if not triplets:
                raise ValueError(f"no triplets producible for size {size}, seed {rep}")
            state = exp.ranker.train(
                exp._start_state,
                triplets,
                bundle.corpus,
                bundle.train_queries,
                config.ranker.epochs_evaluation,
                derive_seed(config.master_seed, f"var-train|{size}", rep),
            )
            records.append(
                {
                    "strategy": "random",
                    "size": size,
                    "seed": rep,
                    "ndcg10": exp.evaluate(state),
                    "n_triplets": len(triplets),
                }
            )
    return records
