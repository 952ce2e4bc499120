import itertools
import math

import numpy as np
import pytest

from alrank.datamodel import Corpus, QuerySet, RankedList, Run
from alrank.ranker import Ranker, RankerConfig
from alrank.selection import (
    SelectionConfig,
    kmeans,
    select_diversity,
    select_qbc,
    select_random,
    select_uncertainty,
    vote_entropy,
)


def oracle_vote_entropy(member_rankings, pair_depth=None):
    """Independent pair-enumeration oracle for the committee disagreement score."""
    m = len(member_rankings)
    first = member_rankings[0].doc_ids()
    depth = pair_depth if pair_depth is not None else len(first)
    top = first[:depth]
    total = 0.0
    for p_i, p_j in itertools.permutations(top, 2):
        n = 0
        for r in member_rankings:
            order = r.doc_ids()
            if order.index(p_i) < order.index(p_j):
                n += 1
        if n:
            total += n * math.log(n / m)
    return -total / m


class TestSelectRandom:
    def test_exhaustion(self):
        rng = np.random.default_rng(0)
        assert sorted(select_random(["a", "b", "c"], 5, rng)) == ["a", "b", "c"]

    def test_deterministic(self):
        pool = [f"q{i}" for i in range(20)]
        a = select_random(pool, 5, np.random.default_rng(42))
        b = select_random(pool, 5, np.random.default_rng(42))
        assert a == b

    def test_empty_pool(self):
        with pytest.raises(ValueError, match="empty pool"):
            select_random([], 1, np.random.default_rng(0))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(7)
        counts = {"a": 0, "b": 0, "c": 0}
        for _ in range(10_000):
            counts[select_random(["a", "b", "c"], 1, rng)[0]] += 1
        for c in counts.values():
            assert abs(c / 10_000 - 1 / 3) < 0.02


def _uncertainty_fixture():
    corpus = Corpus({f"d{i}": f"tok{i} tok{i + 1}" for i in range(30)})
    queries = QuerySet({f"q{i}": f"tok{i} tok{i + 2}" for i in range(10)})
    rankings = {
        qid: RankedList(qid, [(f"d{(i + j) % 30}", 5.0 - j) for j in range(5)])
        for i, qid in enumerate(queries.ids())
    }
    run = Run("bm25", rankings)
    ranker = Ranker(RankerConfig(architecture="cross", dim=16))
    state = ranker.init_state(3)
    return ranker, state, corpus, queries, run


class TestSelectUncertainty:
    def test_exact_mean_hit(self):
        # scores 0.1, 0.5, 0.9 -> mean 0.5 -> the 0.5 pair wins
        class Fake:
            def score(self, state, q, d):
                return {"x": 0.1, "y": 0.5}[d] if q == "one" else 0.9

        corpus = Corpus({"p1": "x", "p2": "y"})
        queries = QuerySet({"q1": "one", "q2": "two"})
        run = Run("t", {
            "q1": RankedList("q1", [("p1", 2.0), ("p2", 1.0)]),
            "q2": RankedList("q2", [("p1", 1.0)]),
        })
        out = select_uncertainty(Fake(), None, ["q1", "q2"], queries, run, corpus, 10, 1)
        assert [(q, d) for q, d, _ in out] == [("q1", "p2")]

    def test_all_equal_tie_break(self):
        class Flat:
            def score(self, state, q, d):
                return 1.0

        corpus = Corpus({"a": "x", "b": "y"})
        queries = QuerySet({"q1": "t", "q2": "t2"})
        run = Run("t", {
            "q1": RankedList("q1", [("b", 2.0), ("a", 1.0)]),
            "q2": RankedList("q2", [("a", 1.0)]),
        })
        out = select_uncertainty(Flat(), None, ["q2", "q1"], queries, run, corpus, 10, 3)
        assert [(q, d) for q, d, _ in out] == [("q1", "a"), ("q1", "b"), ("q2", "a")]

    def test_matches_brute_force(self):
        ranker, state, corpus, queries, run = _uncertainty_fixture()
        pool = queries.ids()
        out = select_uncertainty(ranker, state, pool, queries, run, corpus, 5, 5)
        # oracle: enumerate every (q, d) score, sort by |score - global mean|
        scores = {}
        for qid in pool:
            for did in run[qid].doc_ids()[:5]:
                scores[(qid, did)] = ranker.score(state, queries[qid], corpus[did])
        mean = sum(scores.values()) / len(scores)
        expected = sorted(scores, key=lambda p: (abs(scores[p] - mean), p[0], p[1]))[:5]
        assert [(q, d) for q, d, _ in out] == expected

    def test_pool_order_invariance(self):
        ranker, state, corpus, queries, run = _uncertainty_fixture()
        pool = queries.ids()
        a = select_uncertainty(ranker, state, pool, queries, run, corpus, 5, 4)
        b = select_uncertainty(ranker, state, pool[::-1], queries, run, corpus, 5, 4)
        assert a == b

    def test_one_pair_per_query_flag(self):
        ranker, state, corpus, queries, run = _uncertainty_fixture()
        out = select_uncertainty(
            ranker, state, queries.ids(), queries, run, corpus, 5, 6, one_pair_per_query=True
        )
        qids = [q for q, _, _ in out]
        assert len(qids) == len(set(qids))

    def test_no_candidates(self):
        corpus = Corpus({"a": "x"})
        queries = QuerySet({"q1": "t"})
        with pytest.raises(ValueError, match="no candidates"):
            select_uncertainty(None, None, ["q1"], queries, Run("t", {}), corpus, 5, 1)


class TestVoteEntropy:
    def test_full_agreement_zero(self):
        r = RankedList("q", [("a", 2.0), ("b", 1.0)])
        assert vote_entropy([r, r]) == 0.0

    def test_single_pair_disagreement_ln2(self):
        a = RankedList("q", [("a", 2.0), ("b", 1.0)])
        b = RankedList("q", [("b", 2.0), ("a", 1.0)])
        assert vote_entropy([a, b]) == pytest.approx(math.log(2), rel=1e-12)

    def test_matches_oracle_three_members(self):
        rng = np.random.default_rng(5)
        docs = ["a", "b", "c", "d"]
        for _ in range(50):
            rankings = []
            for _ in range(3):
                scores = rng.permutation(len(docs)).astype(float)
                rankings.append(RankedList("q", list(zip(docs, scores))))
            assert vote_entropy(rankings) == pytest.approx(
                oracle_vote_entropy(rankings), rel=1e-12
            )

    def test_truncated_pair_depth(self):
        rng = np.random.default_rng(8)
        docs = [f"d{i}" for i in range(6)]
        rankings = [
            RankedList("q", list(zip(docs, rng.permutation(len(docs)).astype(float))))
            for _ in range(2)
        ]
        assert vote_entropy(rankings, pair_depth=3) == pytest.approx(
            oracle_vote_entropy(rankings, pair_depth=3), rel=1e-12
        )

    def test_mismatched_candidates(self):
        a = RankedList("q", [("a", 2.0), ("b", 1.0)])
        b = RankedList("q", [("a", 2.0), ("c", 1.0)])
        with pytest.raises(ValueError, match="different candidate sets"):
            vote_entropy([a, b])

    def test_nonnegative_and_complement_votes(self):
        rng = np.random.default_rng(3)
        docs = [f"d{i}" for i in range(5)]
        for _ in range(30):
            rankings = [
                RankedList("q", list(zip(docs, rng.permutation(len(docs)).astype(float))))
                for _ in range(3)
            ]
            ve = vote_entropy(rankings)
            assert ve >= 0.0
            # complement pair counts sum to committee size
            pos = [{d: i for i, d in enumerate(r.doc_ids())} for r in rankings]
            for p, q in itertools.combinations(docs, 2):
                n_pq = sum(1 for m in pos if m[p] < m[q])
                n_qp = sum(1 for m in pos if m[q] < m[p])
                assert n_pq + n_qp == 3

    def test_log_base_rescales_only(self):
        # entropy in another base is a positive multiple -> same argmax ordering
        rng = np.random.default_rng(9)
        docs = [f"d{i}" for i in range(4)]
        ves = []
        for _ in range(10):
            rankings = [
                RankedList("q", list(zip(docs, rng.permutation(len(docs)).astype(float))))
                for _ in range(2)
            ]
            ves.append(vote_entropy(rankings))
        base2 = [v / math.log(2) for v in ves]
        assert np.argsort(ves).tolist() == np.argsort(base2).tolist()

    def test_monotone_transform_of_scores_invariant(self):
        a = RankedList("q", [("a", 3.0), ("b", 2.0), ("c", 1.0)])
        b = RankedList("q", [("b", 9.0), ("c", 5.0), ("a", 1.0)])
        a2 = RankedList("q", [(d, math.exp(s)) for d, s in a.entries])
        b2 = RankedList("q", [(d, 10 * s + 3) for d, s in b.entries])
        assert vote_entropy([a, b]) == vote_entropy([a2, b2])


class TestSelectQbc:
    def _fixture(self):
        corpus = Corpus({f"d{i}": f"t{i} t{i + 1} t{i + 2}" for i in range(20)})
        queries = QuerySet({f"q{i}": f"t{2 * i} t{2 * i + 1}" for i in range(8)})
        rankings = {
            qid: RankedList(qid, [(f"d{(3 * i + j) % 20}", 9.0 - j) for j in range(6)])
            for i, qid in enumerate(queries.ids())
        }
        return corpus, queries, Run("bm25", rankings)

    def test_identical_members_degenerate_to_qid_order(self):
        corpus, queries, run = self._fixture()
        ranker = Ranker(RankerConfig(architecture="cross", dim=16))
        state = ranker.init_state(1)
        out = select_qbc(ranker, [state, state.copy()], queries.ids(), queries, run, corpus, 6, 3)
        assert [q for q, _ in out] == sorted(queries.ids())[:3]
        assert all(ve == 0.0 for _, ve in out)

    def test_matches_brute_force_ranking(self):
        corpus, queries, run = self._fixture()
        ranker = Ranker(RankerConfig(architecture="cross", dim=16))
        committee = [ranker.init_state(1), ranker.init_state(2)]
        out = select_qbc(ranker, committee, queries.ids(), queries, run, corpus, 6, 3)
        oracle = []
        for qid in queries.ids():
            rankings = [ranker.rerank(m, queries[qid], run[qid].top(6), corpus) for m in committee]
            oracle.append((qid, oracle_vote_entropy(rankings)))
        oracle.sort(key=lambda e: (-e[1], e[0]))
        assert [q for q, _ in out] == [q for q, _ in oracle[:3]]
        for (_, got), (_, want) in zip(out, oracle[:3]):
            assert got == pytest.approx(want, rel=1e-12)

    def test_committee_size_validation(self):
        corpus, queries, run = self._fixture()
        ranker = Ranker(RankerConfig(architecture="cross", dim=16))
        with pytest.raises(ValueError, match="at least 2"):
            select_qbc(ranker, [ranker.init_state(0)], queries.ids(), queries, run, corpus, 6, 3)


class TestKmeans:
    def test_separated_clusters(self):
        pts = np.array([[0.0], [0.1], [10.0], [10.1]])
        labels = kmeans(pts, 2, np.random.default_rng(0))
        assert labels[0] == labels[1] and labels[2] == labels[3]
        assert labels[0] != labels[2]

    def test_singleton_clusters(self):
        pts = np.array([[0.0], [5.0], [9.0]])
        labels = kmeans(pts, 3, np.random.default_rng(1))
        assert sorted(labels.tolist()) == [0, 1, 2]

    def test_k_exceeds_points(self):
        with pytest.raises(ValueError, match="exceeds"):
            kmeans(np.zeros((2, 3)), 5, np.random.default_rng(0))

    def test_identical_points_repair_yields_nonempty_clusters(self):
        pts = np.zeros((6, 2))
        labels = kmeans(pts, 4, np.random.default_rng(2))
        assert set(labels.tolist()) == {0, 1, 2, 3}

    def test_objective_nonincreasing(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(40, 3))

        def objective(labels):
            total = 0.0
            for c in set(labels.tolist()):
                members = pts[labels == c]
                total += ((members - members.mean(axis=0)) ** 2).sum()
            return total

        # run with increasing iteration caps; objective must not increase
        prev = None
        for iters in (1, 2, 4, 8, 16):
            labels = kmeans(pts, 5, np.random.default_rng(7), max_iters=iters)
            obj = objective(labels)
            if prev is not None:
                assert obj <= prev + 1e-9
            prev = obj


class TestSelectDiversity:
    def test_full_pool(self):
        queries = QuerySet({f"q{i}": f"tok{i}" for i in range(5)})
        ranker = Ranker(RankerConfig(architecture="bi", dim=8, hash_buckets=32))
        state = ranker.init_state(0)
        out = select_diversity(ranker, state, queries.ids(), queries, 5, np.random.default_rng(0))
        assert sorted(out) == sorted(queries.ids())

    def test_identical_embeddings_still_distinct(self):
        queries = QuerySet({f"q{i}": "same text" for i in range(6)})
        ranker = Ranker(RankerConfig(architecture="bi", dim=8, hash_buckets=32))
        state = ranker.init_state(0)
        out = select_diversity(ranker, state, queries.ids(), queries, 3, np.random.default_rng(1))
        assert len(out) == len(set(out)) == 3

    def test_s_exceeds_pool(self):
        queries = QuerySet({"q1": "a"})
        ranker = Ranker(RankerConfig(architecture="bi", dim=8, hash_buckets=32))
        with pytest.raises(ValueError, match="exceeds pool"):
            select_diversity(ranker, ranker.init_state(0), ["q1"], queries, 2, np.random.default_rng(0))

    def test_topic_spread_monte_carlo(self):
        # three disjoint topic vocabularies; queries within a topic share one
        # token set so their embeddings coincide and clusters are separable
        topics = {"t0": "alpha bravo", "t1": "delta echo", "t2": "golf hotel"}
        texts = {}
        for t, text in topics.items():
            for i in range(4):
                texts[f"{t}_q{i}"] = text if i % 2 == 0 else " ".join(reversed(text.split()))
        queries = QuerySet(texts)
        pool = queries.ids()
        ranker = Ranker(RankerConfig(architecture="bi", dim=64, hash_buckets=256))
        state = ranker.init_state(1)
        good = 0
        trials = 1000
        for t in range(trials):
            picked = select_diversity(ranker, state, pool, queries, 3, np.random.default_rng(t))
            if len({q.split("_")[0] for q in picked}) == 3:
                good += 1
        assert good / trials >= 0.95


class TestSelectionConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(strategy="bogus")
        with pytest.raises(ValueError):
            SelectionConfig(samples_per_iteration=0)
        with pytest.raises(ValueError):
            SelectionConfig(committee_size=1)
        with pytest.raises(ValueError):
            SelectionConfig(member_fraction=0.0)
