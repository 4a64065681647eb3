import numpy as np
import pytest
from scipy.optimize import minimize

from occ.errors import ConfigError, DegenerateInputError, InputError
from occ.oracle import DIFFERENT, SAME, AnnotationStore
from occ.query import (PairSimilarityHistory, QueryBudget,
                       batch_pair_similarities, csd_score, d_p,
                       entropy_baseline_select, optimal_sampling_distribution,
                       select_pairs)

from oracles import brute_force_csd


class TestCsdScore:
    def test_zero_discrepancy(self):
        assert csd_score(0.9, 0.9) == 0.0

    def test_hand_value(self):
        assert csd_score(0.8, 0.3) == pytest.approx(0.40)

    def test_zero_similarity(self):
        assert csd_score(0.0, -0.7) == 0.0

    def test_negative_similarity_clamped(self):
        assert csd_score(-0.5, 0.5) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(InputError):
            csd_score(1.5, 0.0)


class TestHistory:
    def test_get_default_and_update(self):
        h = PairSimilarityHistory()
        assert h.get((3, 1)) is None
        assert h.get((3, 1), default=0.0) == 0.0
        h.update((3, 1), 0.5, iteration=7)
        assert h.get((1, 3)) == 0.5
        assert (1, 3) in h and len(h) == 1

    def test_self_pair_rejected(self):
        h = PairSimilarityHistory()
        with pytest.raises(InputError):
            h.update((2, 2), 0.1, 0)


def stacked_features(rng, n, dim=4):
    return rng.normal(size=(2 * n, dim))


class TestSelectPairs:
    def test_exhausted_budget_returns_empty(self):
        rng = np.random.default_rng(0)
        z = stacked_features(rng, 4)
        budget = QueryBudget(total=5, per_batch=2, spent=5)
        out = select_pairs(z, [0, 1, 2, 3], PairSimilarityHistory(),
                           AnnotationStore(), budget, "csd", rng)
        assert out == []

    def test_all_pairs_annotated_returns_empty(self):
        rng = np.random.default_rng(1)
        ids = [0, 1, 2]
        store = AnnotationStore()
        for i in range(3):
            for j in range(i + 1, 3):
                store.record((i, j), SAME, "oracle")
        z = stacked_features(rng, 3)
        out = select_pairs(z, ids, PairSimilarityHistory(), store,
                           QueryBudget(total=10, per_batch=2), "csd", rng)
        assert out == []

    def test_hand_set_maximizer_is_selected(self):
        # craft z so pair (1, 3) has high similarity, history so it also has
        # the largest discrepancy; brute force confirms it is the maximizer
        ids = [1, 2, 3]
        z = np.array([
            [1.0, 0.0], [0.0, 1.0], [0.9, 0.1],   # view a of samples 1,2,3
            [1.0, 0.1], [0.1, 1.0], [0.9, 0.2],   # view b
        ])
        history = PairSimilarityHistory()
        history.update((1, 3), 0.0, 0)   # big discrepancy for (1, 3)
        history.update((1, 2), 0.2, 0)
        history.update((2, 3), 0.3, 0)
        sims = batch_pair_similarities(z)
        want = brute_force_csd(sims.tolist(), ids,
                               {(1, 3): 0.0, (1, 2): 0.2, (2, 3): 0.3},
                               set(), 1)
        got = select_pairs(z, ids, history, AnnotationStore(),
                           QueryBudget(total=10, per_batch=1), "csd",
                           np.random.default_rng(0))
        assert got == want == [(1, 3)]

    def test_csd_matches_brute_force_on_random_batches(self):
        rng = np.random.default_rng(2)
        for trial in range(25):
            n = int(rng.integers(2, 17))
            ids = rng.permutation(100)[:n].tolist()
            z = stacked_features(rng, n)
            store = AnnotationStore()
            history = PairSimilarityHistory()
            hist_dict = {}
            for p in range(n):
                for q in range(p + 1, n):
                    if rng.random() < 0.2:
                        pair = tuple(sorted((ids[p], ids[q])))
                        store.record(pair, SAME if rng.random() < 0.5 else DIFFERENT,
                                     "oracle")
                    elif rng.random() < 0.5:
                        pair = tuple(sorted((ids[p], ids[q])))
                        s = float(rng.uniform(-1, 1))
                        history.update(pair, s, 0)
                        hist_dict[pair] = s
            quota = int(rng.integers(1, 4))
            sims = batch_pair_similarities(z)
            answered = set(store.answer_keys())
            want = brute_force_csd(sims.tolist(), ids, hist_dict, answered, quota)
            got = select_pairs(z, ids, history, store,
                               QueryBudget(total=100, per_batch=quota), "csd",
                               np.random.default_rng(0))
            assert got == want

    def test_history_refreshed_for_scored_pairs(self):
        rng = np.random.default_rng(3)
        n = 5
        ids = list(range(n))
        z = stacked_features(rng, n)
        history = PairSimilarityHistory()
        select_pairs(z, ids, history, AnnotationStore(),
                     QueryBudget(total=10, per_batch=2), "csd", rng, iteration=4)
        sims = batch_pair_similarities(z)
        for p in range(n):
            for q in range(p + 1, n):
                assert history.get((p, q)) == pytest.approx(float(sims[p, q]))

    def test_never_returns_annotated_or_self_and_respects_quota(self):
        rng = np.random.default_rng(4)
        for strategy in ("csd", "random", "entropy"):
            n = 8
            ids = list(range(n))
            z = stacked_features(rng, n)
            yhat = rng.dirichlet(np.ones(3), size=2 * n)
            store = AnnotationStore()
            store.record((0, 1), SAME, "oracle")
            store.record((2, 3), DIFFERENT, "oracle")
            budget = QueryBudget(total=3, per_batch=2)
            out = select_pairs(z, ids, PairSimilarityHistory(), store, budget,
                               strategy, rng, yhat=yhat)
            assert len(out) <= 2
            for i, j in out:
                assert i < j
                assert not store.answered((i, j))

    def test_unknown_strategy_rejected(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ConfigError):
            select_pairs(stacked_features(rng, 3), [0, 1, 2],
                         PairSimilarityHistory(), AnnotationStore(),
                         QueryBudget(total=5, per_batch=1), "mystery", rng)


class TestEntropyBaseline:
    def test_uniform_row_sample_is_anchor(self):
        n = 4
        yhat = np.zeros((2 * n, 2))
        yhat[:, 0] = 0.95
        yhat[:, 1] = 0.05
        yhat[2] = yhat[2 + n] = [0.5, 0.5]  # sample 2 is maximally uncertain
        rng = np.random.default_rng(6)
        z = stacked_features(rng, n)
        out = entropy_baseline_select(yhat, z, [0, 1, 2, 3], AnnotationStore(),
                                      1, rng)
        assert len(out) == 1
        assert 2 in out[0]

    def test_partner_is_nearest_to_median_similarity(self):
        n = 4
        ids = [0, 1, 2, 3]
        rng = np.random.default_rng(7)
        yhat = np.full((2 * n, 2), 0.5)
        yhat[1] = yhat[1 + n] = [0.99, 0.01]
        yhat[2] = yhat[2 + n] = [0.99, 0.01]
        yhat[3] = yhat[3 + n] = [0.99, 0.01]
        z = stacked_features(rng, n)
        sims = batch_pair_similarities(z)
        partner_sims = [(q, sims[0, q]) for q in (1, 2, 3)]
        median = np.median([s for _, s in partner_sims])
        want_partner = min(partner_sims, key=lambda t: (abs(t[1] - median), t[0]))[0]
        out = entropy_baseline_select(yhat, z, ids, AnnotationStore(), 1, rng)
        assert out == [tuple(sorted((0, want_partner)))]

    def test_zero_quota(self):
        rng = np.random.default_rng(8)
        out = entropy_baseline_select(np.full((8, 2), 0.5),
                                      stacked_features(rng, 4), [0, 1, 2, 3],
                                      AnnotationStore(), 0, rng)
        assert out == []


class TestOptimalSamplingDistribution:
    def test_equal_losses_give_uniform(self):
        p = optimal_sampling_distribution([2.0, 2.0, 2.0, 2.0])
        np.testing.assert_allclose(p, 0.25)

    def test_hand_case(self):
        np.testing.assert_allclose(optimal_sampling_distribution([1.0, 4.0]),
                                   [1.0 / 3.0, 2.0 / 3.0])

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateInputError):
            optimal_sampling_distribution([0.0, 0.0])

    def test_monte_carlo_optimality(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            n = int(rng.integers(2, 9))
            losses = rng.uniform(0.01, 1.0, size=n)
            p_star = optimal_sampling_distribution(losses)
            best = d_p(losses, p_star)
            for _ in range(1000):
                q = rng.dirichlet(np.ones(n))
                if np.any(q == 0):
                    continue
                assert best <= d_p(losses, q)

    def test_matches_independent_kkt_solution(self):
        rng = np.random.default_rng(10)
        losses = rng.uniform(0.05, 1.0, size=5)
        p_star = optimal_sampling_distribution(losses)

        def objective(q):
            return float((losses / q).sum())

        res = minimize(objective, np.full(5, 0.2), method="SLSQP",
                       bounds=[(1e-6, 1.0)] * 5,
                       constraints={"type": "eq", "fun": lambda q: q.sum() - 1.0},
                       options={"ftol": 1e-14, "maxiter": 1000})
        assert res.success
        np.testing.assert_allclose(p_star, res.x, atol=1e-4)
        assert d_p(losses, p_star) <= objective(res.x) + 1e-9


class TestDp:
    def test_uniform_probabilities(self):
        losses = np.array([0.2, 0.5, 0.3])
        assert d_p(losses, np.full(3, 1.0 / 3.0)) == pytest.approx(3 * losses.sum())

    def test_hand_case(self):
        assert d_p([1.0, 4.0], [1.0 / 3.0, 2.0 / 3.0]) == pytest.approx(9.0)

    def test_single_element(self):
        assert d_p([0.7], [1.0]) == pytest.approx(0.7)

    def test_zero_probability_on_positive_loss_rejected(self):
        with pytest.raises(DegenerateInputError):
            d_p([0.5, 0.5], [1.0, 0.0])

    def test_zero_loss_contributes_nothing(self):
        assert d_p([0.0, 1.0], [0.0, 1.0]) == pytest.approx(1.0)
