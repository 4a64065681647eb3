import logging

import numpy as np
import pytest

from occ.data import SyntheticSpec, generate_synthetic
from occ.errors import ConfigError, InputError
from occ.oracle import (DIFFERENT, SAME, AnnotationStore, LambdaSchedule,
                        OrientationMap, build_query_matrix, extend_labels,
                        lambda_at, record_answer, simulated_answer)


@pytest.fixture
def dataset():
    return generate_synthetic(SyntheticSpec(per_class=5, seed=0))


ORIENT_A = OrientationMap(name="A", mapping={0: 0, 1: 0, 2: 1, 3: 1})
ORIENT_B = OrientationMap(name="B", mapping={0: 0, 1: 1, 2: 0, 3: 1})


class TestOrientationMap:
    def test_needs_two_clusters(self):
        with pytest.raises(ConfigError):
            OrientationMap(name="bad", mapping={0: 0, 1: 0})

    def test_partitions_differ(self):
        assert ORIENT_A.partition() != ORIENT_B.partition()

    def test_unknown_class_rejected(self):
        with pytest.raises(InputError):
            ORIENT_A.cluster_of(9)


class TestSimulatedAnswer:
    def test_same_latent_class_is_always_same(self, dataset):
        # samples 0 and 1 are both latent class 0
        assert simulated_answer((0, 1), dataset, ORIENT_A) == SAME
        assert simulated_answer((0, 1), dataset, ORIENT_B) == SAME

    def test_map_lookup(self, dataset):
        # class 0 sample and class 1 sample: same under A, different under B
        i, j = 0, 5
        assert dataset.classes[i] == 0 and dataset.classes[j] == 1
        assert simulated_answer((i, j), dataset, ORIENT_A) == SAME
        assert simulated_answer((i, j), dataset, ORIENT_B) == DIFFERENT

    def test_orientation_flips_judgment(self, dataset):
        # class 0 vs class 2: different under A, same under B
        i, k = 0, 10
        assert dataset.classes[k] == 2
        assert simulated_answer((i, k), dataset, ORIENT_A) == DIFFERENT
        assert simulated_answer((i, k), dataset, ORIENT_B) == SAME

    def test_unknown_id_rejected(self, dataset):
        with pytest.raises(InputError):
            simulated_answer((0, 10 ** 6), dataset, ORIENT_A)


class TestAnnotationStore:
    def test_fresh_answer_recorded(self):
        store = AnnotationStore()
        record_answer(store, (3, 1), SAME, "oracle")
        assert store.answered((1, 3))
        assert store.answer_of((3, 1)) == SAME
        assert store.provenance_of((1, 3)) == "oracle"

    def test_oracle_overwrites_pseudo(self):
        store = AnnotationStore()
        store.record((0, 1), SAME, "pseudo")
        store.record((0, 1), DIFFERENT, "oracle")
        assert store.answer_of((0, 1)) == DIFFERENT
        assert store.provenance_of((0, 1)) == "oracle"

    def test_duplicate_oracle_answer_is_idempotent_warning(self, caplog):
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle", epoch=1)
        with caplog.at_level(logging.WARNING, logger="occ.oracle"):
            changed = store.record((0, 1), DIFFERENT, "oracle", epoch=2)
        assert not changed
        assert store.answer_of((0, 1)) == SAME
        assert any("duplicate" in r.message for r in caplog.records)

    def test_pseudo_never_overwrites(self):
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        assert not store.record((0, 1), DIFFERENT, "pseudo")
        assert store.answer_of((0, 1)) == SAME
        store.record((2, 3), SAME, "pseudo")
        assert not store.record((2, 3), DIFFERENT, "pseudo")
        assert store.answer_of((2, 3)) == SAME

    def test_self_pair_rejected(self):
        with pytest.raises(InputError):
            AnnotationStore().record((2, 2), SAME, "oracle")

    def test_counts_by_provenance(self):
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        store.record((1, 2), DIFFERENT, "pseudo")
        assert store.count() == 2
        assert store.count("oracle") == 1
        assert store.count("pseudo") == 1

    def test_jsonl_roundtrip(self, tmp_path):
        store = AnnotationStore()
        store.record((4, 2), SAME, "oracle", epoch=3)
        store.record((0, 9), DIFFERENT, "pseudo", epoch=5)
        path = tmp_path / "annotations.jsonl"
        store.save_jsonl(path)
        loaded = AnnotationStore.load_jsonl(path)
        assert sorted(loaded.items()) == sorted(store.items())

    def test_bad_jsonl_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"pair": [0, 1], "answer": "same", "provenance": "oracle"}\n'
                        '{"pair": [1]}\n')
        with pytest.raises(InputError, match="bad.jsonl:2"):
            AnnotationStore.load_jsonl(path)


class TestLambdaSchedule:
    def test_paper_instance_at_zero(self):
        schedule = LambdaSchedule(lambda_max=50.0, total_epochs=1000)
        assert lambda_at(schedule, 0) == pytest.approx(50.0)

    def test_endpoint_is_zero(self):
        schedule = LambdaSchedule(lambda_max=7.0, total_epochs=40)
        assert lambda_at(schedule, 40) == 0.0

    def test_paper_instance_midpoint(self):
        schedule = LambdaSchedule(lambda_max=50.0, total_epochs=1000)
        assert lambda_at(schedule, 500) == pytest.approx(25.0)

    def test_non_increasing(self):
        schedule = LambdaSchedule(lambda_max=3.0, total_epochs=17)
        values = [lambda_at(schedule, e) for e in range(18)]
        assert all(a >= b >= 0 for a, b in zip(values, values[1:]))

    def test_epoch_out_of_range_rejected(self):
        schedule = LambdaSchedule(lambda_max=1.0, total_epochs=10)
        with pytest.raises(InputError):
            lambda_at(schedule, 11)
        with pytest.raises(InputError):
            lambda_at(schedule, -1)

    def test_bad_schedule_rejected(self):
        with pytest.raises(ConfigError):
            LambdaSchedule(lambda_max=0.0, total_epochs=10)


class TestBuildQueryMatrix:
    def test_empty_store_gives_zero_matrix(self):
        qm = build_query_matrix(AnnotationStore(), [0, 1, 2], 5.0)
        assert np.all(qm.values == 0.0)

    def test_single_same_pair(self):
        store = AnnotationStore()
        store.record((2, 5), SAME, "oracle")
        ids = [1, 2, 5, 7]
        qm = build_query_matrix(store, ids, 50.0)
        want = np.zeros((4, 4))
        want[1, 2] = want[2, 1] = 50.0
        np.testing.assert_array_equal(qm.values, want)

    def test_different_answers_contribute_nothing(self):
        store = AnnotationStore()
        store.record((0, 1), DIFFERENT, "oracle")
        qm = build_query_matrix(store, [0, 1], 10.0)
        assert np.all(qm.values == 0.0)

    def test_symmetry_and_zero_diagonal_always(self):
        rng = np.random.default_rng(0)
        store = AnnotationStore()
        for _ in range(60):
            i, j = rng.integers(0, 12, size=2)
            if i != j:
                store.record((int(i), int(j)),
                             SAME if rng.random() < 0.6 else DIFFERENT, "oracle")
        for _ in range(10):
            ids = rng.permutation(12)[:6].tolist()
            qm = build_query_matrix(store, ids, 3.0)
            np.testing.assert_array_equal(qm.values, qm.values.T)
            assert np.all(np.diag(qm.values) == 0.0)


class TestExtendLabels:
    def test_strict_threshold_changes_nothing(self):
        rng = np.random.default_rng(1)
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        zhat = rng.normal(size=(6, 4))
        before = store.count()
        assert extend_labels(store, zhat, 0.9999) == 0
        assert store.count() == before

    def test_exact_duplicate_inherits_all_relations(self):
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        store.record((0, 2), DIFFERENT, "oracle")
        zhat = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0], [1.0, 0.0]])
        extend_labels(store, zhat, 0.95)  # sample 3 duplicates sample 0
        assert store.answer_of((3, 1)) == SAME
        assert store.provenance_of((3, 1)) == "pseudo"
        assert store.answer_of((3, 2)) == DIFFERENT

    def test_hand_case_matches_brute_force_scan(self):
        rng = np.random.default_rng(2)
        zhat = rng.normal(size=(6, 3))
        zhat[4] = zhat[0] * 1.7          # same direction as 0
        zhat[5] = zhat[2] * 0.4          # same direction as 2
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        store.record((2, 3), DIFFERENT, "oracle")
        theta = 0.9
        extend_labels(store, zhat, theta)

        # independent scan with plain loops
        expected = AnnotationStore()
        expected.record((0, 1), SAME, "oracle")
        expected.record((2, 3), DIFFERENT, "oracle")
        oracle_rel = {0: [(1, SAME)], 1: [(0, SAME)],
                      2: [(3, DIFFERENT)], 3: [(2, DIFFERENT)]}
        unit = zhat / np.linalg.norm(zhat, axis=1, keepdims=True)
        for i in sorted(oracle_rel):
            for k in range(6):
                if k != i and float(unit[i] @ unit[k]) > theta:
                    for other, answer in oracle_rel[i]:
                        if other != k:
                            expected.record((k, other), answer, "pseudo")
        assert sorted(store.items()) == sorted(expected.items())

    def test_never_contradicts_existing_answers(self):
        store = AnnotationStore()
        store.record((0, 1), SAME, "oracle")
        store.record((2, 1), DIFFERENT, "oracle")
        zhat = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.001]])
        # 2 duplicates 0, whose relation says (2,1) SAME; existing answer wins
        extend_labels(store, zhat, 0.95)
        assert store.answer_of((2, 1)) == DIFFERENT

    def test_monotone_growth(self):
        rng = np.random.default_rng(3)
        store = AnnotationStore()
        for _ in range(5):
            i, j = rng.integers(0, 8, size=2)
            if i != j:
                store.record((int(i), int(j)), SAME, "oracle")
        zhat = rng.normal(size=(8, 4))
        before = dict(store.items())
        extend_labels(store, zhat, 0.5)
        after = dict(store.items())
        for key, rec in before.items():
            assert after[key]["answer"] == rec["answer"]

    def test_progress_cache_matches_stateless(self):
        rng = np.random.default_rng(4)
        zhat1 = rng.normal(size=(10, 4))
        zhat2 = zhat1 + rng.normal(size=(10, 4)) * 0.05

        def build():
            s = AnnotationStore()
            s.record((0, 1), SAME, "oracle")
            s.record((2, 3), DIFFERENT, "oracle")
            s.record((4, 5), SAME, "oracle")
            return s

        plain, cached = build(), build()
        progress = {}
        extend_labels(plain, zhat1, 0.6)
        extend_labels(cached, zhat1, 0.6, progress=progress)
        plain.record((6, 7), SAME, "oracle")
        cached.record((6, 7), SAME, "oracle")
        extend_labels(plain, zhat2, 0.6)
        extend_labels(cached, zhat2, 0.6, progress=progress)
        assert sorted((k, r["answer"], r["provenance"]) for k, r in plain.items()) == \
               sorted((k, r["answer"], r["provenance"]) for k, r in cached.items())

    def test_bad_threshold_rejected(self):
        with pytest.raises(ConfigError):
            extend_labels(AnnotationStore(), np.zeros((2, 2)), 1.5)


class TestOracleConsistency:
    def test_union_find_detects_no_contradiction(self, dataset):
        """Simulated same answers must be consistent with some partition."""
        rng = np.random.default_rng(5)
        store = AnnotationStore()
        n = len(dataset)
        for _ in range(200):
            i, j = rng.integers(0, n, size=2)
            if i == j or store.answered((int(i), int(j))):
                continue
            ans = simulated_answer((int(i), int(j)), dataset, ORIENT_B)
            store.record((int(i), int(j)), ans, "oracle")

        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (i, j), rec in store.items():
            if rec["answer"] == SAME:
                parent[find(i)] = find(j)
        for (i, j), rec in store.items():
            if rec["answer"] == DIFFERENT:
                assert find(i) != find(j)
