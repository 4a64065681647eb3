import numpy as np
import pytest

from occ.data import (Dataset, SyntheticSpec, class_center, export_scatter,
                      generate_synthetic, load_dataset, pca_2d, save_dataset,
                      scatter_rows)
from occ.errors import ConfigError, InputError
from occ.oracle import OrientationMap


class TestGenerateSynthetic:
    def test_noiseless_gives_exactly_class_centers(self):
        spec = SyntheticSpec(per_class=3, noise_sigma=0.0, separation_a=1.0,
                             separation_b=1.0, seed=0)
        ds = generate_synthetic(spec)
        distinct = {tuple(row) for row in ds.features}
        assert len(distinct) == 4
        for k in range(len(ds)):
            np.testing.assert_array_equal(ds.features[k],
                                          class_center(spec, int(ds.classes[k])))

    def test_fixed_seed_is_byte_identical(self):
        a = generate_synthetic(SyntheticSpec(per_class=10, seed=42))
        b = generate_synthetic(SyntheticSpec(per_class=10, seed=42))
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.classes, b.classes)

    def test_nearest_centroid_on_block_one_recovers_orientation_a(self):
        spec = SyntheticSpec(per_class=500, noise_sigma=0.1, separation_a=1.0,
                             separation_b=1.0, seed=7)
        ds = generate_synthetic(spec)
        wa = spec.dim // 2
        block = ds.features[:, :wa]
        centroids = {}
        for cluster in (0, 1):
            centroids[cluster] = block[ds.orient_a == cluster].mean(axis=0)
        pred = np.array([min(centroids, key=lambda c: np.linalg.norm(row - centroids[c]))
                         for row in block])
        assert (pred != ds.orient_a).mean() < 0.01

    def test_identical_orientations_rejected(self):
        same = OrientationMap(name="X", mapping={0: 0, 1: 0, 2: 1, 3: 1})
        relabeled = OrientationMap(name="Y", mapping={0: 1, 1: 1, 2: 0, 3: 0})
        with pytest.raises(ConfigError):
            SyntheticSpec(orientation_a=same, orientation_b=relabeled).validate()

    def test_labelings_match_orientation_maps(self):
        spec = SyntheticSpec(per_class=4, seed=1)
        ds = generate_synthetic(spec)
        np.testing.assert_array_equal(ds.orient_a,
                                      spec.orientation_a.labels(ds.classes))
        np.testing.assert_array_equal(ds.orient_b,
                                      spec.orientation_b.labels(ds.classes))


class TestDatasetFiles:
    def test_csv_roundtrip(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(per_class=6, seed=3))
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.classes, ds.classes)
        np.testing.assert_array_equal(loaded.orient_a, ds.orient_a)
        np.testing.assert_array_equal(loaded.orient_b, ds.orient_b)

    def test_missing_class_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1\n0.0,1.0\n")
        with pytest.raises(InputError):
            load_dataset(path)

    def test_hand_written_rows_parse_exactly(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("f0,f1,class,orientA,orientB\n"
                        "0.5,-1.25,0,0,1\n"
                        "2.0,3.5,1,1,0\n"
                        "-0.75,0.0,2,0,0\n")
        ds = load_dataset(path)
        np.testing.assert_array_equal(ds.features,
                                      [[0.5, -1.25], [2.0, 3.5], [-0.75, 0.0]])
        np.testing.assert_array_equal(ds.classes, [0, 1, 2])
        np.testing.assert_array_equal(ds.orient_a, [0, 1, 0])
        np.testing.assert_array_equal(ds.orient_b, [1, 0, 0])

    def test_jsonl_roundtrip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"f0": 1.0, "f1": 2.0, "class": 0, "orientA": 0, "orientB": 1}\n'
                        '{"f0": -1.0, "f1": 0.5, "class": 1, "orientA": 1, "orientB": 0}\n')
        ds = load_dataset(path)
        assert ds.dim == 2 and len(ds) == 2
        np.testing.assert_array_equal(ds.classes, [0, 1])

    def test_bad_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,class\n1.0,2.0,0\nx,2.0,1\n")
        with pytest.raises(InputError, match="bad.csv:3"):
            load_dataset(path)


class TestScatterExport:
    def test_row_count_and_header(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(per_class=5, seed=4))
        path = tmp_path / "scatter.csv"
        export_scatter(ds, ds.features, np.zeros(len(ds), dtype=int), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "pc1,pc2,class,orientA,orientB,cluster"
        assert len(lines) == len(ds) + 1

    def test_deterministic(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(per_class=5, seed=5))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_scatter(ds, ds.features, ds.orient_a, p1)
        export_scatter(ds, ds.features, ds.orient_a, p2)
        assert p1.read_text() == p2.read_text()

    def test_noiseless_class_centroids_stay_distinct(self):
        spec = SyntheticSpec(per_class=10, noise_sigma=0.0, seed=6)
        ds = generate_synthetic(spec)
        rows = scatter_rows(ds, ds.features, np.zeros(len(ds), dtype=int))
        coords = np.array([[r["pc1"], r["pc2"]] for r in rows])
        centroids = [coords[ds.classes == c].mean(axis=0) for c in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(centroids[i] - centroids[j]) > 1e-6


class TestPca2d:
    def test_sign_fix_makes_projection_deterministic(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(40, 5))
        c1, comps1 = pca_2d(x)
        c2, comps2 = pca_2d(x.copy())
        np.testing.assert_array_equal(c1, c2)
        for k in range(2):
            assert comps1[k, np.argmax(np.abs(comps1[k]))] > 0
        np.testing.assert_array_equal(comps1, comps2)
