"""Loaders, pair vectors, symmetric expansion, fold splitting, synthesis."""

import json
from collections import Counter

import numpy as np
import pytest

from adep.data import (
    DrugFeatureTable,
    Modality,
    PairSample,
    PairVectorSource,
    build_pair_vector,
    expand_symmetric,
    load_dataset,
    load_drug_features,
    load_interactions,
    pair_matrix,
    stratified_kfold,
    write_drug_features,
    write_interactions,
)
from adep.errors import ConfigError, ParseError, UnknownDrugError
from adep.synth import SynthConfig, class_pair_counts, gen_synthetic

DS_SHAPED = {
    # modality widths matching the three benchmark layouts
    "ds1": ([9991, 1162, 202, 881, 957], 26386),
    "ds2": ([1651, 316, 2040], 8014),
    "ds3": ([10184, 8934], 38236),
}


def make_table(widths, drugs=("a", "b")):
    table = DrugFeatureTable([Modality(f"m{i}", w) for i, w in enumerate(widths)])
    for d in drugs:
        table.add_drug(d)
    return table


def write_features_file(tmp_path, lines, header=None):
    if header is None:
        header = {"modalities": [{"name": "m0", "width": 10}]}
    path = tmp_path / "features.jsonl"
    with path.open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        for line in lines:
            fh.write((line if isinstance(line, str) else json.dumps(line)) + "\n")
    return path


class TestFeatureTable:
    @pytest.mark.parametrize("name", list(DS_SHAPED))
    def test_benchmark_pair_widths(self, name):
        widths, pair_width = DS_SHAPED[name]
        table = make_table(widths)
        assert table.pair_width == pair_width
        assert build_pair_vector(table, "a", "b").shape == (pair_width,)

    def test_drug_with_no_features_is_all_zeros(self):
        table = make_table([5, 3])
        assert np.array_equal(table.dense_vector("a"), np.zeros(8))

    def test_dense_vector_places_indices_per_modality(self):
        table = make_table([4, 3])
        table.set_features("a", "m0", [1, 3])
        table.set_features("a", "m1", [0])
        assert np.array_equal(table.dense_vector("a"),
                              [0, 1, 0, 1, 1, 0, 0])

    def test_reversed_pair_swaps_halves(self):
        table = make_table([4, 3])
        table.set_features("a", "m0", [0])
        table.set_features("b", "m1", [2])
        ab = build_pair_vector(table, "a", "b")
        ba = build_pair_vector(table, "b", "a")
        half = table.drug_width
        assert np.array_equal(ab[:half], ba[half:])
        assert np.array_equal(ab[half:], ba[:half])

    def test_unknown_drug(self):
        with pytest.raises(UnknownDrugError):
            build_pair_vector(make_table([4]), "a", "zzz")

    def test_index_out_of_range(self):
        table = make_table([4])
        with pytest.raises(Exception):
            table.set_features("a", "m0", [4])


class TestFeaturesLoader:
    def test_round_trip(self, tmp_path):
        table = make_table([6, 4], drugs=("d1", "d2", "d3"))
        table.set_features("d1", "m0", [0, 5])
        table.set_features("d2", "m1", [1, 2])
        write_drug_features(tmp_path / "f.jsonl", table)
        loaded = load_drug_features(tmp_path / "f.jsonl")
        assert loaded.pair_width == table.pair_width
        for d in ("d1", "d2", "d3"):
            assert np.array_equal(loaded.dense_vector(d), table.dense_vector(d))

    def test_parse_error_carries_line_number(self, tmp_path):
        path = write_features_file(tmp_path, ['{"drug_id": "a", broken'])
        with pytest.raises(ParseError) as excinfo:
            load_drug_features(path)
        assert excinfo.value.line == 2

    def test_unknown_modality_rejected(self, tmp_path):
        path = write_features_file(
            tmp_path, [{"drug_id": "a", "modality": "nope", "indices": [1]}])
        with pytest.raises(ParseError):
            load_drug_features(path)

    def test_index_beyond_width_rejected(self, tmp_path):
        path = write_features_file(
            tmp_path, [{"drug_id": "a", "modality": "m0", "indices": [10]}])
        with pytest.raises(ParseError):
            load_drug_features(path)

    def test_unsorted_indices_rejected(self, tmp_path):
        path = write_features_file(
            tmp_path, [{"drug_id": "a", "modality": "m0", "indices": [3, 1]}])
        with pytest.raises(ParseError):
            load_drug_features(path)


class TestInteractionsLoader:
    def test_round_trip(self, tmp_path):
        pairs = [PairSample("a", "b", 0), PairSample("c", "b", 2)]
        write_interactions(tmp_path / "i.tsv", pairs)
        loaded, n_classes = load_interactions(tmp_path / "i.tsv")
        assert [(p.drug_a, p.drug_b, p.event) for p in loaded] == \
               [("a", "b", 0), ("c", "b", 2)]
        assert n_classes == 3

    def test_bad_column_count(self, tmp_path):
        (tmp_path / "i.tsv").write_text("a\tb\n")
        with pytest.raises(ParseError):
            load_interactions(tmp_path / "i.tsv")

    def test_duplicate_unordered_pair_rejected(self, tmp_path):
        (tmp_path / "i.tsv").write_text("a\tb\t0\nb\ta\t1\n")
        with pytest.raises(ParseError):
            load_interactions(tmp_path / "i.tsv")

    def test_unknown_drug_rejected_with_table(self, tmp_path):
        (tmp_path / "i.tsv").write_text("a\tzz\t0\n")
        with pytest.raises(ParseError):
            load_interactions(tmp_path / "i.tsv", table=make_table([4]))


class TestExpandSymmetric:
    def test_one_pair_becomes_two_samples(self):
        out = expand_symmetric([PairSample("a", "b", 3)])
        assert len(out) == 2
        assert (out[0].drug_a, out[0].drug_b) == ("a", "b")
        assert (out[1].drug_a, out[1].drug_b) == ("b", "a")
        assert out[0].event == out[1].event == 3
        assert out[0].origin == out[1].origin

    def test_empty_list(self):
        assert expand_symmetric([]) == []

    def test_ten_pairs_twenty_samples_ten_origins(self):
        pairs = [PairSample(f"d{i}", f"d{i + 10}", i % 3) for i in range(10)]
        out = expand_symmetric(pairs)
        assert len(out) == 20
        assert len({p.origin for p in out}) == 10


def random_pairs(rng, n, n_classes):
    pairs = []
    seen = set()
    while len(pairs) < n:
        a, b = rng.integers(0, 1000, size=2)
        if a == b:
            continue
        origin = (min(a, b), max(a, b))
        if origin in seen:
            continue
        seen.add(origin)
        pairs.append(PairSample(f"d{a}", f"d{b}", int(rng.integers(0, n_classes))))
    return pairs


class TestStratifiedKfold:
    def test_exact_divisibility(self):
        pairs = [PairSample(f"a{i}", f"b{i}", 0) for i in range(10)]
        pairs += [PairSample(f"c{i}", f"e{i}", 1) for i in range(5)]
        split = stratified_kfold(pairs, 5, seed=1)
        per_fold = Counter()
        for p in pairs:
            per_fold[(split.fold_of(p), p.event)] += 1
        for fold in range(5):
            assert per_fold[(fold, 0)] == 2
            assert per_fold[(fold, 1)] == 1

    def test_three_members_land_in_three_folds(self):
        pairs = [PairSample(f"a{i}", f"b{i}", 0) for i in range(25)]
        pairs += [PairSample(f"x{i}", f"y{i}", 1) for i in range(3)]
        split = stratified_kfold(pairs, 5, seed=3)
        minority_folds = {split.fold_of(p) for p in pairs if p.event == 1}
        assert len(minority_folds) == 3

    def test_same_seed_is_deterministic(self):
        rng = np.random.default_rng(0)
        pairs = random_pairs(rng, 40, 3)
        a = stratified_kfold(pairs, 5, seed=9).assignment
        b = stratified_kfold(pairs, 5, seed=9).assignment
        assert a == b

    def test_k_larger_than_pairs(self):
        with pytest.raises(ConfigError):
            stratified_kfold([PairSample("a", "b", 0)], 5, seed=0)

    def test_partition_stratification_and_mirror_colocation(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            n = int(rng.integers(5, 60))
            n_classes = int(rng.integers(1, 5))
            pairs = random_pairs(rng, n, n_classes)
            split = stratified_kfold(pairs, 5, seed=int(rng.integers(1 << 16)))
            assert set(split.assignment) == {p.origin for p in pairs}
            for event in range(n_classes):
                counts = Counter(split.assignment[p.origin]
                                 for p in pairs if p.event == event)
                sizes = [counts.get(f, 0) for f in range(5)]
                assert max(sizes) - min(sizes) <= 1
            for p in expand_symmetric(pairs):
                assert split.fold_of(p) == split.assignment[p.origin]

    def test_mirrored_orderings_share_a_fold(self):
        pairs = [PairSample(f"a{i}", f"b{i}", i % 2) for i in range(12)]
        split = stratified_kfold(pairs, 3, seed=4)
        for p in pairs:
            assert split.fold_of(PairSample(p.drug_b, p.drug_a, p.event)) == split.fold_of(p)


class TestPairVectorSource:
    def test_rows_match_dense_matrix(self, rng):
        table = make_table([8, 5], drugs=[f"d{i}" for i in range(6)])
        for i in range(6):
            table.set_features(f"d{i}", "m0", sorted(
                rng.choice(8, size=3, replace=False).tolist()))
        samples = expand_symmetric(
            [PairSample("d0", "d1", 0), PairSample("d2", "d3", 1),
             PairSample("d4", "d5", 0)])
        x_dense, y_dense = pair_matrix(table, samples)
        source = PairVectorSource(table, samples)
        assert source.shape == x_dense.shape
        assert np.array_equal(source[np.array([0, 3, 5])], x_dense[[0, 3, 5]])
        assert np.array_equal(source[1:4], x_dense[1:4])
        assert np.array_equal(source.labels, y_dense)


class TestSynthetic:
    def test_uniform_exponent_near_equal_counts(self):
        counts = class_pair_counts(4000, 8, 0.0)
        assert counts.sum() == 4000
        assert counts.max() - counts.min() <= 1

    def test_power_law_ratio(self):
        counts = class_pair_counts(4000, 8, 1.5)
        assert counts.sum() == 4000
        assert counts.max() / counts.min() >= 10

    def test_determinism(self):
        config = SynthConfig(n_drugs=40, n_classes=3, n_pairs=100, seed=5,
                             modality_widths=(("m", 20),))
        a = gen_synthetic(config)
        b = gen_synthetic(config)
        assert [(p.drug_a, p.drug_b, p.event) for p in a.dataset.pairs] == \
               [(p.drug_a, p.drug_b, p.event) for p in b.dataset.pairs]
        for drug in a.dataset.table.drugs:
            assert np.array_equal(a.dataset.table.dense_vector(drug),
                                  b.dataset.table.dense_vector(drug))

    def test_too_many_pairs_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(n_drugs=10, n_classes=3, n_pairs=100)

    def test_flip_zero_shares_prototype_bits_per_class(self):
        # 3 clusters -> 6 combos; n_classes=6 makes class<->combo 1:1
        config = SynthConfig(n_drugs=30, n_classes=6, n_pairs=60, flip_prob=0.0,
                             imbalance_exponent=0.0,
                             modality_widths=(("m", 30),), seed=2)
        result = gen_synthetic(config)
        table = result.dataset.table
        by_class = {}
        for p in result.dataset.pairs:
            vec = build_pair_vector(table, p.drug_a, p.drug_b)
            by_class.setdefault(p.event, []).append(vec)
        for vectors in by_class.values():
            for vec in vectors[1:]:
                assert np.array_equal(vec, vectors[0])

    def test_labels_are_signal_bearing(self):
        """Depth-limited stump oracle on prototype bits beats the majority
        class, confirming the labels carry learnable signal."""
        config = SynthConfig(n_drugs=80, n_classes=4, n_pairs=600,
                             imbalance_exponent=1.0, flip_prob=0.05,
                             modality_widths=(("m", 40),), seed=11)
        result = gen_synthetic(config)
        table = result.dataset.table
        x, y = pair_matrix(table, result.dataset.pairs)
        # candidate features: each cluster's first prototype bit, both halves
        candidates = []
        width = table.drug_width
        for cluster, proto in result.prototypes["m"].items():
            candidates.append(int(proto[0]))
            candidates.append(int(proto[0]) + width)

        def stump_accuracy(feature):
            correct = 0
            for side in (0.0, 1.0):
                mask = x[:, feature] == side
                if mask.any():
                    votes = np.bincount(y[mask], minlength=4)
                    correct += votes.max()
            return correct / y.size

        best = max(stump_accuracy(f) for f in candidates)
        majority = np.bincount(y).max() / y.size
        assert best > majority + 0.05

    def test_cli_shaped_dataset_round_trip(self, tmp_path):
        config = SynthConfig(n_drugs=40, n_classes=3, n_pairs=120, seed=6,
                             modality_widths=(("se", 25), ("tg", 15)))
        result = gen_synthetic(config)
        write_drug_features(tmp_path / "features.jsonl", result.dataset.table)
        write_interactions(tmp_path / "interactions.tsv", result.dataset.pairs)
        loaded = load_dataset(tmp_path)
        assert loaded.n_classes == 3
        assert len(loaded.pairs) == 120
        x1, y1 = pair_matrix(result.dataset.table, result.dataset.pairs)
        x2, y2 = pair_matrix(loaded.table, loaded.pairs)
        assert np.array_equal(x1, x2)
        assert np.array_equal(y1, y2)
