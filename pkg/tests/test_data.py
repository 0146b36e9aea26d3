"""Ingest module: parsing, splitting, filtering, canonical dump round trip."""

import numpy as np
import pytest

from noisyrec.data import (
    ColumnSchema,
    SplitSpec,
    TestFilter,
    filter_test_set,
    load_splits,
    parse_interactions,
    save_splits,
    split_dataset,
)
from noisyrec.exceptions import ParseError


SCHEMA3 = ColumnSchema(delimiter="tab", columns=("user", "item", "label"))


class TestParse:
    def test_two_lines(self):
        ds = parse_interactions("u1\ti1\t5\nu2\ti1\t3", SCHEMA3, num_classes=5)
        assert ds.n_users == 2
        assert ds.n_items == 1
        assert sorted(ds.labels.tolist()) == [3, 5]

    def test_empty_input(self):
        ds = parse_interactions("", SCHEMA3, num_classes=5)
        assert len(ds) == 0
        assert ds.n_users == 0 and ds.n_items == 0

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="outside 1..5"):
            parse_interactions("u1\ti1\t9", SCHEMA3, num_classes=5)

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError) as err:
            parse_interactions("u1\ti1\t5\nu2\ti2", SCHEMA3, num_classes=5)
        assert err.value.line_no == 2

    def test_non_integer_label(self):
        with pytest.raises(ParseError):
            parse_interactions("u1\ti1\tfive", SCHEMA3, num_classes=5)

    def test_duplicate_pair_keeps_last(self):
        ds = parse_interactions("u1\ti1\t2\nu1\ti2\t3\nu1\ti1\t5", SCHEMA3, num_classes=5)
        assert len(ds) == 2
        pos = {(ds.users[k], ds.items[k]): ds.labels[k] for k in range(len(ds))}
        assert pos[(0, 0)] == 5

    def test_space_delimiter_and_timestamp(self):
        schema = ColumnSchema(delimiter="space", columns=("user", "item", "label", "timestamp"))
        ds = parse_interactions("a x 4 100\nb y 2 200", schema, num_classes=5)
        assert ds.timestamps.tolist() == [100, 200]

    def test_index_maps_are_bijective(self):
        rng = np.random.default_rng(0)
        lines = [f"u{rng.integers(50)}\ti{rng.integers(80)}\t{rng.integers(1, 6)}" for _ in range(400)]
        ds = parse_interactions("\n".join(lines), SCHEMA3, num_classes=5)
        for ext, idx in ds.user_index.items():
            assert ds.user_ids[idx] == ext
        for ext, idx in ds.item_index.items():
            assert ds.item_ids[idx] == ext
        assert len(ds.user_index) == len(ds.user_ids)
        assert len(ds.item_index) == len(ds.item_ids)


class TestSplit:
    def _dataset(self, n, seed=0):
        rng = np.random.default_rng(seed)
        lines = [f"u{k}\ti{rng.integers(40)}\t{rng.integers(1, 6)}" for k in range(n)]
        return parse_interactions("\n".join(lines), SCHEMA3, num_classes=5)

    def test_exact_sizes(self):
        train, val, test = split_dataset(self._dataset(10), SplitSpec((0.8, 0.1, 0.1), seed=1))
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_deterministic(self):
        ds = self._dataset(50)
        a = split_dataset(ds, SplitSpec(seed=7))
        b = split_dataset(ds, SplitSpec(seed=7))
        for x, y in zip(a, b):
            assert np.array_equal(x.users, y.users)
            assert np.array_equal(x.items, y.items)

    def test_partition_membership(self):
        # every record lands in exactly one split, union equals the input
        ds = self._dataset(1000)
        for seed in (0, 3, 11):
            train, val, test = split_dataset(ds, SplitSpec(seed=seed))
            seen = {}
            for part in (train, val, test):
                for k in range(len(part)):
                    key = (int(part.users[k]), int(part.items[k]))
                    assert key not in seen
                    seen[key] = int(part.labels[k])
            assert len(seen) == len(ds)
            original = {
                (int(ds.users[k]), int(ds.items[k])): int(ds.labels[k]) for k in range(len(ds))
            }
            assert seen == original

    def test_sizes_within_one_of_exact(self):
        ds = self._dataset(97)
        train, val, test = split_dataset(ds, SplitSpec((0.8, 0.1, 0.1), seed=2))
        for part, ratio in zip((train, val, test), (0.8, 0.1, 0.1)):
            assert abs(len(part) - 97 * ratio) <= 1

    def test_empty_dataset_rejected(self):
        ds = parse_interactions("", SCHEMA3, num_classes=5)
        with pytest.raises(ValueError):
            split_dataset(ds, SplitSpec())

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec((0.5, 0.4, 0.2))


class TestFilterTestSet:
    def _dataset(self, labels):
        lines = [f"u{k}\ti{k}\t{y}" for k, y in enumerate(labels)]
        return parse_interactions("\n".join(lines), SCHEMA3, num_classes=5)

    def test_rating_equals(self):
        out = filter_test_set(self._dataset([5, 3, 5]), TestFilter("rating-equals", 5))
        assert len(out) == 2

    def test_none_is_identity(self):
        ds = self._dataset([4, 3, 2])
        out = filter_test_set(ds, TestFilter("none"))
        assert len(out) == len(ds)

    def test_rating_greater_than(self):
        out = filter_test_set(self._dataset([4, 3, 2]), TestFilter("rating-greater-than", 3))
        assert len(out) == 1

    def test_aux_at_least(self):
        schema = ColumnSchema(delimiter="tab", columns=("user", "item", "label", "aux"))
        ds = parse_interactions("u1\ti1\t3\t12.5\nu2\ti2\t3\t4.0", schema, num_classes=5)
        out = filter_test_set(ds, TestFilter("aux-at-least", 10.0))
        assert len(out) == 1

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            TestFilter("rating-at-most", 3)


class TestCanonicalDump:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        lines = [f"u{k % 23}\ti{rng.integers(31)}\t{rng.integers(1, 6)}" for k in range(200)]
        ds = parse_interactions("\n".join(lines), SCHEMA3, num_classes=5)
        train, val, test = split_dataset(ds, SplitSpec(seed=9))
        path = tmp_path / "dump.tsv"
        save_splits(path, train, val, test)
        train2, val2, test2 = load_splits(path, num_classes=5)

        for a, b in zip((train, val, test), (train2, val2, test2)):
            assert len(a) == len(b)
            rows_a = [(a.user_ids[a.users[k]], a.item_ids[a.items[k]], int(a.labels[k])) for k in range(len(a))]
            rows_b = [(b.user_ids[b.users[k]], b.item_ids[b.items[k]], int(b.labels[k])) for k in range(len(b))]
            assert rows_a == rows_b

    def test_reload_is_byte_stable(self, tmp_path):
        ds = parse_interactions("u1\ti1\t5\nu2\ti2\t3\nu3\ti3\t4", SCHEMA3, num_classes=5)
        train, val, test = split_dataset(ds, SplitSpec((0.4, 0.3, 0.3), seed=0))
        p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        save_splits(p1, train, val, test)
        save_splits(p2, *load_splits(p1, num_classes=5))
        assert p1.read_bytes() == p2.read_bytes()
