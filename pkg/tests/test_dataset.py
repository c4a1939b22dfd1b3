import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fifaudit import (
    Schema,
    filter_group,
    generate_insurance_example,
    group_keys,
    load_csv,
    write_csv,
)
from fifaudit.errors import DataError, GroupError, SchemaError

from conftest import make_dataset


SCHEMA = Schema(("income", "fitness"), ("age",), "Y")


def write_text(path, text):
    path.write_text(text, encoding="utf-8")


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            Schema(("a", "a"), ("s",), "y")
        with pytest.raises(SchemaError):
            Schema(("a",), ("s",), "a")

    def test_empty_roles_rejected(self):
        with pytest.raises(SchemaError):
            Schema((), ("s",), "y")
        with pytest.raises(SchemaError):
            Schema(("a",), (), "y")

    def test_json_sidecar_round_trip(self, tmp_path):
        schema = Schema(("a", "b"), ("s",), "y", "p")
        schema.to_json(tmp_path / "schema.json")
        assert Schema.from_json(tmp_path / "schema.json") == schema


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,fitness,age,Y\n0.5,0.9,young,1\n0.2,0.1,elderly,0\n"
                      "0.7,0.4,young,0\n0.9,0.8,elderly,1\n")
        d = load_csv(f, SCHEMA)
        assert d.n_rows == 4
        assert d.schema.n_features == 2
        assert d.x[0, 0] == 0.5
        assert list(d.y) == [1, 0, 0, 1]
        assert list(d.a[:, 0]) == ["young", "elderly", "young", "elderly"]

    def test_non_binary_label_reports_row(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,fitness,age,Y\n0.5,0.9,young,1\n0.2,0.1,elderly,2\n")
        with pytest.raises(DataError, match="row 2"):
            load_csv(f, SCHEMA)

    def test_missing_column(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,age,Y\n0.5,young,1\n")
        with pytest.raises(DataError, match="fitness"):
            load_csv(f, SCHEMA)

    def test_unparseable_numeric_cell(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,fitness,age,Y\nabc,0.9,young,1\n")
        with pytest.raises(DataError, match="income"):
            load_csv(f, SCHEMA)

    def test_missing_cell_is_hard_error(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,fitness,age,Y\n0.5,,young,1\n")
        with pytest.raises(DataError, match="missing cell"):
            load_csv(f, SCHEMA)

    def test_empty_file(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "")
        with pytest.raises(DataError, match="empty"):
            load_csv(f, SCHEMA)

    def test_header_only_file(self, tmp_path):
        f = tmp_path / "d.csv"
        write_text(f, "income,fitness,age,Y\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(f, SCHEMA)

    def test_row_count_never_drops_rows(self, tmp_path):
        f = tmp_path / "d.csv"
        rows = "\n".join(f"0.{i},0.{i},young,{i % 2}" for i in range(1, 10))
        write_text(f, "income,fitness,age,Y\n" + rows + "\n")
        assert load_csv(f, SCHEMA).n_rows == 9

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(-1e6, 1e6, allow_nan=False, width=32),
                st.floats(-1e6, 1e6, allow_nan=False, width=32),
                st.sampled_from(["young", "elderly", "mid"]),
                st.integers(0, 1),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_round_trip(self, tmp_path_factory, rows):
        tmp = tmp_path_factory.mktemp("roundtrip")
        d = make_dataset(
            x=[[r[0], r[1]] for r in rows],
            a=[r[2] for r in rows],
            y=[r[3] for r in rows],
            feature_names=("income", "fitness"),
            sensitive_names=("age",),
        )
        write_csv(d, tmp / "out.csv")
        schema = Schema(("income", "fitness"), ("age",), "y")
        d2 = load_csv(tmp / "out.csv", schema)
        assert np.array_equal(d.x, d2.x)
        assert np.array_equal(d.y, d2.y)
        assert np.array_equal(d.a, d2.a)
        # second write reproduces identical bytes
        write_csv(d2, tmp / "out2.csv")
        assert (tmp / "out.csv").read_bytes() == (tmp / "out2.csv").read_bytes()


class TestGroups:
    def test_single_sensitive_feature_order(self):
        d = make_dataset([[0.0], [1.0], [2.0]], ["young", "elderly", "young"], [0, 1, 0])
        assert group_keys(d) == [("young",), ("elderly",)]

    def test_two_sensitive_features_all_combos(self):
        a = [["r1", "m"], ["r1", "f"], ["r2", "m"], ["r2", "f"]]
        d = make_dataset([[0.0]] * 4, a, [0, 1, 0, 1], sensitive_names=("race", "sex"))
        assert len(group_keys(d)) == 4

    def test_absent_combination_not_listed(self):
        a = [["r1", "m"], ["r1", "f"], ["r2", "m"], ["r1", "m"]]
        d = make_dataset([[0.0]] * 4, a, [0, 1, 0, 1], sensitive_names=("race", "sex"))
        keys = group_keys(d)
        # brute-force distinct count
        assert len(keys) == len({tuple(row) for row in a})
        assert ("r2", "f") not in keys

    def test_filter_preserves_order_and_weights(self):
        d = make_dataset(
            [[1.0], [2.0], [3.0], [4.0]],
            ["g1", "g2", "g1", "g2"],
            [0, 1, 1, 0],
            weights=np.array([1.0, 2.0, 3.0, 4.0]),
        )
        sub = filter_group(d, ("g1",))
        assert list(sub.x[:, 0]) == [1.0, 3.0]
        assert list(sub.weights) == [1.0, 3.0]

    def test_filter_whole_dataset(self):
        d = make_dataset([[1.0], [2.0]], ["g", "g"], [0, 1])
        sub = filter_group(d, ("g",))
        assert sub.n_rows == d.n_rows

    def test_filter_absent_group(self):
        d = make_dataset([[1.0]], ["g"], [1])
        with pytest.raises(GroupError):
            filter_group(d, ("other",))

    def test_groups_partition_dataset(self, insurance):
        keys = group_keys(insurance)
        sizes = [filter_group(insurance, g).n_rows for g in keys]
        assert sum(sizes) == insurance.n_rows
        # pairwise disjoint: each row matches exactly one key
        match_counts = np.zeros(insurance.n_rows, dtype=int)
        for g in keys:
            match_counts += (insurance.a[:, 0] == g[0]).astype(int)
        assert (match_counts == 1).all()


class TestInsuranceGenerator:
    def test_determinism(self):
        d1 = generate_insurance_example(200, seed=5)
        d2 = generate_insurance_example(200, seed=5)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.y, d2.y)

    def test_different_seeds_differ(self):
        d1 = generate_insurance_example(200, seed=5)
        d2 = generate_insurance_example(200, seed=6)
        assert not np.array_equal(d1.x, d2.x)

    def test_group_sizes(self, insurance):
        assert insurance.n_rows == 1000
        assert filter_group(insurance, ("young",)).n_rows == 500
        assert filter_group(insurance, ("elderly",)).n_rows == 500

    def test_features_in_unit_interval(self, insurance):
        assert insurance.x.min() >= 0.0
        assert insurance.x.max() <= 1.0

    def test_calibrated_dt1_rates(self, insurance, dt1):
        from fifaudit import positive_rate

        assert positive_rate(dt1, insurance, ("young",)) == pytest.approx(0.704, abs=0.03)
        assert positive_rate(dt1, insurance, ("elderly",)) == pytest.approx(0.172, abs=0.03)

    def test_invalid_n(self):
        with pytest.raises(DataError):
            generate_insurance_example(0)


class TestDatasetValidation:
    def test_label_outside_binary(self):
        with pytest.raises(DataError):
            make_dataset([[0.0]], ["g"], [2])

    def test_negative_weights(self):
        with pytest.raises(DataError):
            make_dataset([[0.0], [1.0]], ["g", "g"], [0, 1], weights=np.array([1.0, -1.0]))

    def test_all_zero_weights(self):
        with pytest.raises(DataError):
            make_dataset([[0.0], [1.0]], ["g", "g"], [0, 1], weights=np.array([0.0, 0.0]))

    def test_immutable_arrays(self):
        d = make_dataset([[0.0]], ["g"], [1])
        with pytest.raises(ValueError):
            d.x[0, 0] = 5.0
