import numpy as np
import pytest

from fifaudit import (
    compare_fifs,
    fif_statistical_parity,
    poison_labels,
    reweigh,
    statistical_parity,
    train_logistic,
)
from fifaudit.errors import DataError, GroupError
from fifaudit.interventions import build_record

from conftest import make_dataset


def counts_dataset(cells):
    """cells: {(group, y): count} expanded into rows."""
    a, y = [], []
    for (g, cls), n in cells.items():
        a += [g] * n
        y += [cls] * n
    return make_dataset(np.zeros((len(y), 1)), a, y)


class TestReweigh:
    def test_independence_fixed_point(self):
        # y independent of group: every weight equals 1
        d = counts_dataset({("g1", 1): 6, ("g1", 0): 4, ("g2", 1): 12, ("g2", 0): 8})
        rw = reweigh(d)
        assert np.allclose(rw.weights, 1.0)

    def test_hand_computed_2x2(self):
        d = counts_dataset({("g1", 1): 30, ("g1", 0): 20, ("g2", 1): 10, ("g2", 0): 40})
        rw = reweigh(d)
        # P[g1]=0.5, P[y=1]=0.4 -> w(g1,1)=0.5*0.4/0.3 etc.
        expect = {
            ("g1", 1): 2.0 / 3.0,
            ("g1", 0): 1.5,
            ("g2", 1): 2.0,
            ("g2", 0): 0.75,
        }
        for (g, cls), w in expect.items():
            mask = (rw.a[:, 0] == g) & (rw.y == cls)
            assert np.allclose(rw.weights[mask], w)

    def test_preserves_rows_and_values(self, insurance):
        rw = reweigh(insurance)
        assert rw.n_rows == insurance.n_rows
        assert np.array_equal(rw.x, insurance.x)
        assert np.array_equal(rw.y, insurance.y)

    def test_empty_cell_warns(self):
        d = counts_dataset({("g1", 1): 5, ("g1", 0): 5, ("g2", 0): 5, ("g2", 1): 0})
        # drop the zero entry: g2 has no positives
        with pytest.warns(UserWarning, match="empty cell"):
            reweigh(d)

    def test_reweigh_then_retrain_reduces_sp(self, insurance):
        base = train_logistic(insurance)
        sp_before = statistical_parity(base, insurance).value
        retrained = train_logistic(reweigh(insurance))
        sp_after = statistical_parity(retrained, insurance).value
        assert sp_after < sp_before


class TestPoison:
    def test_flip_counts(self):
        d = counts_dataset({("g1", 1): 10, ("g1", 0): 2, ("g2", 1): 10, ("g2", 0): 40})
        # g2 has the lower base rate of y
        poisoned = poison_labels(d, 0.5, seed=0)
        g2_pos_before = int(((d.a[:, 0] == "g2") & (d.y == 1)).sum())
        g2_pos_after = int(((poisoned.a[:, 0] == "g2") & (poisoned.y == 1)).sum())
        assert g2_pos_before - g2_pos_after == 5
        # nothing else changed
        g1_mask = d.a[:, 0] == "g1"
        assert np.array_equal(poisoned.y[g1_mask], d.y[g1_mask])
        assert np.array_equal(poisoned.x, d.x)

    def test_full_fraction_zeroes_base_rate(self):
        d = counts_dataset({("g1", 1): 8, ("g1", 0): 2, ("g2", 1): 4, ("g2", 0): 6})
        poisoned = poison_labels(d, 1.0, seed=0)
        assert int(poisoned.y[poisoned.a[:, 0] == "g2"].sum()) == 0

    def test_deterministic(self):
        d = counts_dataset({("g1", 1): 10, ("g1", 0): 5, ("g2", 1): 10, ("g2", 0): 20})
        p1 = poison_labels(d, 0.3, seed=11)
        p2 = poison_labels(d, 0.3, seed=11)
        assert np.array_equal(p1.y, p2.y)

    def test_no_flippable_rows_rejected(self):
        d = counts_dataset({("g1", 1): 5, ("g1", 0): 1, ("g2", 0): 5, ("g2", 1): 0})
        with pytest.raises(GroupError):
            poison_labels(d, 0.5, seed=0)

    def test_invalid_fraction(self):
        d = counts_dataset({("g1", 1): 5, ("g1", 0): 5, ("g2", 1): 2, ("g2", 0): 8})
        with pytest.raises(DataError):
            poison_labels(d, 0.0, seed=0)

    def test_poison_then_retrain_increases_sp(self, insurance):
        base = train_logistic(insurance)
        sp_before = statistical_parity(base, insurance).value
        retrained = train_logistic(poison_labels(insurance, 0.5, seed=1))
        sp_after = statistical_parity(retrained, insurance).value
        assert sp_after > sp_before


class TestCompare:
    def test_identical_reports_zero_deltas(self, insurance, dt1):
        rep = fif_statistical_parity(dt1, insurance, max_order=2)
        deltas = compare_fifs(rep, rep)
        assert all(dv == 0.0 for _, dv in deltas)

    def test_delta_sum_linearity(self, insurance, dt1, dt2):
        r1 = fif_statistical_parity(dt1, insurance, max_order=2)
        r2 = fif_statistical_parity(dt2, insurance, max_order=2)
        deltas = compare_fifs(r1, r2)
        assert sum(dv for _, dv in deltas) == pytest.approx(
            r2.estimated_bias - r1.estimated_bias, abs=1e-9
        )

    def test_poisoned_pipeline_delta_positive(self, insurance):
        base = train_logistic(insurance)
        before = fif_statistical_parity(base, insurance, max_order=2)
        retrained = train_logistic(poison_labels(insurance, 0.5, seed=1))
        after = fif_statistical_parity(retrained, insurance, max_order=2)
        deltas = compare_fifs(before, after)
        assert sum(dv for _, dv in deltas) > 0

    def test_mismatched_orders_rejected(self, insurance, dt1):
        r1 = fif_statistical_parity(dt1, insurance, max_order=1)
        r2 = fif_statistical_parity(dt1, insurance, max_order=2)
        with pytest.raises(DataError):
            compare_fifs(r1, r2)

    def test_record_serialization(self, insurance, dt1, dt2):
        m1 = statistical_parity(dt1, insurance)
        m2 = statistical_parity(dt2, insurance)
        r1 = fif_statistical_parity(dt1, insurance, max_order=2)
        r2 = fif_statistical_parity(dt2, insurance, max_order=2)
        record = build_record("affirmative-tree", {}, m1, m2, r1, r2)
        payload = record.to_dict()
        assert payload["kind"] == "affirmative-tree"
        assert payload["before"]["metric"]["value"] == pytest.approx(m1.value)
        assert len(payload["deltas"]) == 3
