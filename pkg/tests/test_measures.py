from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boolrestrict import (
    And,
    ArityError,
    BitPoint,
    Constant,
    Dictator,
    Majority,
    Or,
    Parity,
    TableFunction,
    Tribes,
    random_table,
)
from boolrestrict.measures import (
    BlockCertificate,
    all_tables,
    average_sensitivity,
    bs_all,
    bs_exact,
    bs_partition_estimate,
    dt_exact,
    dt_naive,
    equipartition,
    kkl_diagnostic,
    minimal_sensitive_blocks,
    monotone_restricted_influence,
    osss_check,
    osss_sweep,
    restricted_influences_exact,
    sensitivity,
    sensitivity_all,
)


def brute_bs(values, n, x):
    """Largest family of disjoint sensitive blocks, by plain search over all masks."""
    sens = [b for b in range(1, 1 << n) if values[x ^ b] != values[x]]

    def best(avail, start):
        out = 0
        for j in range(start, len(sens)):
            b = sens[j]
            if b & ~avail == 0:
                out = max(out, 1 + best(avail & ~b, j + 1))
        return out

    return best((1 << n) - 1, 0)


def brute_dt(values, n):
    @lru_cache(maxsize=None)
    def rec(fixed, signs):
        pts = [x for x in range(1 << n) if x & fixed == signs]
        if len({values[x] for x in pts}) == 1:
            return 0
        return 1 + min(
            max(rec(fixed | 1 << i, signs), rec(fixed | 1 << i, signs | 1 << i))
            for i in range(n) if not fixed >> i & 1
        )

    return rec(0, 0)


tables = st.tuples(st.integers(1, 4), st.integers(0, 2 ** 31)).map(
    lambda a: TableFunction(random_table(a[0], a[1], 0.5)))


class TestSensitivity:
    def test_or_at_all_false(self):
        assert sensitivity(Or(5), 0) == 5
        assert sensitivity(Or(5), BitPoint(5, 1)) == 1

    def test_parity_everywhere(self):
        np.testing.assert_array_equal(sensitivity_all(Parity(4)), np.full(16, 4))

    def test_average_matches_total_influence(self):
        f = Majority(5)
        assert average_sensitivity(f) == pytest.approx(sensitivity_all(f).mean())

    def test_majority_point(self):
        assert sensitivity(Majority(3), BitPoint.from_signs([1, 1, -1])) == 2

    def test_arity_mismatch(self):
        with pytest.raises(ArityError):
            sensitivity(Or(3), BitPoint(4, 0))

    def test_kkl_report(self):
        d = kkl_diagnostic(Majority(5))
        assert d["ratio"] > 0


class TestBlockSensitivity:
    @settings(max_examples=60)
    @given(tables)
    def test_matches_brute_force(self, f):
        v = f.table().values
        for x in range(1 << f.n):
            b, cert = bs_exact(f, x)
            assert b == brute_bs(v, f.n, x)
            assert cert.verify(f) and len(cert.blocks) == b

    @settings(max_examples=30)
    @given(tables)
    def test_bs_dominates_s(self, f):
        s = sensitivity_all(f)
        assert np.all(bs_all(f) >= s)

    def test_and_all_true(self):
        assert bs_exact(And(5), 0b11111)[0] == 5

    def test_and_two_false(self):
        b, cert = bs_exact(And(4), 0b1100)
        assert b == 1 and cert.block_sets()[0] == [0, 1]

    def test_or(self):
        assert bs_exact(Or(6), 0)[0] == 6

    def test_minimal_blocks_are_minimal(self):
        f = Tribes(2, 4)
        v = f.table().values
        for x in range(16):
            blocks = set(int(b) for b in minimal_sensitive_blocks(v, 4, x))
            for b in blocks:
                assert v[x ^ b] != v[x]
                sub = (b - 1) & b
                while sub:
                    assert v[x ^ sub] == v[x]
                    sub = (sub - 1) & b

    def test_certificate_rejects_overlap(self):
        cert = BlockCertificate(BitPoint(3, 0), (0b011, 0b110))
        assert not cert.verify(Or(3))

    def test_cap(self):
        with pytest.raises(ArityError):
            bs_exact(Majority(15), 0)


class TestPartition:
    def test_equipartition_sizes(self):
        blocks = equipartition(np.arange(10), 3)
        assert [b.size for b in blocks] == [4, 3, 3]
        np.testing.assert_array_equal(np.concatenate(blocks), np.arange(10))

    def test_equipartition_range(self):
        with pytest.raises(ValueError):
            equipartition(np.arange(4), 5)

    def test_parity_always_full(self):
        est = bs_partition_estimate(Parity(8), 4, 500, seed=1)
        assert est.count_hist == [0, 0, 0, 0, 500]
        assert est.p_low == 0 and est.p_constant == 0

    def test_constant_never_sensitive(self):
        est = bs_partition_estimate(Constant(6, 1), 3, 200, seed=1)
        assert est.p_low == 1 and est.p_constant == 1
        assert est.double_count_holds

    def test_lower_bound_on_exact(self):
        f = Majority(9)
        est = bs_partition_estimate(f, 3, 300, seed=2)
        for c, x in zip(est.counts, est.x_indices):
            assert c <= bs_exact(f, int(x))[0]

    def test_double_count_tribes(self):
        assert bs_partition_estimate(Tribes(3), 4, 4000, seed=3).double_count_holds

    def test_worker_invariance(self):
        a = bs_partition_estimate(Majority(9), 3, 5000, seed=4)
        b = bs_partition_estimate(Majority(9), 3, 5000, seed=4, workers=2)
        assert a.as_dict() == b.as_dict()


class TestDecisionTree:
    @pytest.mark.parametrize("f,d", [
        (Constant(3, 1), 0), (Dictator(4, 2), 1), (Parity(5), 5), (Or(4), 4), (And(3), 3),
    ])
    def test_known(self, f, d):
        assert dt_exact(f) == d

    @settings(max_examples=60)
    @given(tables)
    def test_matches_brute_force(self, f):
        d = brute_dt(tuple(int(v) for v in f.table().values), f.n)
        assert dt_exact(f) == d == dt_naive(f)

    def test_two_variable_histogram(self):
        # 2 constants, 4 (anti)dictators, 10 depth-2 functions
        assert osss_sweep(2).dt_hist == [2, 4, 10]

    def test_three_variable_depth_one(self):
        assert osss_sweep(3).dt_hist[:2] == [2, 6]

    def test_all_tables_shape(self):
        assert all_tables(3).shape == (256, 8)
        with pytest.raises(ArityError):
            all_tables(5)


class TestOSSS:
    @settings(max_examples=60)
    @given(tables)
    def test_flip_form_holds(self, f):
        assert osss_check(f, "flip").holds

    def test_spectral_differs_by_four(self):
        f = Majority(5)
        a, b = osss_check(f, "flip"), osss_check(f, "spectral")
        assert a.lhs == pytest.approx(4 * b.lhs)

    @pytest.mark.slow
    def test_sweep_n4(self):
        r = osss_sweep(4)
        assert r.functions == 65536 and sum(r.dt_hist) == 65536
        assert r.dt_memo_equals_naive and r.osss_flip_violations == 0

    def test_dictator_spectral_tight(self):
        r = osss_check(Dictator(3, 0), "spectral")
        assert r.lhs == r.rhs == 0.25 and r.holds

    def test_majority_flip(self):
        r = osss_check(Majority(3))
        assert r.lhs == 1.5 and r.rhs == 0.25

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            osss_check(Or(2), "other")


class TestMonotone:
    def test_derivative_relations(self):
        f = Tribes(2, 6)
        rng = np.random.default_rng(0)
        for _ in range(50):
            fixed = int(rng.integers(0, 64))
            signs = int(rng.integers(0, 64)) & fixed
            r = restricted_influences_exact(f, fixed, signs)
            np.testing.assert_allclose(r["flip"], 2 * np.array(r["abs_derivative"]), atol=1e-12)
            np.testing.assert_allclose(r["spectral"], np.array(r["abs_derivative"]) / 2, atol=1e-12)

    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            monotone_restricted_influence(Parity(4), 0.5, 10, seed=0)

    def test_tail_report(self):
        r = monotone_restricted_influence(Majority(9), 0.5, 2000, seed=1)
        assert r.k_alive == 5 and 0 <= r.p_tail <= 1
        assert r.threshold == pytest.approx(r.max_influence ** (0.5 / 30))
        assert not r.monotone_checked

    def test_table_monotone_is_checked(self):
        f = TableFunction(Majority(5).table())
        assert monotone_restricted_influence(f, 0.6, 200, seed=2).monotone_checked
