import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boolrestrict import And, Constant, Dictator, Majority, Parity, PartialPoint, TableFunction, Tribes, random_table
from boolrestrict.process import (
    PiConfig,
    PreconditionError,
    controlled_many,
    default_horizon,
    default_parameters,
    endpoint_law,
    k_shape,
    kl_audit_random,
    kl_exact_direct,
    kl_exact_small_n,
    kl_ledger_audit,
    kl_to_mean,
    ledger_summary,
    mild_change_check,
    rn_check,
    rn_residuals,
    run_conditioned,
    run_controlled,
    run_uniform,
    simulate_many,
    step_distribution_q,
    stopping_stats,
    total_variation,
    uniform_on_preimage,
    verify_kl_to_mean,
    z_moments,
)


class TestUniform:
    def test_endpoint_mean(self):
        f = Majority(5)
        b = simulate_many(f, "uniform", 100_000, seed=1)
        v = b.means[:, -1]
        assert abs(v.mean() - f.mean) <= 3 * v.std() / math.sqrt(v.size)

    def test_martingale_steps(self):
        f = Tribes(2)
        path = run_uniform(f, 3)
        for t in range(1, f.n + 1):
            y = path.state(t - 1)
            i = path.pi[t - 1]
            assert (f.cond_mean(y.fix(i, 1)) + f.cond_mean(y.fix(i, -1))) / 2 == f.cond_mean(y)

    def test_parity_flat_until_end(self):
        path = run_uniform(Parity(6), 5)
        assert path.means[:-1] == [0.5] * 6
        assert path.means[-1] in (0.0, 1.0)

    def test_state_matches_means(self):
        f = Majority(5)
        path = run_uniform(f, 2)
        for t in range(6):
            assert f.cond_mean(path.state(t)) == path.means[t]


class TestStepLaw:
    def test_and2(self):
        assert step_distribution_q(And(2), PartialPoint(2), 0) == (0.0, 1.0)

    def test_parity(self):
        assert step_distribution_q(Parity(4), PartialPoint.from_ternary([1, 0, 0, 0]), 2) == (0.5, 0.5)

    def test_dictator(self):
        assert step_distribution_q(Dictator(3, 1), PartialPoint(3), 1)[1] == 1.0

    def test_errors(self):
        with pytest.raises(PreconditionError):
            step_distribution_q(And(2), PartialPoint.from_ternary([1, 0]), 1)
        with pytest.raises(ValueError):
            step_distribution_q(And(2), PartialPoint.from_ternary([1, 0]), 0)


class TestConditioned:
    def test_constant_one_matches_uniform_law(self):
        b = simulate_many(Constant(3, 1), "conditioned", 40_000, seed=1)
        assert total_variation(endpoint_law(b.endpoints(), 3), np.full(8, 1 / 8)) < 0.02

    def test_and2_endpoint(self):
        for seed in range(10):
            p = run_conditioned(And(2), seed)
            assert p.values == [-1, -1]

    def test_zero_function_rejected(self):
        with pytest.raises(PreconditionError):
            run_conditioned(Constant(3, 0), 0)

    def test_maj3_law(self):
        f = Majority(3)
        b = simulate_many(f, "conditioned", 50_000, seed=2)
        law = endpoint_law(b.endpoints(), 3)
        assert law[f.table().values == 0].sum() == 0
        assert total_variation(law, uniform_on_preimage(f)) < 0.01

    def test_rn_residuals(self):
        f = Majority(3)
        b = simulate_many(f, "conditioned", 2000, seed=3)
        assert rn_residuals(f, b.pi, b.neg).max() <= 1e-9
        for s in range(4):
            assert rn_residuals(f, b.pi, b.neg, s).max() <= 1e-9

    def test_rn_constant(self):
        f = Constant(4, 1)
        assert rn_check(f, run_conditioned(f, 1)) == 0.0

    def test_mild_change_of_measure(self):
        f = Tribes(2)

        def low(batch, t):
            return (batch.means[:, :t + 1] < 0.3).any(axis=1)

        pq, sq, pp, sp, bound = mild_change_check(f, low, 3, 20_000, seed=4)
        assert pq <= bound + 3 * sq


class TestControlled:
    def test_config_validation(self):
        with pytest.raises(PreconditionError):
            PiConfig(0.25, 0.1).check(5)
        with pytest.raises(PreconditionError):
            PiConfig(0.2, 0.0).check(5)
        PiConfig(0.2, 0.1).check(5)

    def test_zero_rejected(self):
        with pytest.raises(PreconditionError):
            run_controlled(Constant(3, 0), PiConfig(1 / 3, 0.1))

    def test_tau_definition(self):
        f = Majority(5)
        for seed in range(30):
            run = run_controlled(f, PiConfig(0.6, 0.4, seed=seed))
            assert run.tau == min(run.tau1, run.tau2, f.n + 1)
            for t, in_phase1 in enumerate(run.phase1, start=1):
                assert in_phase1 == (t <= run.tau)

    def test_tau_recomputed_from_path(self):
        f = Majority(5)
        eps, delta = 0.6, 0.4
        run = run_controlled(f, PiConfig(eps, delta, seed=7))
        viol = []
        for t in range(f.n + 1):
            y = run.y_state(t)
            g = np.abs(f.grad_batch(*y.arrays())[0]).max()
            viol.append(g > eps * delta or f.cond_mean(y) < delta)
        assert run.tau == (viol.index(True) if any(viol) else f.n + 1)

    def test_x_and_y_agree_on_uncontrolled_phase1_steps(self):
        f = Majority(5)
        for seed in range(30):
            run = run_controlled(f, PiConfig(0.6, 0.4, seed=seed))
            for t in range(1, f.n + 1):
                if t not in run.T and run.phase1[t - 1]:
                    assert run.y_values[t - 1] == run.x_values[t - 1] == run.z[t - 1]

    def test_mixture_identity(self):
        b = controlled_many(Majority(5), PiConfig(0.6, 0.4, seed=1), 20_000)
        assert np.nanmax(b.mix_residual) <= 1e-12
        assert not b.flagged.any()

    def test_equivalence_with_conditioned(self):
        f = Majority(5)
        b = controlled_many(f, PiConfig(0.6, 0.4, seed=2), 100_000)
        assert total_variation(endpoint_law(b.endpoints(), 5), uniform_on_preimage(f)) < 0.015

    def test_x_endpoint_uniform(self):
        b = controlled_many(Majority(5), PiConfig(0.6, 0.4, seed=3), 64_000)
        assert total_variation(endpoint_law(b.x_endpoints(), 5), np.full(32, 1 / 32)) < 0.02

    def test_violating_start_goes_straight_to_phase2(self):
        f = Tribes(4)
        b = controlled_many(f, PiConfig(3 / 44, 1 / 64, seed=5), 2000)
        assert np.all(b.tau == 0) and not b.phase1.any() and not b.flagged.any()

    def test_and3_start_is_conditioned(self):
        # f(0) = 1/8 < delta, so every step follows the conditioned law
        b = controlled_many(And(3), PiConfig(1 / 3, 0.2, seed=6), 500)
        assert np.all(b.neg) and not b.flagged.any()

    def test_parity_derivatives_vanish(self):
        f = Parity(6)
        b = controlled_many(f, PiConfig(0.5, 0.01, seed=4), 2000)
        assert np.all(b.tau1 >= f.n - 1)

    def test_complement_target(self):
        f = Majority(5)
        run = run_controlled(f, PiConfig(0.6, 0.4, target="complement", seed=1))
        assert run.means[-1] == 1.0
        x = sum(1 << i for i, v in zip(run.pi, run.y_values) if v == -1)
        assert int(f.table().values[x]) == 0

    def test_to_dict_paths(self):
        run = run_controlled(Majority(3), PiConfig(2 / 3, 0.4, seed=0))
        d = run.to_dict(emit_path=True)
        assert len(d["y_path"]) == 4 and d["y_path"][0] == [0, 0, 0]
        assert all(v != 0 for v in d["y_endpoint"])


class TestStopping:
    def test_constant_rejected(self):
        with pytest.raises(PreconditionError):
            stopping_stats(Constant(4, 1), PiConfig(0.25, 0.1), 100)

    def test_report_fields(self):
        st_ = stopping_stats(Majority(5), PiConfig(0.6, 0.4, seed=1), 2000)
        assert 0 <= st_.p_early <= 1
        assert st_.bound == pytest.approx(3 * 0.4 / 0.5)
        assert set(st_.preconditions) >= {"eps_condition", "delta_condition"}


class TestDefaults:
    def test_eps_example(self):
        f = TableFunction(random_table(10, 1))
        p = default_parameters(0.3, 1.0, f)
        assert p.epsilon == pytest.approx(0.1)

    def test_delta_example(self):
        p = default_parameters(1.0, 1.0, Parity(9))
        assert p.delta == 1 / 32

    def test_no_valid_eps(self):
        with pytest.raises(PreconditionError):
            default_parameters(0.2, 0.5, Majority(11))

    def test_tribes_side_condition_reported(self):
        f = Tribes(4)
        p = default_parameters(1 / 4, 0.5, f)
        assert p.epsilon == pytest.approx(3 / 44)
        assert isinstance(p.eps_condition, bool)
        assert p.eps_condition == (p.eps_condition_lhs <= p.eps_condition_rhs)

    def test_k_shape_positive(self):
        assert k_shape(0.1, 0.01) > 0


class TestLedger:
    def test_empty_control_set(self):
        f = Majority(5)
        for seed in range(200):
            run = run_controlled(f, PiConfig(0.2, 0.01, seed=seed))
            a = kl_ledger_audit(run)
            if not [t for t in run.T if t < a.tau_prime]:
                assert a.sum_Z == 0 and a.sum_step_kl == 0
                assert a.kl_path_bound == a.terminal_kl
                return
        pytest.fail("no run without active control found")

    def test_entry_bounds(self):
        f = Majority(5)
        for seed in range(100):
            run = run_controlled(f, PiConfig(0.6, 0.4, seed=seed))
            a = kl_ledger_audit(run, 3)
            assert a.z_bounded and a.entropy_bounded
            assert a.terminal_kl == math.log2(1 / run.means[min(run.tau, 3)])

    def test_summary(self):
        b = controlled_many(Majority(5), PiConfig(0.6, 0.4, seed=5), 5000)
        s = ledger_summary(b, 0.6, 0.4)
        assert s["z_bounded_violations"] == 0 and s["entropy_bound_violations"] == 0

    def test_m_range(self):
        run = run_controlled(Majority(3), PiConfig(2 / 3, 0.4))
        with pytest.raises(ValueError):
            kl_ledger_audit(run, 4)

    @pytest.mark.parametrize("m", [0, 1, 2, 3])
    def test_bhatia_davis(self, m):
        f = Majority(5)
        eps = 0.6
        rng = np.random.default_rng(m)
        for _ in range(20):
            k = int(rng.integers(0, 5))
            fixed = sum(1 << int(i) for i in rng.choice(5, size=k, replace=False))
            y = PartialPoint(5, fixed, int(rng.integers(0, 32)) & fixed)
            if f.cond_mean(y) == 0:
                with pytest.raises(PreconditionError):
                    z_moments(f, y, eps)
                continue
            ez, vz, mx = z_moments(f, y, eps)
            if mx <= eps ** 2:
                assert vz <= eps ** 2 * ez + 1e-15


class TestExactKL:
    def test_constant(self):
        r = kl_exact_small_n(Constant(3, 1), [0, 1, 2], [1], [1, 1, 1], 2, 1 / 3, 0.1)
        assert r.kl == 0.0

    def test_and2(self):
        r = kl_exact_small_n(And(2), [0, 1], [], [1, 1], 0, 0.5, 0.1)
        assert r.kl == pytest.approx(2.0)
        assert r.law == {3: pytest.approx(1.0)}

    @given(st.integers(0, 2 ** 31), st.integers(0, 3))
    def test_chain_rule(self, seed, m):
        rng = np.random.default_rng(seed)
        f = Majority(3)
        pi = rng.permutation(3)
        T = [t for t in range(1, m + 1) if rng.random() < 2 / 3]
        z = [int(v) for v in rng.choice([-1, 1], 3)]
        r = kl_exact_small_n(f, pi, T, z, m, 2 / 3, 0.4)
        assert abs(r.kl - r.decomposition) <= 1e-9
        assert abs(r.kl - kl_exact_direct(r, f, pi, T, z, m, 2 / 3, 0.4)) <= 1e-9
        assert sum(r.law.values()) == pytest.approx(1.0)

    @pytest.mark.parametrize("T", [[], [1], [1, 2]])
    def test_violating_start(self, T):
        f = And(3)
        r = kl_exact_small_n(f, [0, 1, 2], T, [1, 1, 1], 2, 1 / 3, 0.2)
        assert abs(r.kl - r.decomposition) <= 1e-9
        assert abs(r.kl - kl_exact_direct(r, f, [0, 1, 2], T, [1, 1, 1], 2, 1 / 3, 0.2)) <= 1e-9

    def test_random_audit(self):
        res = kl_audit_random(TableFunction(random_table(6, 2, 0.6)), 0.5, 0.01, 3, 10, seed=1)
        assert res["max_chain_rule_gap"] <= 1e-9

    def test_cap(self):
        with pytest.raises(ValueError):
            kl_exact_small_n(Majority(3), [0, 1, 2], [], [1, 1, 1], 0, 1 / 3, 0.1, max_free=2)

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            kl_exact_small_n(Majority(3), [0, 0, 2], [], [1, 1, 1], 0, 1 / 3, 0.1)


class TestKLToMean:
    def test_examples(self):
        assert kl_to_mean(0, 1) == 1.0
        assert kl_to_mean(1, 0.5) == pytest.approx(1 / 16)

    def test_errors(self):
        with pytest.raises(PreconditionError):
            kl_to_mean(1, 0)
        with pytest.raises(PreconditionError):
            kl_to_mean(-1, 0.5)

    def test_point_mass(self):
        v = np.zeros(8)
        v[3] = 1
        gamma = v.copy()
        holds, mu, bound, _ = verify_kl_to_mean(v, gamma)
        assert holds and mu == 1 / 8 and bound == pytest.approx(1 / 8)

    @given(st.integers(1, 6), st.integers(0, 2 ** 31))
    def test_random_pairs(self, n, seed):
        rng = np.random.default_rng(seed)
        v = (rng.random(1 << n) < rng.random()).astype(float)
        gamma = rng.dirichlet(np.full(1 << n, rng.uniform(0.05, 2)))
        assert verify_kl_to_mean(v, gamma)[0]


def test_default_horizon():
    assert default_horizon(10, 0.3) == 7
