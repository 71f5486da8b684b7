"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; each line is written straight to
the terminal, so it appears even under output capture.
"""
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from boolrestrict import (
    And,
    Majority,
    Parity,
    TableFunction,
    Tribes,
    influence_flip_counts,
    inverse_wht,
    parseval_residual,
    random_table,
    wht,
    wht_unnormalized,
)
from boolrestrict.cli import run as cli_run
from boolrestrict.core.fourier import influence_spectral_exact
from boolrestrict.hyperc import (
    beta_tail,
    boolean_functions,
    discrete_beta_tail,
    hc_sweep,
    random_functions,
)
from boolrestrict.measures import bs_exact, bs_partition_estimate, dt_exact, osss_sweep
from boolrestrict.process import (
    PiConfig,
    controlled_many,
    default_parameters,
    endpoint_law,
    kl_audit_random,
    kl_ledger_audit,
    ledger_summary,
    rn_residuals,
    run_controlled,
    simulate_many,
    stopping_stats,
    total_variation,
    uniform_on_preimage,
    verify_kl_to_mean,
)
from boolrestrict.restriction import scan, tribes_survival_formula, tribes_survival_mc

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return _report


def test_c01_fourier_identities(report):
    rng = np.random.default_rng(101)
    exact, worst = True, 0.0
    for k in range(100):
        n = int(rng.integers(1, 13))
        t = random_table(n, 1000 + k, float(rng.uniform(0.05, 0.95)))
        exact &= inverse_wht(wht(t)) == t
        w = wht_unnormalized(t.values.astype(np.int64), n)
        exact &= np.array_equal(wht_unnormalized(w, n), t.values.astype(np.int64) << n)
        worst = max(worst, parseval_residual(t))
    report(1, exact and worst <= 1e-10, f"round trip exact={exact}, max Parseval residual={worst:.2e}")


def test_c02_influence_bridge(report):
    fs = [Majority(3), Majority(9), Tribes(2), Tribes(3, 9), Parity(7), And(5)]
    fs += [TableFunction(random_table(int(n), s)) for s, n in enumerate(np.random.default_rng(102).integers(1, 11, 40))]
    ok = True
    for f in fs:
        t = f.table()
        counts = influence_flip_counts(t)
        for i in range(f.n):
            ok &= Fraction(counts[i], 1 << f.n) == 4 * influence_spectral_exact(t, i)
    maj3 = [Fraction(c, 8) for c in influence_flip_counts(Majority(3).table())]
    ok3 = maj3 == [Fraction(1, 2)] * 3
    report(2, ok and ok3, f"flip = 4 spectral on {len(fs)} functions: {ok}; MAJ3 flip = {[str(v) for v in maj3]}")


def _brute_means(values, n, fixed, neg):
    idx = np.arange(1 << n)
    fm = (fixed * (1 << np.arange(n))).sum(axis=1)
    sm = (neg * (1 << np.arange(n))).sum(axis=1)
    return np.array([values[(idx & a) == b].mean() for a, b in zip(fm, sm)])


def test_c03_closed_forms(report):
    rng = np.random.default_rng(103)
    mism = 0
    fs = [Tribes(3, 12), Tribes(4, 12), Tribes(2, 10), Majority(11), Majority(9)]
    for f in fs:
        N = 2000
        fixed = rng.random((N, f.n)) < rng.random((N, 1))
        neg = fixed & (rng.random((N, f.n)) < 0.5)
        closed = f.mean_batch(fixed, neg)
        brute = _brute_means(f.table().values.astype(np.float64), f.n, fixed, neg)
        mism += int((closed != brute).sum())
    report(3, mism == 0, f"{len(fs) * 2000} partial points, exact mismatches={mism}")


def test_c04_conditioned_law(report):
    tvs, worst = [], 0.0
    for k, f in enumerate([Majority(3), Tribes(2)]):
        b = simulate_many(f, "conditioned", 200_000, seed=40 + k, track_grad=False)
        tvs.append(total_variation(endpoint_law(b.endpoints(), f.n), uniform_on_preimage(f)))
        worst = max(worst, float(rn_residuals(f, b.pi[:10_000], b.neg[:10_000]).max()))
    ok = max(tvs) <= 0.01 and worst <= 1e-9
    report(4, ok, f"TV MAJ3={tvs[0]:.4f}, tribes(2)={tvs[1]:.4f}; max RN residual={worst:.1e}")


def test_c05_controlled_equivalence(report):
    parts, ok = [], True
    for k, (f, eps, delta) in enumerate([(Majority(3), 2 / 3, 0.4), (Majority(5), 0.6, 0.4)]):
        b = controlled_many(f, PiConfig(eps, delta, seed=50 + k), 200_000)
        q = simulate_many(f, "conditioned", 200_000, seed=60 + k, track_grad=False)
        keep = ~b.flagged
        mix = float(np.nanmax(np.where(keep[:, None], b.mix_residual, np.nan)))
        tv = total_variation(endpoint_law(b.endpoints()[keep], f.n), endpoint_law(q.endpoints(), f.n))
        phase1 = float(b.phase1.mean())
        ok &= mix <= 1e-12 and tv <= 0.01
        parts.append(f"{f.name}: mix={mix:.1e} TV={tv:.4f} phase-1 share={phase1:.2f}")
    f7 = Majority(7)
    p = default_parameters(1.0, 0.5, f7)
    b7 = controlled_many(f7, PiConfig(p.epsilon, p.delta, seed=55), 20_000)
    flag = float(b7.flagged.mean())
    ok &= flag < 0.01
    parts.append(f"MAJ7 default flagged={flag:.4f}")
    report(5, ok, "; ".join(parts))


def test_c06_stopping_tail(report):
    parts, ok = [], True
    for f, rho in [(Tribes(4), 1 / 4), (Majority(25), 0.2)]:
        p = default_parameters(rho, 0.5, f)
        st = stopping_stats(f, PiConfig(p.epsilon, p.delta, seed=6), 10_000)
        ok &= st.holds
        parts.append(f"{f.name}: P[tau<=(1-eps)n]={st.p_early:.4f}+-{st.p_early_se:.4f} "
                     f"vs 3delta/f(0)={st.bound:.4f} (eps={p.epsilon:.4f}, delta={p.delta:.5f}, "
                     f"side conditions {p.eps_condition}/{p.delta_condition})")
    report(6, ok, "; ".join(parts))


def test_c07_kl_audit(report):
    gaps, ok = [], True
    for k, (f, eps, delta, m) in enumerate([(Majority(5), 0.6, 0.4, 2), (Tribes(2), 0.5, 0.3, 3)]):
        r = kl_audit_random(f, eps, delta, m, 50, seed=70 + k)
        gaps.append(r["max_chain_rule_gap"])
        b = controlled_many(f, PiConfig(eps, delta, seed=72 + k), 10_000)
        s = ledger_summary(b, eps, delta, m)
        ok &= s["z_bounded_violations"] == 0 and s["entropy_bound_violations"] == 0
        for seed in range(200):
            run = run_controlled(f, PiConfig(eps, delta, seed=seed))
            a = kl_ledger_audit(run, m)
            y = run.y_state(a.tau_prime - 1)
            ok &= a.terminal_kl == math.log2(1 / f.cond_mean(y))
    ok &= max(gaps) <= 1e-9
    report(7, ok, f"100 instances, max chain-rule gap={max(gaps):.1e}; ledger and terminal checks={ok}")


def test_c08_kl_to_mean(report):
    rng = np.random.default_rng(108)
    bad = special = special_bad = 0
    for k in range(1000):
        n = int(rng.integers(1, 7))
        v = (rng.random(1 << n) < rng.random()).astype(float)
        if k % 4 == 0 and v.any():
            # gamma supported on f^-1(1): gamma(f) = 1
            gamma = np.where(v > 0, rng.random(1 << n), 0.0)
            gamma /= gamma.sum()
            holds, mu, bound, _ = verify_kl_to_mean(v, gamma, delta=1.0)
            special += int(bound > 0)  # premise met, not vacuous
            special_bad += int(not holds)
        else:
            gamma = rng.dirichlet(np.full(1 << n, rng.uniform(0.05, 2)))
            holds = verify_kl_to_mean(v, gamma)[0]
        bad += int(not holds)
    report(8, bad == 0, f"violations={bad}; gamma(f)=1 cases checked={special}, violations={special_bad}")


def test_c09_tribes_survival(report):
    parts, ok = [], True
    for w in (4, 5):
        f = Tribes(w)
        p, se = tribes_survival_mc(w, f.n, 100_000, seed=90 + w)
        exact = tribes_survival_formula(w, f.n)
        ok &= abs(p - exact) <= 3 * se
        parts.append(f"w={w}: MC={p:.5f}+-{se:.5f} formula={exact:.5f}")
    report(9, ok, "; ".join(parts))


def test_c10_phase_transition(report):
    w = 5
    hi, lo = scan(Tribes(w), [2 / w, 1 / (4 * w)], 10_000, seed=10)
    gap = (1 - hi.p_constant) - (1 - lo.p_constant)
    report(10, gap >= 0.2, f"P[nonconstant] rho=2/w: {1 - hi.p_constant:.4f}, rho=1/(4w): "
                           f"{1 - lo.p_constant:.4f}, gap={gap:.4f}")


def test_c11_hypercontractivity(report):
    a = hc_sweep(boolean_functions(3), step=0.1)
    b = hc_sweep(random_functions(1000, 8, seed=11), step=0.1)
    mm = min(a.min_margin, b.min_margin)
    ps = min(a.min_gradient_slack, b.min_gradient_slack)
    ok = a.functions == 256 and b.functions == 1000 and mm >= -1e-9 and ps >= -1e-9
    report(11, ok, f"{a.functions}+{b.functions} functions x {a.pairs} pairs, min margin={mm:.2e}, "
                   f"min gradient slack={ps:.2e}")


def test_c12_beta_tails(report):
    parts, ok = [], True
    for k, f in enumerate([Tribes(4), Majority(25)]):
        for t, theta in [(0.5, 0.3), (0.9, 0.5)]:
            r = beta_tail(f, t, theta, 10_000, seed=120 + k)
            ok &= r.within_bound
            parts.append(f"{f.name} t={t} th={theta}: {r.p_tail:.3f}<= {r.bound:.3f}")
        for eps, theta in [(0.5, 0.3), (0.25, 0.5)]:
            r = discrete_beta_tail(f, eps, theta, 10_000, seed=125 + k)
            ok &= r.within_bound
            parts.append(f"{f.name} eps={eps} th={theta}: {r.p_tail:.3f}<= {r.bound:.3f}")
    report(12, ok, "; ".join(parts))


def test_c13_complexity(report):
    ok_dt = all(dt_exact(Parity(n)) == n for n in range(1, 9)) and dt_exact(Majority(3)) == 3
    sw = osss_sweep(4)
    ok_bs = all(bs_exact(Parity(n), x)[0] == n for n in range(1, 7) for x in range(1 << n))
    ok_and = True
    for n in range(2, 9):
        f = And(n)
        ok_and &= bs_exact(f, (1 << n) - 1)[0] == n
        ok_and &= bs_exact(f, (1 << n) - 1 - 0b11)[0] == 1
    est = bs_partition_estimate(Tribes(4), 8, 5000, seed=13)
    ok = ok_dt and sw.dt_memo_equals_naive and sw.osss_flip_violations == 0 and ok_bs and ok_and \
        and est.double_count_holds
    report(13, ok, f"DT={ok_dt}, memo=naive={sw.dt_memo_equals_naive}, OSSS flip violations="
                   f"{sw.osss_flip_violations}/{sw.functions} (spectral {sw.osss_spectral_violations}), "
                   f"bs parity={ok_bs}, AND cases={ok_and}, double count "
                   f"{est.p_low / 2:.4f}<= {est.p_constant:.4f}+3*{est.p_constant_se:.4f}")


CLI_RUNS = [
    ["analyze", "--fn", "tribes:w=3"],
    ["level1", "--fn", "maj:n=9"],
    ["restrict-scan", "--fn", "tribes:w=3", "--rho", "0.25,0.5", "--trials", "5000"],
    ["pi-run", "--fn", "maj:n=7", "--emit-path"],
    ["pi-stats", "--fn", "maj:n=5", "--eps", "0.6", "--delta", "0.4", "--trials", "5000"],
    ["kl-audit", "--fn", "maj:n=5", "--eps", "0.6", "--delta", "0.4", "--trials", "10", "--exhaustive"],
    ["bs", "--fn", "tribes:w=2", "--x", "random", "--exact"],
    ["dt", "--fn", "maj:n=7"],
    ["osss", "--fn", "tribes:w=2"],
    ["hc-check", "--n", "4", "--trials", "20"],
    ["prop51", "--fn", "maj:n=5"],
    ["beta-tail", "--fn", "maj:n=9", "--theta", "0.3", "--trials", "2000"],
]


def test_c14_determinism(report):
    def payload(argv):
        out = io.StringIO()
        code = cli_run(argv + ["--seed", "14"], stdout=out)
        recs = [json.loads(line) for line in out.getvalue().splitlines()]
        for r in recs:
            r.pop("wall_time_s")
        return code, json.dumps(recs, sort_keys=True)

    same = []
    for argv in CLI_RUNS:
        (c1, p1), (c2, p2) = payload(argv), payload(argv)
        same.append(c1 == c2 == 0 and p1 == p2)
    bad = [a[0] for a, s in zip(CLI_RUNS, same) if not s]
    report(14, not bad, f"{len(CLI_RUNS)} subcommands, mismatches={bad}")
