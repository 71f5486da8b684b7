"""Revelation processes on the cube.

* uniform: reveal coordinates in a random order with fair signs;
* conditioned: the uniform process conditioned on ending in f^{-1}(1), realised
  step by step with P[Y_i = +-1] = 1/2 +- d_i f(Y) / (2 f(Y));
* controlled: a fair environment plus a player who sets an eps-fraction of the
  steps with P[+-1] = 1/2 +- d_i f / (2 eps f), switching to the conditioned law
  once the breaking condition ``max_i |d_i f(Y)| > eps*delta or f(Y) < delta``
  is met.

Time runs t = 1..n (state Y(t) after step t, Y(0) all alive); coordinates are
0-based. All simulators are vectorised over independent runs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .core.analytic import binary_entropy, kl_bits
from .core.functions import BooleanFunction, Complement
from .core.points import PartialPoint, bits_to_index
from .rng import map_blocks, proportion

PROB_TOL = 1e-12


class PreconditionError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class PiConfig:
    epsilon: float
    delta: float
    target: str = "f"
    seed: int = 0

    def check(self, n: int) -> None:
        if not 0 < self.epsilon < 1:
            raise PreconditionError(f"epsilon={self.epsilon} must lie in (0, 1)")
        if abs(self.epsilon * n - round(self.epsilon * n)) > 1e-9:
            raise PreconditionError(f"epsilon*n = {self.epsilon * n} is not an integer")
        if self.delta <= 0:
            raise PreconditionError("delta must be positive")
        if self.target not in ("f", "complement"):
            raise PreconditionError("target must be 'f' or 'complement'")


def target_function(f: BooleanFunction, cfg: PiConfig) -> BooleanFunction:
    return f if cfg.target == "f" else Complement(f)


# ---------------------------------------------------------------------------
# batch simulation


@dataclass
class Batch:
    """Arrays describing R runs of a process (time index t-1 for step t)."""

    mode: str
    n: int
    pi: np.ndarray            # (R, n) coordinate revealed at step t
    neg: np.ndarray           # (R, n) final Y value per coordinate is -1
    x_neg: np.ndarray         # (R, n) final X value per coordinate is -1
    means: np.ndarray         # (R, n+1) f(Y(t))
    ratio: np.ndarray         # (R, n) d_{pi(t)} f(Y(t-1)) / f(Y(t-1))
    gmax: np.ndarray | None = None   # (R, n+1) max_i |d_i f(Y(t))|
    gmax_alive: np.ndarray | None = None
    ctrl: np.ndarray | None = None   # (R, n) t in T
    phase1: np.ndarray | None = None  # (R, n) step t taken under the phase-1 law
    z_neg: np.ndarray | None = None  # (R, n) environment sign at time t
    tau: np.ndarray | None = None
    tau1: np.ndarray | None = None
    tau2: np.ndarray | None = None
    p_ctrl: np.ndarray | None = None  # (R, n) player's P[+1] at controlled phase-1 steps (nan elsewhere)
    mix_residual: np.ndarray | None = None  # (R, n)
    flagged: np.ndarray | None = None  # (R,)

    @property
    def size(self) -> int:
        return self.pi.shape[0]

    def endpoints(self) -> np.ndarray:
        return bits_to_index(self.neg)

    def x_endpoints(self) -> np.ndarray:
        return bits_to_index(self.x_neg)

    @staticmethod
    def concat(parts: list["Batch"]) -> "Batch":
        first = parts[0]
        kw = {}
        for name in first.__dataclass_fields__:
            v = getattr(first, name)
            if isinstance(v, np.ndarray):
                kw[name] = np.concatenate([getattr(p, name) for p in parts])
            else:
                kw[name] = v
        return Batch(**kw)


def _violates(means, gmax, eps, delta):
    return (gmax > eps * delta) | (means < delta)


def simulate(f: BooleanFunction, mode: str, size: int, rng: np.random.Generator,
             eps: float | None = None, delta: float | None = None, track_grad: bool = True) -> Batch:
    """Vectorised simulation of ``size`` runs of one of the three processes."""
    n = f.n
    if mode not in ("uniform", "conditioned", "controlled"):
        raise ValueError(f"unknown process {mode!r}")
    pi = np.argsort(rng.random((size, n)), axis=1)
    u = rng.random((size, n))
    rows = np.arange(size)
    fixed = np.zeros((size, n), dtype=bool)
    neg = np.zeros((size, n), dtype=bool)
    x_neg = np.zeros((size, n), dtype=bool)
    means = np.empty((size, n + 1))
    ratio = np.full((size, n), np.nan)
    need_grad = track_grad or mode != "uniform"
    gmax = np.empty((size, n + 1)) if need_grad else None
    gmax_alive = np.empty((size, n + 1)) if need_grad else None

    ctrl = phase1 = z_neg = p_ctrl = mix = flagged = None
    tau = tau1 = tau2 = None
    if mode == "controlled":
        ctrl = rng.random((size, n)) < eps
        z_neg = rng.random((size, n)) < 0.5
        xu = rng.random((size, n)) < 0.5
        phase1 = np.zeros((size, n), dtype=bool)
        p_ctrl = np.full((size, n), np.nan)
        mix = np.full((size, n), np.nan)
        flagged = np.zeros(size, dtype=bool)
        tau1 = np.full(size, n + 1)
        tau2 = np.full(size, n + 1)

    m = f.mean_batch(fixed, neg)
    means[:, 0] = m
    if mode == "conditioned" and np.any(m <= 0):
        raise PreconditionError("f is identically 0; the conditioned process is undefined")
    if need_grad:
        g = f.grad_batch(fixed, neg)
        ag = np.abs(g)
        gmax[:, 0] = ag.max(axis=1, initial=0.0)
        gmax_alive[:, 0] = np.where(~fixed, ag, 0.0).max(axis=1, initial=0.0)
    if mode == "controlled":
        if np.any(m <= 0):
            raise PreconditionError("f is identically 0; the controlled process is undefined")
        # Y(0) is a state of the process too, so tau may be 0
        live = ~_violates(m, gmax[:, 0], eps, delta)
        tau1[gmax[:, 0] > eps * delta] = 0
        tau2[m < delta] = 0

    for t in range(1, n + 1):
        i = pi[:, t - 1]
        if need_grad:
            d = g[rows, i]
            with np.errstate(divide="ignore", invalid="ignore"):
                r = d / m
            ratio[:, t - 1] = r
        if mode == "uniform":
            yneg = u[:, t - 1] < 0.5
            xneg = yneg
        elif mode == "conditioned":
            p_plus = 0.5 + r / 2
            _check_prob(p_plus)
            yneg = u[:, t - 1] >= p_plus
            xneg = yneg
        else:
            c = ctrl[:, t - 1]
            p1 = live
            phase1[:, t - 1] = p1
            p_q = 0.5 + r / 2
            p_c = 0.5 + r / (2 * eps)
            # guard: the condition at Y(t-1) keeps p_c in [0, 1]
            bad = p1 & ((p_c < -PROB_TOL) | (p_c > 1 + PROB_TOL))
            flagged |= bad
            p_c = np.clip(p_c, 0.0, 1.0)
            sel = p1 & c
            p_ctrl[sel, t - 1] = p_c[sel]
            mix[sel, t - 1] = np.abs((1 - eps) / 2 + eps * p_c[sel] - p_q[sel])
            mix[p1 & ~c, t - 1] = np.abs((1 - eps) / 2 + eps * np.clip(p_c[p1 & ~c], 0, 1) - p_q[p1 & ~c])
            _check_prob(p_q[~p1])
            p_plus = np.where(p1, p_c, p_q)
            yneg = np.where(p1 & ~c, z_neg[:, t - 1], u[:, t - 1] >= p_plus)
            xneg = np.where(p1 & ~c, z_neg[:, t - 1], xu[:, t - 1])
        fixed[rows, i] = True
        neg[rows, i] = yneg
        x_neg[rows, i] = xneg
        m = f.mean_batch(fixed, neg)
        means[:, t] = m
        if need_grad:
            g = f.grad_batch(fixed, neg)
            ag = np.abs(g)
            gmax[:, t] = ag.max(axis=1, initial=0.0)
            gmax_alive[:, t] = np.where(~fixed, ag, 0.0).max(axis=1, initial=0.0)
        if mode == "controlled":
            hit1 = (gmax[:, t] > eps * delta) & (tau1 == n + 1)
            hit2 = (m < delta) & (tau2 == n + 1)
            tau1[hit1] = t
            tau2[hit2] = t
            live = live & ~_violates(m, gmax[:, t], eps, delta)

    if mode == "controlled":
        tau = np.minimum(np.minimum(tau1, tau2), n + 1)
    return Batch(mode=mode, n=n, pi=pi, neg=neg, x_neg=x_neg, means=means, ratio=ratio,
                 gmax=gmax, gmax_alive=gmax_alive, ctrl=ctrl, phase1=phase1, z_neg=z_neg,
                 tau=tau, tau1=tau1, tau2=tau2, p_ctrl=p_ctrl, mix_residual=mix, flagged=flagged)


def _check_prob(p):
    p = np.asarray(p)
    bad = (p < -PROB_TOL) | (p > 1 + PROB_TOL)
    if np.any(bad):
        raise InvariantViolation(f"step probability outside [0, 1]: {p[bad][:3]}")


def _batch_block(f, mode, eps, delta, track_grad, rng, size):
    return simulate(f, mode, size, rng, eps=eps, delta=delta, track_grad=track_grad)


def simulate_many(f: BooleanFunction, mode: str, trials: int, seed: int, eps=None, delta=None,
                  track_grad: bool = True, tag: int = 0, workers: int = 1) -> Batch:
    parts = map_blocks(partial(_batch_block, f, mode, eps, delta, track_grad), trials, seed,
                       tag=tag, workers=workers)
    return Batch.concat(parts)


# ---------------------------------------------------------------------------
# single runs


@dataclass
class Path:
    """One run of the uniform or conditioned process."""

    n: int
    pi: list[int]
    values: list[int]          # +-1 assigned at step t (to coordinate pi[t-1])
    means: list[float]         # f(Y(t)), t = 0..n

    def state(self, t: int) -> PartialPoint:
        fixed = signs = 0
        for i, v in zip(self.pi[:t], self.values[:t]):
            fixed |= 1 << i
            if v == -1:
                signs |= 1 << i
        return PartialPoint(self.n, fixed, signs)


def _path_from_batch(b: Batch, row: int = 0) -> Path:
    pi = [int(i) for i in b.pi[row]]
    vals = [-1 if b.neg[row, i] else 1 for i in pi]
    return Path(b.n, pi, vals, [float(v) for v in b.means[row]])


def run_uniform(f: BooleanFunction, seed: int) -> Path:
    return _path_from_batch(simulate(f, "uniform", 1, np.random.default_rng(seed)))


def run_conditioned(f: BooleanFunction, seed: int) -> Path:
    return _path_from_batch(simulate(f, "conditioned", 1, np.random.default_rng(seed)))


def step_distribution_q(f: BooleanFunction, y: PartialPoint, i: int) -> tuple[float, float]:
    """Conditioned-process law of the sign given to alive coordinate i at state y."""
    if not y.is_alive(i):
        raise ValueError(f"coordinate {i} is already fixed")
    m = f.cond_mean(y)
    if m <= 0:
        raise PreconditionError("f(y) = 0: the conditioned process is undefined here")
    d = f.partial_derivative(i, y)
    p_plus = 0.5 + d / (2 * m)
    p_minus = 0.5 - d / (2 * m)
    _check_prob(np.array([p_plus, p_minus]))
    return p_plus, p_minus


def rn_residuals(f: BooleanFunction, pi: np.ndarray, neg: np.ndarray, s: int | None = None) -> np.ndarray:
    """|prod_{t<=s} (1 + y_{pi(t)} d f(y(t-1)) / f(y(t-1))) - f(y(s)) / f(0)| per run.

    Recomputes every prefix state from (pi, endpoint) so it is independent of
    the simulator's bookkeeping.
    """
    pi = np.atleast_2d(pi)
    neg = np.atleast_2d(neg)
    size, n = pi.shape
    s = n if s is None else s
    rows = np.arange(size)
    fixed = np.zeros((size, n), dtype=bool)
    cur = np.zeros((size, n), dtype=bool)
    m0 = f.mean_batch(fixed, cur)
    prod = np.ones(size)
    m = m0
    for t in range(1, s + 1):
        i = pi[:, t - 1]
        d = f.grad_batch(fixed, cur)[rows, i]
        y = np.where(neg[rows, i], -1.0, 1.0)
        prod *= 1 + y * d / m
        fixed[rows, i] = True
        cur[rows, i] = neg[rows, i]
        m = f.mean_batch(fixed, cur)
    return np.abs(prod - m / m0)


def rn_check(f: BooleanFunction, path: Path, s: int | None = None) -> float:
    neg = np.zeros(f.n, dtype=bool)
    for i, v in zip(path.pi, path.values):
        neg[i] = v == -1
    return float(rn_residuals(f, np.array(path.pi)[None, :], neg[None, :], s)[0])


# ---------------------------------------------------------------------------
# controlled process


@dataclass(frozen=True)
class KLLedgerEntry:
    t: int
    controlled: bool
    ratio: float
    step_kl: float
    Z: float


@dataclass
class PiRun:
    n: int
    epsilon: float
    delta: float
    pi: list[int]
    T: list[int]                 # controlled times (1-based)
    z: list[int]                 # environment sign at each time (meaningful for t not in T)
    y_values: list[int]          # sign given to pi[t-1] in Y
    x_values: list[int]          # sign given to pi[t-1] in X
    means: list[float]           # f(Y(t)), t = 0..n
    ratios: list[float]          # d_{pi(t)} f(Y(t-1)) / f(Y(t-1))
    phase1: list[bool]
    tau: int
    tau1: int
    tau2: int
    flagged: bool
    mix_residual: float          # largest phase-1 mixture-identity residual
    seed: int = 0
    target: str = "f"

    def _state(self, values, t):
        fixed = signs = 0
        for i, v in zip(self.pi[:t], values[:t]):
            fixed |= 1 << i
            if v == -1:
                signs |= 1 << i
        return PartialPoint(self.n, fixed, signs)

    def y_state(self, t: int) -> PartialPoint:
        return self._state(self.y_values, t)

    def x_state(self, t: int) -> PartialPoint:
        return self._state(self.x_values, t)

    def tau_prime(self, m: int) -> int:
        # the breaking step is itself a phase-1 step, so it belongs to the ledger
        return min(self.tau, m) + 1

    def ledger(self, m: int | None = None) -> list[KLLedgerEntry]:
        m = default_horizon(self.n, self.epsilon) if m is None else m
        tp = self.tau_prime(m)
        T = set(self.T)
        out = []
        for t in range(1, self.n + 1):
            c = t in T
            r = self.ratios[t - 1]
            active = c and t < tp
            pc = min(max(0.5 + r / (2 * self.epsilon), 0.0), 1.0)
            step_kl = float(1 - binary_entropy(pc)) if active else 0.0
            out.append(KLLedgerEntry(t, c, r, step_kl, r * r if active else 0.0))
        return out

    def terminal_kl(self, m: int | None = None) -> float:
        m = default_horizon(self.n, self.epsilon) if m is None else m
        return math.log2(1 / self.means[self.tau_prime(m) - 1])

    def to_dict(self, emit_path: bool = False) -> dict:
        d = {
            "n": self.n, "epsilon": self.epsilon, "delta": self.delta, "seed": self.seed,
            "target": self.target, "tau": self.tau, "tau1": self.tau1, "tau2": self.tau2,
            "flagged": self.flagged, "mix_residual": self.mix_residual,
            "pi": self.pi, "T": self.T, "z": self.z,
            "y_endpoint": list(self.y_state(self.n).ternary()),
            "x_endpoint": list(self.x_state(self.n).ternary()),
            "f_y_endpoint": self.means[-1],
        }
        if emit_path:
            d["y_path"] = [list(self.y_state(t).ternary()) for t in range(self.n + 1)]
            d["x_path"] = [list(self.x_state(t).ternary()) for t in range(self.n + 1)]
            d["means"] = self.means
            d["ratios"] = self.ratios
            d["phase1"] = self.phase1
        return d


def default_horizon(n: int, eps: float) -> int:
    return int(round((1 - eps) * n))


def _pirun_from_batch(b: Batch, eps, delta, seed, target, row=0) -> PiRun:
    pi = [int(i) for i in b.pi[row]]
    mix = b.mix_residual[row]
    return PiRun(
        n=b.n, epsilon=eps, delta=delta, pi=pi,
        T=[t + 1 for t in range(b.n) if b.ctrl[row, t]],
        z=[-1 if v else 1 for v in b.z_neg[row]],
        y_values=[-1 if b.neg[row, i] else 1 for i in pi],
        x_values=[-1 if b.x_neg[row, i] else 1 for i in pi],
        means=[float(v) for v in b.means[row]],
        ratios=[float(v) for v in b.ratio[row]],
        phase1=[bool(v) for v in b.phase1[row]],
        tau=int(b.tau[row]), tau1=int(b.tau1[row]), tau2=int(b.tau2[row]),
        flagged=bool(b.flagged[row]),
        mix_residual=float(np.nanmax(mix)) if np.any(~np.isnan(mix)) else 0.0,
        seed=seed, target=target,
    )


def run_controlled(f: BooleanFunction, cfg: PiConfig) -> PiRun:
    cfg.check(f.n)
    g = target_function(f, cfg)
    b = simulate(g, "controlled", 1, np.random.default_rng(cfg.seed), eps=cfg.epsilon, delta=cfg.delta)
    return _pirun_from_batch(b, cfg.epsilon, cfg.delta, cfg.seed, cfg.target)


def controlled_many(f: BooleanFunction, cfg: PiConfig, trials: int, workers: int = 1) -> Batch:
    cfg.check(f.n)
    g = target_function(f, cfg)
    return simulate_many(g, "controlled", trials, cfg.seed, eps=cfg.epsilon, delta=cfg.delta, workers=workers)


# ---------------------------------------------------------------------------
# endpoint laws


def endpoint_law(indices: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(indices, minlength=1 << n) / indices.size


def uniform_on_preimage(f: BooleanFunction) -> np.ndarray:
    v = f.table().values.astype(np.float64)
    if v.sum() == 0:
        raise PreconditionError("f has empty preimage of 1")
    return v / v.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def mild_change_check(f: BooleanFunction, event, t: int, trials: int, seed: int):
    """Compare Pr_Q[E_t] with Pr_P[E_t] / f(0) for an event on the first t steps.

    ``event(batch, t)`` returns a boolean array over runs. Returns
    (p_Q, se_Q, p_P, se_P, bound) with bound = p_P / f(0).
    """
    q = simulate_many(f, "conditioned", trials, seed, tag=1)
    p = simulate_many(f, "uniform", trials, seed, tag=2)
    pq, sq = proportion(int(event(q, t).sum()), trials)
    pp, sp = proportion(int(event(p, t).sum()), trials)
    f0 = f.mean
    return pq, sq, pp, sp, pp / f0


# ---------------------------------------------------------------------------
# parameters and stopping time


@dataclass(frozen=True)
class Parameters:
    epsilon: float
    delta: float
    rho: float
    p: float
    n: int
    max_influence: float
    variance: float
    eps_condition: bool      # (16/eps) ln(4/eps) <= ln(1/mINF)
    delta_condition: bool    # delta >= mINF^(eps/80) / eps
    eps_condition_lhs: float
    eps_condition_rhs: float
    delta_condition_rhs: float

    def as_dict(self):
        return asdict(self)


def default_parameters(rho: float, p: float, f: BooleanFunction) -> Parameters:
    """eps = largest multiple of 1/n not above rho/3; delta = p Var[f] / 8."""
    if not 0 < rho <= 1 or not 0 < p <= 1:
        raise PreconditionError("rho and p must lie in (0, 1]")
    n = f.n
    k = math.floor(rho * n / 3 + 1e-9)
    if k < 1:
        raise PreconditionError(f"no valid epsilon: rho={rho} < 3/n={3 / n}")
    eps = k / n
    var = f.variance
    delta = p * var / 8
    minf = float(max(f.influences_spectral(), default=0.0))
    lhs = 16 / eps * math.log(4 / eps)
    rhs = math.log(1 / minf) if minf > 0 else math.inf
    drhs = (minf ** (eps / 80)) / eps
    return Parameters(eps, delta, rho, p, n, minf, var, lhs <= rhs, delta >= drhs, lhs, rhs, drhs)


def k_shape(eps: float, delta: float) -> float:
    """(1/eps) ln(e/eps) log2(e/delta): the restricted-mean exponent without its constant."""
    return 1 / eps * math.log(math.e / eps) * math.log2(math.e / delta)


@dataclass(frozen=True)
class StoppingStats:
    trials: int
    seed: int
    epsilon: float
    delta: float
    horizon: int
    p_early: float           # empirical P[tau <= (1-eps) n]
    p_early_se: float
    bound: float             # 3 delta / f(0)
    holds: bool              # p_early <= bound + 3 se
    tau_mean: float
    tau_zero_fraction: float    # Y(0) already violates the condition
    tau1_first: float        # fraction of runs stopped by the derivative condition
    flagged_fraction: float
    preconditions: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def stopping_stats(f: BooleanFunction, cfg: PiConfig, trials: int, workers: int = 1) -> StoppingStats:
    if f.variance <= 0:
        raise PreconditionError("f is constant; the stopping-time bound needs Var[f] > 0")
    cfg.check(f.n)
    g = target_function(f, cfg)
    eps, delta = cfg.epsilon, cfg.delta
    b = controlled_many(f, cfg, trials, workers=workers)
    horizon = default_horizon(f.n, eps)
    hits = int((b.tau <= horizon).sum())
    p, se = proportion(hits, trials)
    bound = 3 * delta / g.mean
    minf = float(max(f.influences_spectral(), default=0.0))
    pre = {
        "eps_condition": 16 / eps * math.log(4 / eps) <= (math.log(1 / minf) if minf > 0 else math.inf),
        "delta_condition": delta >= minf ** (eps / 80) / eps,
        "max_influence_spectral": minf,
    }
    early = b.tau <= f.n
    return StoppingStats(
        trials=trials, seed=cfg.seed, epsilon=eps, delta=delta, horizon=horizon,
        p_early=p, p_early_se=se, bound=bound, holds=p <= bound + 3 * se,
        tau_mean=float(b.tau.mean()), tau_zero_fraction=float((b.tau == 0).mean()),
        tau1_first=float(((b.tau1 <= b.tau2) & early).mean()),
        flagged_fraction=float(b.flagged.mean()), preconditions=pre,
    )


# ---------------------------------------------------------------------------
# KL ledger


@dataclass(frozen=True)
class LedgerAudit:
    m: int
    tau_prime: int
    sum_Z: float
    sum_step_kl: float
    terminal_kl: float
    kl_path_bound: float        # sum of step KLs + terminal term
    lam_shape: float            # eps ln(e n / (n - m + 1)) log2(e / delta)
    composite_shape: float      # 3 lam_shape / eps^2 + log2(1 / delta)
    measured_C: float           # sum_Z / lam_shape
    max_Z: float
    z_bounded: bool             # Z_t <= eps^2 for every entry
    entropy_bounded: bool       # step_kl <= Z_t / eps^2 for every entry

    def as_dict(self):
        return asdict(self)


def kl_ledger_audit(run: PiRun, m: int | None = None) -> LedgerAudit:
    n, eps, delta = run.n, run.epsilon, run.delta
    m = default_horizon(n, eps) if m is None else m
    if not 0 <= m <= n:
        raise ValueError(f"m={m} outside [0, {n}]")
    led = run.ledger(m)
    sz = sum(e.Z for e in led)
    sk = sum(e.step_kl for e in led)
    term = run.terminal_kl(m)
    lam = eps * math.log(math.e * n / (n - m + 1)) * math.log2(math.e / delta)
    tol = 1e-12
    return LedgerAudit(
        m=m, tau_prime=run.tau_prime(m), sum_Z=sz, sum_step_kl=sk, terminal_kl=term,
        kl_path_bound=sk + term, lam_shape=lam, composite_shape=3 * lam / eps ** 2 + math.log2(1 / delta),
        measured_C=sz / lam if lam > 0 else math.nan,
        max_Z=max((e.Z for e in led), default=0.0),
        z_bounded=all(e.Z <= eps ** 2 + tol for e in led),
        entropy_bounded=all(e.step_kl <= e.Z / eps ** 2 + tol for e in led),
    )


def z_moments(f: BooleanFunction, y: PartialPoint, eps: float) -> tuple[float, float, float]:
    """(E[Z_t | y], Var[Z_t | y], max ratio^2) over the next revealed coordinate and
    the control coin, assuming the step is before the stopping time."""
    alive = y.alive()
    if not alive:
        return 0.0, 0.0, 0.0
    m = f.cond_mean(y)
    if m <= 0:
        raise PreconditionError("f vanishes on this subcube")
    g = f.grad_batch(*y.arrays())[0][alive] / m
    sq = g ** 2
    ez = eps * sq.mean()
    ez2 = eps * (sq ** 2).mean()
    return float(ez), float(ez2 - ez ** 2), float(sq.max())


@dataclass(frozen=True)
class ExactKL:
    kl: float
    decomposition: float
    expected_step_kl: float
    expected_terminal: float
    law: dict
    leaves: int


def kl_exact_small_n(f: BooleanFunction, pi, T, z, m: int, eps: float, delta: float,
                     max_free: int = 16) -> ExactKL:
    """Exact KL, in bits, between Y(n) and X(n) given the pre-m randomness.

    ``pi`` is the full reveal order, ``T`` the controlled times (1-based, only
    those <= m matter), ``z`` the environment sign at each time (length n or a
    mapping time -> sign; only uncontrolled times <= m are read). Steps after
    m are averaged over the control coin and environment, which yields the
    conditioned law. X reads z on uncontrolled phase-1 steps before the
    horizon and is fair otherwise.
    """
    n = f.n
    pi = [int(i) for i in pi]
    if sorted(pi) != list(range(n)):
        raise ValueError("pi must be a permutation of range(n)")
    if not 0 <= m <= n:
        raise ValueError(f"m={m} outside [0, {n}]")
    Tset = {int(t) for t in T if int(t) <= m}
    zget = (lambda t: z[t]) if isinstance(z, dict) else (lambda t: z[t - 1])
    free = n - (m - len(Tset))
    if free > max_free:
        raise ValueError(f"{free} free coordinates exceeds the enumeration cap {max_free}")

    cache = {}

    def info(fixed, signs):
        key = (fixed, signs)
        if key not in cache:
            p = PartialPoint(n, fixed, signs)
            fa, na = p.arrays()
            mean = float(f.mean_batch(fa, na)[0])
            grad = f.grad_batch(fa, na)[0]
            cache[key] = (mean, grad, float(np.abs(grad).max(initial=0.0)))
        return cache[key]

    def violated(mean, gmax):
        return gmax > eps * delta or mean < delta

    law = {}
    acc = {"kl": 0.0, "dec": 0.0, "step": 0.0, "term": 0.0, "leaves": 0}

    mean0, _, gmax0 = info(0, 0)
    if mean0 <= 0:
        raise PreconditionError("f is identically 0")
    live0 = not violated(mean0, gmax0)
    term0 = mean0 if (not live0 or m == 0) else None

    def rec(t, fixed, signs, live, prob, log_ratio, step_kl, term_mean):
        if prob == 0.0:
            return
        if t > n:
            acc["leaves"] += 1
            law[signs] = law.get(signs, 0.0) + prob
            acc["kl"] += prob * log_ratio
            tt = math.log2(1 / term_mean)
            acc["dec"] += prob * (step_kl + tt)
            acc["step"] += prob * step_kl
            acc["term"] += prob * tt
            return
        mean, grad, _ = info(fixed, signs)
        i = pi[t - 1]
        r = grad[i] / mean
        bit = 1 << i
        if live and t <= m and t not in Tset:
            branches = [(zget(t), 1.0, 1.0)]  # (value, P_Y, P_X)
            skl = 0.0
        elif live and t <= m:
            pc = 0.5 + r / (2 * eps)
            if pc < -PROB_TOL or pc > 1 + PROB_TOL:
                raise InvariantViolation("controlled step probability outside [0, 1] before the stopping time")
            pc = min(max(pc, 0.0), 1.0)
            branches = [(1, pc, 0.5), (-1, 1 - pc, 0.5)]
            skl = float(1 - binary_entropy(pc))
        else:
            pq = 0.5 + r / 2
            branches = [(1, pq, 0.5), (-1, 1 - pq, 0.5)]
            skl = 0.0
        for v, py, px in branches:
            if py <= 0:
                continue
            nf, ns = fixed | bit, signs | (bit if v == -1 else 0)
            nmean, _, ngmax = info(nf, ns)
            nlive = live and not violated(nmean, ngmax)
            nterm = term_mean
            if term_mean is None and (not nlive or t == m):
                nterm = nmean
            rec(t + 1, nf, ns, nlive, prob * py, log_ratio + math.log2(py / px), step_kl + skl, nterm)

    rec(1, 0, 0, live0, 1.0, 0.0, 0.0, term0)
    return ExactKL(acc["kl"], acc["dec"], acc["step"], acc["term"], law, acc["leaves"])


def kl_exact_direct(result: ExactKL, f: BooleanFunction, pi, T, z, m, eps, delta) -> float:
    """KL of the enumerated endpoint law against the reference law computed path-free.

    The reference law puts z on coordinates revealed at uncontrolled times
    before min(tau, m) + 1 and is fair elsewhere; since tau depends on the Y
    path, this is evaluated per endpoint.
    """
    n = f.n
    Tset = {int(t) for t in T if int(t) <= m}
    zget = (lambda t: z[t]) if isinstance(z, dict) else (lambda t: z[t - 1])
    p = np.zeros(1 << n)
    q = np.zeros(1 << n)
    for signs, prob in result.law.items():
        p[signs] = prob
        fixed = s = 0
        live = True
        ref = 1.0
        pt0 = PartialPoint(n, 0, 0)
        g0 = float(np.abs(f.grad_batch(*pt0.arrays())[0]).max(initial=0.0))
        live = not (g0 > eps * delta or f.cond_mean(pt0) < delta)
        for t in range(1, n + 1):
            i = int(pi[t - 1])
            bit = 1 << i
            v = -1 if (signs >> i) & 1 else 1
            if live and t <= m and t not in Tset:
                ref *= 1.0 if v == zget(t) else 0.0
            else:
                ref *= 0.5
            fixed |= bit
            s |= signs & bit
            pt = PartialPoint(n, fixed, s)
            if live:
                mean = f.cond_mean(pt)
                gm = float(np.abs(f.grad_batch(*pt.arrays())[0]).max(initial=0.0))
                live = not (gm > eps * delta or mean < delta)
        q[signs] = ref
    return kl_bits(p, q)


# ---------------------------------------------------------------------------
# KL to mean


def kl_to_mean(K: float, delta: float) -> float:
    """Lower bound 2^{-(K + H(delta)) / delta} on mu(f) when gamma(f) >= delta, KL <= K."""
    if delta <= 0 or delta > 1:
        raise PreconditionError("delta must lie in (0, 1]")
    if K < 0:
        raise PreconditionError("K must be nonnegative")
    return 2.0 ** (-(K + binary_entropy(delta)) / delta)


def verify_kl_to_mean(values: np.ndarray, gamma: np.ndarray, delta: float | None = None,
                      K: float | None = None) -> tuple[bool, float, float, float]:
    """Check the implication for explicit f (0/1 vector) and distribution gamma.

    delta and K default to gamma(f) and KL(gamma || uniform). Returns
    (holds, mu(f), bound, slack).
    """
    values = np.asarray(values, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    gf = float(gamma @ values)
    kl = kl_bits(gamma, np.full(gamma.size, 1.0 / gamma.size))
    delta = min(gf, 1.0) if delta is None else delta
    K = kl if K is None else K
    mu = float(values.mean())
    if gf < delta - 1e-12 or kl > K + 1e-12 or delta <= 0:
        return True, mu, 0.0, math.inf  # premise fails: vacuous
    bound = kl_to_mean(K, delta)
    return mu >= bound * (1 - 1e-12), mu, bound, mu - bound


# ---------------------------------------------------------------------------
# aggregates used by the CLI and the acceptance suite


def ledger_summary(b: Batch, eps: float, delta: float, m: int | None = None) -> dict:
    """Ledger statistics across the runs of a controlled batch."""
    n = b.n
    m = default_horizon(n, eps) if m is None else m
    tp = np.minimum(b.tau, m) + 1
    steps = np.arange(1, n + 1)[None, :]
    active = b.ctrl & (steps < tp[:, None])
    r = np.nan_to_num(b.ratio)
    Z = np.where(active, r ** 2, 0.0)
    pc = np.clip(0.5 + r / (2 * eps), 0.0, 1.0)
    skl = np.where(active, 1 - binary_entropy(pc), 0.0)
    term = np.log2(1 / b.means[np.arange(b.size), tp - 1])
    sz = Z.sum(axis=1)
    lam = eps * math.log(math.e * n / (n - m + 1)) * math.log2(math.e / delta)
    tol = 1e-12
    # clamped runs (a guard that should never fire) are counted apart
    ok = ~b.flagged[:, None]
    return {
        "m": m, "flagged_runs": int(b.flagged.sum()),
        "mean_sum_Z": float(sz.mean()), "mean_sum_Z_se": float(sz.std() / math.sqrt(b.size)),
        "mean_step_kl": float(skl.sum(axis=1).mean()),
        "mean_terminal_kl": float(term.mean()),
        "lam_shape": lam,
        "measured_C": float(sz.mean() / lam) if lam > 0 else math.nan,
        "z_bounded_violations": int(((Z > eps ** 2 + tol) & ok).sum()),
        "entropy_bound_violations": int(((skl > Z / eps ** 2 + tol) & ok).sum()),
    }


def random_instance(n: int, eps: float, m: int, rng: np.random.Generator):
    pi = rng.permutation(n)
    T = [t for t in range(1, m + 1) if rng.random() < eps]
    z = [int(v) for v in rng.choice([-1, 1], size=n)]
    return pi, T, z


def kl_audit_random(f: BooleanFunction, eps: float, delta: float, m: int, count: int, seed: int) -> dict:
    """Exact KL against its chain-rule decomposition on random pre-m histories."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    diffs, direct, kls = [], [], []
    for _ in range(count):
        pi, T, z = random_instance(f.n, eps, m, rng)
        r = kl_exact_small_n(f, pi, T, z, m, eps, delta)
        diffs.append(abs(r.kl - r.decomposition))
        direct.append(abs(r.kl - kl_exact_direct(r, f, pi, T, z, m, eps, delta)))
        kls.append(r.kl)
    return {"instances": count, "m": m, "epsilon": eps, "delta": delta,
            "max_chain_rule_gap": float(max(diffs)), "max_direct_gap": float(max(direct)),
            "mean_kl": float(np.mean(kls)), "max_kl": float(max(kls))}
