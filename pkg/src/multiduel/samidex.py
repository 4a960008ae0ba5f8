"""Stochastic-then-adversarial multi-dueling algorithm for the Borda objective.

The algorithm starts in stochastic mode: a baseline-exploration stage plays
every ordered pair round-robin, after which successive elimination prunes a
candidate set while decaying uniform monitoring keeps feeding a per-pair
deviation detector.  The detector compares post-baseline feedback sums
against the locked baseline means; when any pair drifts past the martingale
threshold the algorithm irreversibly switches to an EXP3 strategy with
explicit uniform exploration driven by importance-weighted shifted Borda
scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from multiduel._util import UniformStream, spawn_streams
from multiduel.learners import ProtocolError
from multiduel.metadueling import (
    _append_regret,
    _normalize_m_schedule,
    _sample_two_arm_winner,
    rescaling_constants,
)
from multiduel.model import RegretLedger

STOCH = "stoch"
ADV = "adv"

STAGE0 = "stage0"
MONITOR = "monitor"
ELIMINATE = "eliminate"
EXPLOIT = "exploit"
EXP3 = "exp3"

# Multiplies K inside the elimination confidence radius.  2K is the stated
# confidence-validity radius (matching the 32K pull bound); the alternative
# 20K inflates elimination times ~10x, far enough that baseline estimation
# error trips the deviation detector before slow arms can be eliminated.
CONF_CONSTANT = 2.0


@dataclass
class SaMidexConfig:
    """Run parameters; T0 and tau follow from (K, T, delta) by the closed forms.

    For short horizons T0 can exceed T (e.g. K=4, T=100, delta=1/T^2 gives
    T0=1056): the whole run is then baseline exploration and the baseline
    never locks, so neither elimination nor detection activates.
    """

    K: int
    T: int
    m: int | object = 2
    delta: float | None = None
    eta: float | None = None
    gamma: float | None = None
    T0: int = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least two arms")
        if self.T < 1:
            raise ValueError("horizon must be positive")
        if self.delta is None:
            self.delta = 1.0 / self.T**2
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.gamma is not None and not 0.0 < self.gamma <= 0.5:
            raise ValueError(f"gamma must lie in (0, 1/2], got {self.gamma}")
        if self.eta is not None and self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        K, T, d = self.K, self.T, self.delta
        self.T0 = 4 * K * (K - 1) * math.ceil(math.log(2.0 * K * K * T * T / d))
        self.tau = math.sqrt(8.0 * math.log(K * K * T * T / d))

    def conf_log_term(self) -> float:
        return math.log(2.0 * self.K * self.K * self.T / self.delta)


def round_robin_pair(t: int, K: int) -> tuple[int, int]:
    """Ordered pair played at stage-0 round t (1-based), lexicographic cycle."""
    idx = (t - 1) % (K * (K - 1))
    i = idx // (K - 1)
    r = idx % (K - 1)
    return i, r + 1 if r >= i else r


def confidence_radius(N_i: int, config: SaMidexConfig) -> float:
    """Elimination radius sqrt(2 K log(2 K^2 T / delta) / N); infinite at N = 0."""
    if N_i <= 0:
        return math.inf
    return math.sqrt(CONF_CONSTANT * config.K * config.conf_log_term() / N_i)


def default_exp3_params(K: int, T_remaining: int) -> tuple[float, float]:
    """(eta, gamma) for the adversarial phase; gamma ~ T^{-1/3}, eta = gamma^2 / K."""
    if T_remaining < 1:
        raise ValueError("remaining horizon must be at least 1")
    gamma = min(0.5, (K * math.log(K) / T_remaining) ** (1.0 / 3.0))
    return gamma * gamma / K, gamma


class PairStats:
    """Ordered-pair comparison counts and transformed-feedback sums.

    The baseline snapshot is locked once at t = T0; afterwards the locked
    means never change and back the deviation statistics.
    """

    def __init__(self, K: int):
        self.K = K
        self.N = [[0] * K for _ in range(K)]
        self.S = [[0.0] * K for _ in range(K)]
        self.locked = False
        self.N_T0 = None
        self.S_T0 = None
        self.P_hat_T0 = None

    def lock(self) -> None:
        K = self.K
        self.N_T0 = [row[:] for row in self.N]
        self.S_T0 = [row[:] for row in self.S]
        # Unobserved pairs (the diagonal, in a full stage 0) keep the 1/2 prior.
        self.P_hat_T0 = [
            [self.S[i][j] / self.N[i][j] if self.N[i][j] > 0 else 0.5 for j in range(K)]
            for i in range(K)
        ]
        self.locked = True

    def counts(self) -> np.ndarray:
        return np.array(self.N, dtype=np.int64)

    def sums(self) -> np.ndarray:
        return np.array(self.S, dtype=np.float64)


def deviation_statistic(pair_stats: PairStats, i: int, j: int) -> float:
    """Absolute drift of pair (i, j)'s post-baseline sum from the locked mean."""
    if not pair_stats.locked:
        raise ProtocolError("deviation statistic requires a locked baseline")
    n_post = pair_stats.N[i][j] - pair_stats.N_T0[i][j]
    return abs(pair_stats.S[i][j] - pair_stats.S_T0[i][j] - n_post * pair_stats.P_hat_T0[i][j])


class SaMidexState:
    """Full algorithm state: mode machine, pair statistics, active set, EXP3 scores."""

    def __init__(self, config: SaMidexConfig):
        K = config.K
        self.config = config
        self.mode = STOCH
        self.switch_round: int | None = None
        self.pair_stats = PairStats(K)
        self.active = [True] * K
        self.n_active = K
        self.pulls = [0] * K
        self.cursor = K - 1  # next elimination primary is the first active after this
        # Running per-row sums of off-diagonal pair means back the Borda estimates.
        self._mean = [[0.0] * K for _ in range(K)]
        self._row_mean_sum = [0.0] * K
        self.S_tilde: list[float] | None = None
        self.eta: float | None = None
        self.gamma: float | None = None

    def borda_estimate(self, i: int) -> float:
        return self._row_mean_sum[i] / (self.config.K - 1)

    def borda_estimates(self) -> np.ndarray:
        return np.array([self.borda_estimate(i) for i in range(self.config.K)])

    def active_set(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.config.K) if self.active[i])

    def next_primary(self) -> int:
        K = self.config.K
        i = self.cursor
        for _ in range(K):
            i = (i + 1) % K
            if self.active[i]:
                self.cursor = i
                return i
        raise RuntimeError("active set is empty")  # unreachable: C never empties


def update_stats(state: SaMidexState, x: int, y: int, g: float, primary_pull: bool) -> None:
    """Fold one transformed observation into the pair statistics.

    Self-pairs update counts (they feed detection) but never the Borda
    estimates; primary_pull marks elimination-branch rounds, the only ones
    counted by the confidence radius.
    """
    ps = state.pair_stats
    n = ps.N[x][y] + 1
    ps.N[x][y] = n
    s = ps.S[x][y] + g
    ps.S[x][y] = s
    if x != y:
        new_mean = s / n
        state._row_mean_sum[x] += new_mean - state._mean[x][y]
        state._mean[x][y] = new_mean
    if primary_pull:
        state.pulls[x] += 1


def select_action(t: int, state: SaMidexState, rng) -> tuple[int, int, str]:
    """Stochastic-mode action for t > T0: monitor, eliminate, or exploit."""
    u = rng.next() if isinstance(rng, UniformStream) else rng.random()
    K = state.config.K
    p_t = K * math.log(t) / t
    if u < p_t:  # min(1, p_t) is implicit: u < 1 always
        if isinstance(rng, UniformStream):
            x = rng.randint(K)
            y = rng.randint(K)
        else:
            x = int(rng.integers(K))
            y = int(rng.integers(K))
        return x, y, MONITOR
    if state.n_active > 1:
        x = state.next_primary()
        if isinstance(rng, UniformStream):
            j = rng.randint(K - 1)
        else:
            j = int(rng.integers(K - 1))
        y = j + 1 if j >= x else j
        return x, y, ELIMINATE
    i_star = state.active_set()[0]
    return i_star, i_star, EXPLOIT


def elimination_step(state: SaMidexState, config: SaMidexConfig) -> list[int]:
    """Remove every active arm dominated at the current confidence level.

    Evaluated against a pre-step snapshot, so removal order cannot matter;
    returns the arms eliminated this call.
    """
    if state.n_active <= 1:
        return []
    active = [i for i in range(config.K) if state.active[i]]
    lowers = {}
    uppers = {}
    best_lower = -math.inf
    for i in active:
        b = state.borda_estimate(i)
        c = confidence_radius(state.pulls[i], config)
        lowers[i] = b - c
        uppers[i] = b + c
        if lowers[i] > best_lower:
            best_lower = lowers[i]
    removed = [j for j in active if best_lower > uppers[j]]
    for j in removed:
        state.active[j] = False
    state.n_active -= len(removed)
    return removed


def check_and_switch(state: SaMidexState, config: SaMidexConfig, t: int | None = None) -> str:
    """Scan all ordered pairs for a deviation and make the irreversible switch."""
    if state.mode == ADV:
        return ADV
    ps = state.pair_stats
    if not ps.locked:
        return state.mode
    tau = config.tau
    for i in range(config.K):
        for j in range(config.K):
            n_post = ps.N[i][j] - ps.N_T0[i][j]
            if n_post <= 0:
                continue
            d = abs(ps.S[i][j] - ps.S_T0[i][j] - n_post * ps.P_hat_T0[i][j])
            if d > tau * (math.sqrt(n_post) + 1.0):
                _enter_adversarial(state, t)
                return ADV
    return state.mode


def _enter_adversarial(state: SaMidexState, t: int | None) -> None:
    config = state.config
    state.mode = ADV
    state.switch_round = t
    state.S_tilde = [0.0] * config.K
    if config.eta is not None and config.gamma is not None:
        state.eta, state.gamma = config.eta, config.gamma
    else:
        remaining = max(1, config.T - t) if t is not None else config.T
        eta, gamma = default_exp3_params(config.K, remaining)
        state.eta = config.eta if config.eta is not None else eta
        state.gamma = config.gamma if config.gamma is not None else gamma


def exp3_mixture(S_tilde, eta: float, gamma: float) -> np.ndarray:
    """Gibbs distribution over the scores blended with gamma-uniform exploration."""
    s = np.asarray(S_tilde, dtype=np.float64)
    z = np.exp(eta * (s - s.max()))
    return (1.0 - gamma) * z / z.sum() + gamma / len(s)


def exp3_select(state: SaMidexState, rng) -> tuple[int, int]:
    """Draw both arms independently from the exploration-mixed Gibbs distribution."""
    if state.mode != ADV or state.S_tilde is None:
        raise ProtocolError("exp3_select requires adversarial mode")
    q = exp3_mixture(state.S_tilde, state.eta, state.gamma)
    cdf = np.cumsum(q)
    if isinstance(rng, UniformStream):
        u1, u2 = rng.next(), rng.next()
    else:
        u1, u2 = rng.random(), rng.random()
    K = state.config.K
    x = min(int(np.searchsorted(cdf, u1, side="right")), K - 1)
    y = min(int(np.searchsorted(cdf, u2, side="right")), K - 1)
    return x, y


def exp3_update(state: SaMidexState, x: int, y: int, g: float, q) -> None:
    """Accumulate the importance-weighted shifted-Borda score onto arm x."""
    gamma_floor = state.gamma / state.config.K - 1e-12
    if q[x] < gamma_floor or q[y] < gamma_floor:
        raise ProtocolError("sampling probabilities fell below the exploration floor")
    state.S_tilde[x] += g / (state.config.K * q[x] * q[y])


@dataclass
class CheckpointRow:
    t: int
    cum_condorcet: float
    cum_borda: float
    mode: str
    active_set_size: int


@dataclass
class SaMidexResult:
    """Run outcome: regret ledger plus the mode/elimination trace."""

    ledger: RegretLedger
    state: SaMidexState
    switch_round: int | None
    final_active: tuple[int, ...]
    elimination_rounds: dict
    pulls_at_elimination: dict
    checkpoint_rows: list
    trace: list | None


def run_sa_midex(
    env,
    config: SaMidexConfig,
    rng,
    borda_benchmark: int | None = None,
    checkpoints=None,
    record_trace: bool = False,
) -> SaMidexResult:
    """Run the full algorithm for config.T rounds against the environment.

    Three independent RNG streams mirror the reduction runner: algorithm
    draws, environment winner draws, and symmetrization coins.  The loop
    keeps per-arm confidence bounds incrementally (only the primary arm's
    row changes per round), which is equivalent to running the snapshot
    elimination step every round.
    """
    horizon = getattr(env, "horizon", None)
    if horizon is not None and config.T > horizon:
        raise ValueError(f"environment horizon {horizon} is shorter than T={config.T}")
    if env.K != config.K:
        raise ValueError(f"environment has K={env.K} arms, config says {config.K}")

    K, T, T0, tau = config.K, config.T, config.T0, config.tau
    m_of = _normalize_m_schedule(config.m, T)
    alg_rng, env_rng, coin_rng = spawn_streams(rng, 3)
    alg_u = UniformStream(alg_rng)
    env_u = UniformStream(env_rng)
    coin_u = UniformStream(coin_rng)

    state = SaMidexState(config)
    ps = state.pair_stats
    N, S = ps.N, ps.S
    mean = state._mean
    row_sum = state._row_mean_sum
    pulls = state.pulls
    active = state.active
    ledger = RegretLedger(borda_benchmark=borda_benchmark)
    consts: dict[int, tuple[float, float]] = {}
    checkpoint_set = set(int(c) for c in checkpoints) if checkpoints is not None else set()
    checkpoint_rows: list[CheckpointRow] = []
    trace: list | None = [] if record_trace else None
    elimination_rounds: dict[int, int] = {}
    pulls_at_elimination: dict[int, int] = {}
    n_pairs = K * (K - 1)
    k1 = K - 1
    conf_num = CONF_CONSTANT * K * config.conf_log_term()
    log = math.log
    sqrt = math.sqrt

    # Incremental elimination bounds; +-inf until an arm has primary pulls.
    low = [-math.inf] * K
    up = [math.inf] * K
    best_lower = -math.inf
    best_arm = -1

    # Per-matrix caches: plain lists index much faster than numpy scalars.
    cached_profile = None
    gaps_l: list | None = None
    s_l: list = []
    s_star = 0.0
    cached_P = None
    P_l: list = []

    bench = borda_benchmark

    for t in range(1, T + 1):
        P = env.preference_at(t)
        if P is not cached_P:
            cached_P = P
            P_l = P.entries.tolist()
        profile = env.profile_at(t)
        if profile is not cached_profile:
            cached_profile = profile
            g_arr = profile.condorcet_gaps
            gaps_l = g_arr.tolist() if g_arr is not None else None
            s_l = profile.shifted_borda.tolist()
            s_star = s_l[bench] if bench is not None else profile.shifted_max
        q = None
        mode = state.mode

        if mode == STOCH:
            if t <= T0:
                idx = (t - 1) % n_pairs
                x = idx // k1
                r = idx - x * k1
                y = r + 1 if r >= x else r
                branch = STAGE0
            else:
                u = alg_u.next()
                if u * t < K * log(t):
                    x = alg_u.randint(K)
                    y = alg_u.randint(K)
                    branch = MONITOR
                elif state.n_active > 1:
                    x = state.next_primary()
                    j = alg_u.randint(k1)
                    y = j + 1 if j >= x else j
                    branch = ELIMINATE
                else:
                    x = y = state.active_set()[0]
                    branch = EXPLOIT
        else:
            q = exp3_mixture(state.S_tilde, state.eta, state.gamma)
            cdf = np.cumsum(q)
            x = min(int(np.searchsorted(cdf, alg_u.next(), side="right")), K - 1)
            y = min(int(np.searchsorted(cdf, alg_u.next(), side="right")), K - 1)
            branch = EXP3

        m_t = m_of(t)
        c = consts.get(m_t)
        if c is None:
            rc = rescaling_constants(m_t)
            c = (rc.alpha, rc.beta)
            consts[m_t] = c
        alpha, beta = c
        u_coin = coin_u.next()
        coin = 1 if u_coin < 0.5 else 0
        if m_t % 2 == 0:
            n_x = n_y = m_t // 2
        elif coin == 1:
            n_x, n_y = (m_t + 1) // 2, m_t // 2
        else:
            n_x, n_y = m_t // 2, (m_t + 1) // 2
        winner = _sample_two_arm_winner(n_x, n_y, P_l[x][y], env_u.next())
        o = 1 if winner < n_x else 0
        g = (o - alpha) / beta

        # update_stats, inlined
        n_obs = N[x][y] + 1
        N[x][y] = n_obs
        s_obs = S[x][y] + g
        S[x][y] = s_obs
        row_changed = x != y
        if row_changed:
            row_x = mean[x]
            new_mean = s_obs / n_obs
            row_sum[x] += new_mean - row_x[y]
            row_x[y] = new_mean
        pulled = branch == ELIMINATE
        if pulled:
            pulls[x] += 1

        if t == T0:
            ps.lock()

        switched_now = False
        if mode == STOCH and t > T0:
            # Incremental elimination: only arm x's bounds moved this round.
            if (row_changed or pulled) and active[x] and state.n_active > 1:
                n_p = pulls[x]
                conf_x = sqrt(conf_num / n_p) if n_p > 0 else math.inf
                b_x = row_sum[x] / k1
                low_x = b_x - conf_x
                up_x = b_x + conf_x
                low[x] = low_x
                up[x] = up_x
                if x == best_arm and low_x < best_lower:
                    best_lower = -math.inf
                    best_arm = -1
                    for i in range(K):
                        if active[i] and low[i] > best_lower:
                            best_lower = low[i]
                            best_arm = i
                if low_x > best_lower:
                    best_lower = low_x
                    best_arm = x
                    removed = [j for j in range(K) if active[j] and best_lower > up[j]]
                    for j in removed:
                        active[j] = False
                        state.n_active -= 1
                        elimination_rounds[j] = t
                        pulls_at_elimination[j] = pulls[j]
                elif best_lower > up_x:
                    active[x] = False
                    state.n_active -= 1
                    elimination_rounds[x] = t
                    pulls_at_elimination[x] = pulls[x]
            # Only the pair updated this round can newly cross its threshold.
            n_post = n_obs - ps.N_T0[x][y]
            if n_post > 0:
                d = s_obs - ps.S_T0[x][y] - n_post * ps.P_hat_T0[x][y]
                if d < 0.0:
                    d = -d
                if d > tau * (sqrt(n_post) + 1.0):
                    _enter_adversarial(state, t)
                    switched_now = True
        elif mode == ADV:
            exp3_update(state, x, y, g, q)

        r_c = (n_x * gaps_l[x] + n_y * gaps_l[y]) / m_t if gaps_l is not None else float("nan")
        ledger.append(r_c, s_star - 0.5 * (s_l[x] + s_l[y]))

        if t in checkpoint_set:
            checkpoint_rows.append(
                CheckpointRow(
                    t=t,
                    cum_condorcet=ledger.cum_condorcet,
                    cum_borda=ledger.cum_borda,
                    mode=state.mode,
                    active_set_size=state.n_active,
                )
            )
        if trace is not None:
            trace.append((t, state.mode, branch, x, y, o, g, state.n_active, switched_now))

    return SaMidexResult(
        ledger=ledger,
        state=state,
        switch_round=state.switch_round,
        final_active=state.active_set(),
        elimination_rounds=elimination_rounds,
        pulls_at_elimination=pulls_at_elimination,
        checkpoint_rows=checkpoint_rows,
        trace=trace,
    )


def run_exp3_borda(
    env,
    K: int,
    T: int,
    m,
    rng,
    eta: float | None = None,
    gamma: float | None = None,
    borda_benchmark: int | None = None,
    checkpoints=None,
) -> list[tuple[int, float, float]]:
    """Pure adversarial-mode baseline: the EXP3 mixture run from round one.

    Returns (t, cum_condorcet, cum_borda) at the checkpoint rounds (all of
    1..T when none are given); the comparison partner for the full
    stochastic-then-adversarial algorithm.
    """
    if eta is None or gamma is None:
        d_eta, d_gamma = default_exp3_params(K, T)
        eta = eta if eta is not None else d_eta
        gamma = gamma if gamma is not None else d_gamma
    m_of = _normalize_m_schedule(m, T)
    alg_rng, env_rng, coin_rng = spawn_streams(rng, 3)
    alg_u = UniformStream(alg_rng)
    env_u = UniformStream(env_rng)
    coin_u = UniformStream(coin_rng)
    ledger = RegretLedger(borda_benchmark=borda_benchmark)
    S_tilde = np.zeros(K)
    consts: dict[int, tuple[float, float]] = {}
    checkpoint_set = set(int(c) for c in checkpoints) if checkpoints is not None else None
    out = []
    for t in range(1, T + 1):
        q = exp3_mixture(S_tilde, eta, gamma)
        cdf = np.cumsum(q)
        x = min(int(np.searchsorted(cdf, alg_u.next(), side="right")), K - 1)
        y = min(int(np.searchsorted(cdf, alg_u.next(), side="right")), K - 1)
        m_t = m_of(t)
        c = consts.get(m_t)
        if c is None:
            rc = rescaling_constants(m_t)
            c = (rc.alpha, rc.beta)
            consts[m_t] = c
        alpha, beta = c
        u_coin = coin_u.next()
        coin = 1 if u_coin < 0.5 else 0
        if m_t % 2 == 0:
            n_x = n_y = m_t // 2
        elif coin == 1:
            n_x, n_y = (m_t + 1) // 2, m_t // 2
        else:
            n_x, n_y = m_t // 2, (m_t + 1) // 2
        P = env.preference_at(t)
        winner = _sample_two_arm_winner(n_x, n_y, float(P.entries[x, y]), env_u.next())
        o = 1 if winner < n_x else 0
        g = (o - alpha) / beta
        S_tilde[x] += g / (K * q[x] * q[y])
        _append_regret(ledger, n_x, n_y, x, y, env.profile_at(t))
        if checkpoint_set is None or t in checkpoint_set:
            out.append((t, ledger.cum_condorcet, ledger.cum_borda))
    return out
