"""Black-box reduction from multi-dueling to dueling bandits.

Each round the base dueling learner proposes a pair ``(x, y)``.  The
reduction plays a size-m multiset holding only those two arms (counts split
evenly, with a fair coin deciding the split when m is odd), observes the
multiset winner, and feeds the binary outcome "a copy of x won" back to the
base learner.  The duplicate-arm ties bias the outcome by exactly the affine
map ``alpha_m + beta_m * P(x, y)``, so the base learner effectively faces a
rescaled preference matrix with the same Condorcet winner and gap ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from multiduel._util import UniformStream, spawn_streams
from multiduel.model import (
    GapProfile,
    MultisetAction,
    PreferenceMatrix,
    RegretLedger,
)


@dataclass(frozen=True)
class RescalingConstants:
    """The (alpha_m, beta_m) pair governing the affine feedback map."""

    m: int
    beta: float
    alpha: float


def rescaling_constants(m: int) -> RescalingConstants:
    """Closed-form rescaling constants for subset size m >= 2."""
    if m < 2:
        raise ValueError(f"subset size must be at least 2, got {m}")
    if m % 2 == 0:
        beta = m / (2.0 * (m - 1))
    else:
        beta = (m + 1) / (2.0 * m)
    return RescalingConstants(m=m, beta=beta, alpha=(1.0 - beta) / 2.0)


@dataclass(frozen=True)
class MultisetPlan:
    """Two-arm multiset layout: x-copies occupy slots 0..n_x-1, y-copies the rest."""

    x: int
    y: int
    n_x: int
    n_y: int
    coin: int

    @property
    def m(self) -> int:
        return self.n_x + self.n_y


def build_multiset(x: int, y: int, m: int, coin_source) -> tuple[MultisetPlan, MultisetAction]:
    """Construct the round's multiset with odd-m symmetrization.

    ``coin_source`` may be a Generator or UniformStream; the coin is drawn
    every round (even when m is even or x == y) so RNG streams stay aligned
    across configurations.
    """
    if m < 2:
        raise ValueError(f"subset size must be at least 2, got {m}")
    u = coin_source.next() if isinstance(coin_source, UniformStream) else coin_source.random()
    coin = 1 if u < 0.5 else 0
    if m % 2 == 0:
        n_x = n_y = m // 2
    elif coin == 1:
        n_x, n_y = (m + 1) // 2, m // 2
    else:
        n_x, n_y = m // 2, (m + 1) // 2
    plan = MultisetPlan(x=x, y=y, n_x=n_x, n_y=n_y, coin=coin)
    if x == y:
        action = MultisetAction(((x, m),))
    else:
        action = MultisetAction(((x, n_x), (y, n_y)))
    return plan, action


def outcome_to_binary(winner_index: int, plan: MultisetPlan) -> int:
    """1 iff the winning slot belongs to the x block (slots 0..n_x-1).

    The slot partition applies even when x == y: the copies are physically
    identical, but crediting the x block with probability n_x / m keeps
    E[o | x, y] = alpha_m + beta_m P(x, y) valid on the diagonal (where it
    equals 1/2 after symmetrization) instead of a degenerate constant 1.
    """
    if not 0 <= winner_index < plan.m:
        raise ValueError(f"winner index {winner_index} out of range for m={plan.m}")
    return 1 if winner_index < plan.n_x else 0


def rescaled_matrix(P: PreferenceMatrix, m: int) -> PreferenceMatrix:
    """The valid preference matrix the base learner effectively plays against."""
    c = rescaling_constants(m)
    return PreferenceMatrix(c.alpha + c.beta * P.entries)


def transform_feedback(o: int, m: int) -> float:
    """Invert the affine bias: g = (o - alpha_m) / beta_m, an unbiased estimate of P(x, y)."""
    c = rescaling_constants(m)
    return (o - c.alpha) / c.beta


def _sample_two_arm_winner(n_x: int, n_y: int, p_xy: float, u: float) -> int:
    """Inverse-CDF winner slot for a two-arm multiset.

    Identical to sampling from the flat per-slot winner distribution
    (x block first), computed without materializing the length-m vector.
    """
    m = n_x + n_y
    denom = m * (m - 1)
    w_x = (n_x - 1 + 2.0 * n_y * p_xy) / denom
    q_x = n_x * w_x
    if u < q_x:
        idx = int(u / w_x)
        return idx if idx < n_x else n_x - 1
    w_y = (n_y - 1 + 2.0 * n_x * (1.0 - p_xy)) / denom
    if w_y <= 0.0 or n_y == 0:
        return m - 1
    idx = n_x + int((u - q_x) / w_y)
    return idx if idx < m else m - 1


def _append_regret(ledger, n_x, n_y, x, y, profile):
    # Shared by both run loops so m=2 reduction trajectories match the bare
    # base learner bit for bit.
    gaps = profile.condorcet_gaps
    m = n_x + n_y
    r_c = (n_x * gaps[x] + n_y * gaps[y]) / m if gaps is not None else float("nan")
    s = profile.shifted_borda
    bench = ledger.borda_benchmark
    s_star = s[bench] if bench is not None else profile.shifted_max
    ledger.append(float(r_c), float(s_star - 0.5 * (s[x] + s[y])))


def _normalize_m_schedule(m_schedule, T: int):
    """Accept a constant, a per-round sequence, or a callable t -> m_t (t is 1-based)."""
    if isinstance(m_schedule, int):
        m = m_schedule
        return lambda t: m
    if callable(m_schedule):
        return m_schedule
    seq = list(m_schedule)
    if len(seq) < T:
        raise ValueError(f"m schedule has {len(seq)} entries for horizon {T}")
    return lambda t: seq[t - 1]


def _check_horizon(env, T: int) -> None:
    horizon = getattr(env, "horizon", None)
    if horizon is not None and T > horizon:
        raise ValueError(f"environment horizon {horizon} is shorter than T={T}")


@dataclass
class ReductionResult:
    """Trajectory and regret ledger of one reduction run."""

    ledger: RegretLedger
    xs: np.ndarray
    ys: np.ndarray
    outcomes: np.ndarray

    def trajectory(self) -> tuple:
        return (tuple(self.xs), tuple(self.ys), tuple(self.outcomes))


def run_metadueling(
    base,
    env,
    T: int,
    m_schedule,
    rng,
    borda_benchmark: int | None = None,
) -> ReductionResult:
    """Run the reduction for T rounds and record ground-truth regrets.

    ``rng`` seeds three independent streams (base learner feedback is the
    only coupling): environment winner draws, symmetrization coins, and a
    spare stream reserved so seeds line up with ``run_dueling``.
    """
    _check_horizon(env, T)
    m_of = _normalize_m_schedule(m_schedule, T)
    env_rng, coin_rng, _ = spawn_streams(rng, 3)
    env_u = UniformStream(env_rng)
    coin_u = UniformStream(coin_rng)

    ledger = RegretLedger(borda_benchmark=borda_benchmark)
    xs = np.empty(T, dtype=np.int64)
    ys = np.empty(T, dtype=np.int64)
    outcomes = np.empty(T, dtype=np.int64)

    for t in range(1, T + 1):
        x, y = base.propose()
        m_t = m_of(t)
        if m_t < 2:
            raise ValueError(f"m_t must be at least 2, got {m_t} at round {t}")
        u_coin = coin_u.next()
        coin = 1 if u_coin < 0.5 else 0
        if m_t % 2 == 0:
            n_x = n_y = m_t // 2
        elif coin == 1:
            n_x, n_y = (m_t + 1) // 2, m_t // 2
        else:
            n_x, n_y = m_t // 2, (m_t + 1) // 2

        P = env.preference_at(t)
        p_xy = float(P.entries[x, y])
        winner = _sample_two_arm_winner(n_x, n_y, p_xy, env_u.next())
        o = 1 if winner < n_x else 0
        base.update(x, y, o)

        _append_regret(ledger, n_x, n_y, x, y, env.profile_at(t))
        i = t - 1
        xs[i] = x
        ys[i] = y
        outcomes[i] = o
    return ReductionResult(ledger=ledger, xs=xs, ys=ys, outcomes=outcomes)


def run_dueling(
    base,
    env,
    T: int,
    rng,
    borda_benchmark: int | None = None,
) -> ReductionResult:
    """Run the bare base learner on the environment (the m = 2 special case)."""
    _check_horizon(env, T)
    env_rng, _coin_rng, _ = spawn_streams(rng, 3)
    env_u = UniformStream(env_rng)

    ledger = RegretLedger(borda_benchmark=borda_benchmark)
    xs = np.empty(T, dtype=np.int64)
    ys = np.empty(T, dtype=np.int64)
    outcomes = np.empty(T, dtype=np.int64)

    for t in range(1, T + 1):
        x, y = base.propose()
        P = env.preference_at(t)
        # Self-duels fall out of P[x, x] = 1/2: either copy wins fairly.
        o = 1 if env_u.next() < float(P.entries[x, y]) else 0
        base.update(x, y, o)
        _append_regret(ledger, 1, 1, x, y, env.profile_at(t))
        i = t - 1
        xs[i] = x
        ys[i] = y
        outcomes[i] = o
    return ReductionResult(ledger=ledger, xs=xs, ys=ys, outcomes=outcomes)
