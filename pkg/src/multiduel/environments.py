"""Ground-truth preference sequences, instance generators, and structural predicates.

Environments are oblivious: the emitted matrix sequence is a pure function
of the construction parameters (and a seed where randomness is involved),
never of the learner's actions.  Generators plant known Condorcet or Borda
structure so regret can be measured against exact ground truth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from multiduel.model import GapProfile, PreferenceMatrix, gap_profile, validate_preference_matrix

logger = logging.getLogger(__name__)


class ConstructionError(ValueError):
    """Requested instance is infeasible; the message carries the certificate."""


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


class Environment:
    """Common surface: K arms, per-round matrix and gap profile, optional horizon."""

    kind = "environment"
    horizon: int | None = None

    @property
    def K(self) -> int:
        raise NotImplementedError

    def preference_at(self, t: int) -> PreferenceMatrix:
        raise NotImplementedError

    def profile_at(self, t: int) -> GapProfile:
        raise NotImplementedError

    def average_shifted_borda(self, T: int) -> np.ndarray:
        """Mean shifted Borda score vector over rounds 1..T."""
        total = np.zeros(self.K)
        for t in range(1, T + 1):
            total += self.profile_at(t).shifted_borda
        return total / T

    def borda_benchmark(self, T: int) -> int:
        """The fixed comparator arm: argmax of the horizon-averaged shifted score."""
        return int(np.argmax(self.average_shifted_borda(T)))


class StochasticFixed(Environment):
    kind = "stochastic"

    def __init__(self, P: PreferenceMatrix):
        self.P = P
        self.profile = gap_profile(P)

    @property
    def K(self) -> int:
        return self.P.K

    def preference_at(self, t: int) -> PreferenceMatrix:
        return self.P

    def profile_at(self, t: int) -> GapProfile:
        return self.profile

    def average_shifted_borda(self, T: int) -> np.ndarray:
        return self.profile.shifted_borda


class SwitchingAdversary(Environment):
    """Stationary P before the switch round, stationary Q from it onward."""

    kind = "switching"

    def __init__(self, P: PreferenceMatrix, Q: PreferenceMatrix, t_switch: int):
        if P.K != Q.K:
            raise ValueError("P and Q must have the same number of arms")
        if t_switch < 1:
            raise ValueError("switch round must be at least 1")
        self.P = P
        self.Q = Q
        self.t_switch = t_switch
        self.profile_P = gap_profile(P)
        self.profile_Q = gap_profile(Q)

    @property
    def K(self) -> int:
        return self.P.K

    def preference_at(self, t: int) -> PreferenceMatrix:
        return self.P if t < self.t_switch else self.Q

    def profile_at(self, t: int) -> GapProfile:
        return self.profile_P if t < self.t_switch else self.profile_Q

    def average_shifted_borda(self, T: int) -> np.ndarray:
        if self.t_switch > T:
            logger.info(
                "switch round %d exceeds horizon %d; environment degenerates to stochastic",
                self.t_switch,
                T,
            )
            return self.profile_P.shifted_borda
        pre = self.t_switch - 1
        return (pre * self.profile_P.shifted_borda + (T - pre) * self.profile_Q.shifted_borda) / T


class DriftingAdversary(Environment):
    """Sinusoidal per-pair perturbation around a base matrix, clipped for validity.

    A synthetic smooth-drift stressor for the deviation detector, not a
    planted-structure instance.  With ``freeze_after`` set, the drift parks
    at that round's matrix and the tail of the sequence is stationary.
    Matrices and profiles are cached per phase index (the sequence cycles
    with integer period).
    """

    kind = "drifting"

    def __init__(
        self,
        base: PreferenceMatrix,
        amplitude: float,
        period: int,
        seed: int = 0,
        freeze_after: int | None = None,
    ):
        if not 0 <= amplitude <= 0.5:
            raise ValueError("amplitude must lie in [0, 0.5]")
        if period < 1:
            raise ValueError("period must be a positive integer")
        self.base = base
        self.amplitude = amplitude
        self.period = int(period)
        self.seed = seed
        self.freeze_after = freeze_after
        k = base.K
        rng = np.random.default_rng(seed)
        self._phases = rng.uniform(0.0, 2.0 * math.pi, size=(k, k))
        self._cache: dict[int, tuple[PreferenceMatrix, GapProfile]] = {}

    @property
    def K(self) -> int:
        return self.base.K

    def _build(self, idx: int) -> tuple[PreferenceMatrix, GapProfile]:
        k = self.base.K
        arr = np.full((k, k), 0.5)
        ang = 2.0 * math.pi * idx / self.period
        for i in range(k):
            for j in range(i + 1, k):
                v = self.base.entries[i, j] + self.amplitude * math.sin(ang + self._phases[i, j])
                v = min(max(v, 0.0), 1.0)
                arr[i, j] = v
                arr[j, i] = 1.0 - v
        P = PreferenceMatrix(arr)
        return P, gap_profile(P)

    def _at(self, t: int) -> tuple[PreferenceMatrix, GapProfile]:
        if self.freeze_after is not None and t > self.freeze_after:
            t = self.freeze_after
        idx = t % self.period
        hit = self._cache.get(idx)
        if hit is None:
            hit = self._build(idx)
            self._cache[idx] = hit
        return hit

    def preference_at(self, t: int) -> PreferenceMatrix:
        return self._at(t)[0]

    def profile_at(self, t: int) -> GapProfile:
        return self._at(t)[1]


def gen_condorcet_instance(K: int, gaps, rng) -> PreferenceMatrix:
    """Plant arm 0 as Condorcet winner with the requested per-arm gaps.

    ``gaps`` has length K-1 (opponents 1..K-1), each in (0, 1/2].  The
    off-winner block is independent uniform on [0.3, 0.7], symmetrized, which
    keeps instances non-degenerate without creating a second near-winner.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps.shape != (K - 1,):
        raise ValueError(f"need {K - 1} gaps for K={K}, got shape {gaps.shape}")
    if np.any(gaps <= 0.0):
        raise ConstructionError("gaps must be positive so the winner is unique")
    if np.any(gaps > 0.5):
        bad = int(np.argmax(gaps > 0.5))
        raise ConstructionError(
            f"gap {gaps[bad]} for arm {bad + 1} exceeds 1/2: P(a*, i) would leave [0, 1]"
        )
    gen = _as_rng(rng)
    arr = np.full((K, K), 0.5)
    arr[0, 1:] = 0.5 + gaps
    arr[1:, 0] = 0.5 - gaps
    for i in range(1, K):
        for j in range(i + 1, K):
            v = gen.uniform(0.3, 0.7)
            arr[i, j] = v
            arr[j, i] = 1.0 - v
    return PreferenceMatrix(arr)


def gen_borda_instance(K: int, borda_gaps, rng, perturbation: float = 0.05) -> PreferenceMatrix:
    """Construct a matrix whose Borda gaps match the request to 1e-12.

    Uses the additive family P(i, j) = 1/2 + theta_i - theta_j, whose Borda
    scores are affine in theta, plus a random reciprocal perturbation with
    zero row sums (which leaves every Borda score unchanged).
    """
    borda_gaps = np.asarray(borda_gaps, dtype=np.float64)
    if borda_gaps.shape != (K,):
        raise ValueError(f"need {K} Borda gaps for K={K}, got shape {borda_gaps.shape}")
    if np.any(borda_gaps < 0.0):
        raise ConstructionError("Borda gaps must be nonnegative")
    if borda_gaps.min() > 1e-12:
        raise ConstructionError("some arm must have gap 0 (the Borda winner)")
    spread = borda_gaps.max() - borda_gaps.min()
    limit = K / (2.0 * (K - 1))
    if spread > limit + 1e-12:
        raise ConstructionError(
            f"gap spread {spread} exceeds the achievable range {limit} for K={K}: "
            "entries 1/2 + theta_i - theta_j would leave [0, 1]"
        )
    gen = _as_rng(rng)
    b = borda_gaps.mean() - borda_gaps  # zero-mean score offsets from 1/2
    theta = b * (K - 1) / K
    arr = 0.5 + theta[:, None] - theta[None, :]

    # Reciprocal zero-row-sum noise: E = c (u v^T - v u^T) with mean-zero u, v.
    u = gen.standard_normal(K)
    v = gen.standard_normal(K)
    u -= u.mean()
    v -= v.mean()
    E = np.outer(u, v) - np.outer(v, u)
    max_e = np.abs(E).max()
    if max_e > 0:
        off = ~np.eye(K, dtype=bool)
        headroom = min(arr[off].min(), 1.0 - arr[off].max())
        scale = min(perturbation, 0.9 * headroom) / max_e if headroom > 0 else 0.0
        arr = arr + scale * E
    np.fill_diagonal(arr, 0.5)
    P = PreferenceMatrix(arr)
    report = validate_preference_matrix(P)
    if not report.ok:
        raise ConstructionError(f"construction produced an invalid matrix: {report.violations[:3]}")
    return P


def gen_cyclic(K: int, margin: float) -> PreferenceMatrix:
    """Cyclic tournament: each arm beats the next floor((K-1)/2) arms by ``margin``.

    Has no Condorcet winner (for margin > 0, K >= 3) and all Borda scores
    equal by symmetry.
    """
    if K < 3:
        raise ValueError("cyclic instances need at least three arms")
    if not 0 < margin <= 0.5:
        raise ValueError("margin must lie in (0, 1/2]")
    arr = np.full((K, K), 0.5)
    half = (K - 1) // 2
    for i in range(K):
        for d in range(1, half + 1):
            j = (i + d) % K
            arr[i, j] = 0.5 + margin
            arr[j, i] = 0.5 - margin
    return PreferenceMatrix(arr)


def gen_switching_adversary(P: PreferenceMatrix, Q: PreferenceMatrix, t_switch: int) -> SwitchingAdversary:
    return SwitchingAdversary(P, Q, t_switch)


def random_valid_matrix(K: int, rng) -> PreferenceMatrix:
    """Uniform reciprocal matrix (no planted structure); always valid."""
    gen = _as_rng(rng)
    arr = np.full((K, K), 0.5)
    for i in range(K):
        for j in range(i + 1, K):
            v = gen.random()
            arr[i, j] = v
            arr[j, i] = 1.0 - v
    return PreferenceMatrix(arr)


def bradley_terry_matrix(utilities) -> PreferenceMatrix:
    """P(i, j) = u_i / (u_i + u_j) from positive utilities; satisfies SST."""
    u = np.asarray(utilities, dtype=np.float64)
    if np.any(u <= 0):
        raise ValueError("utilities must be positive")
    arr = u[:, None] / (u[:, None] + u[None, :])
    return PreferenceMatrix(arr)


def check_sst(P: PreferenceMatrix) -> bool:
    """Exhaustive strong-stochastic-transitivity check over all triples."""
    arr = P.entries
    k = arr.shape[0]
    for i in range(k):
        for j in range(k):
            if arr[i, j] < 0.5:
                continue
            for l in range(k):
                if arr[j, l] >= 0.5 and arr[i, l] < max(arr[i, j], arr[j, l]) - 1e-15:
                    return False
    return True


def assert_sst_implies_borda(P: PreferenceMatrix) -> bool:
    """True unless P is an SST counterexample: SST + Condorcet winner not Borda-optimal."""
    if not check_sst(P):
        return True
    profile = gap_profile(P)
    if profile.a_star is None:
        return True
    return profile.borda_scores[profile.a_star] >= profile.borda_scores.max() - 1e-12


class SubsetSchedule:
    """Per-round subset sizes m_t >= 2; callable on the 1-based round index."""

    def __init__(self, values):
        vals = [int(v) for v in values]
        if any(v < 2 for v in vals):
            raise ValueError("every m_t must be at least 2")
        self.values = vals

    def __call__(self, t: int) -> int:
        return self.values[(t - 1) % len(self.values)]

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def fixed(cls, m: int, T: int = 1) -> "SubsetSchedule":
        return cls([m])

    @classmethod
    def random_uniform(cls, lo: int, hi: int, T: int, seed: int) -> "SubsetSchedule":
        """m_t drawn i.i.d. uniform on {lo..hi}; a pure function of (seed, t)."""
        if lo < 2 or hi < lo:
            raise ValueError("need 2 <= lo <= hi")
        gen = np.random.default_rng(seed)
        return cls(gen.integers(lo, hi + 1, size=T).tolist())
