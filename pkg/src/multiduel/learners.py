"""Pluggable dueling-bandit learners consumed by the reduction.

``TwoPlayerTsallisInf`` is the reference best-of-both-worlds learner: two
independent FTRL players with Tsallis-entropy (power -2) regularization and
importance-weighted loss estimates, a reconstruction of the cited
best-of-both-worlds dueling approach.  ``NaiveUcbDueling`` is a simple
UCB-style stochastic-only baseline, and ``UniformRandomLearner`` closes the
comparison set.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np
from numba import njit

from multiduel._util import UniformStream

NORMALIZATION_RESIDUAL_TOL = 1e-12


class ProtocolError(RuntimeError):
    """Raised when propose/update are called out of order or with a stale pair."""


class BaseDuelingLearner(ABC):
    """Behavioral contract: propose() -> (x, y), then update(x, y, o) with o in {0, 1}.

    propose may be called exactly once before each update, and a learner is
    deterministic given its RNG seed.
    """

    K: int

    @abstractmethod
    def propose(self) -> tuple[int, int]: ...

    @abstractmethod
    def update(self, x: int, y: int, o: int) -> None: ...


@njit(cache=True)
def _tsallis_weights(losses, eta):
    """Solve the Tsallis-INF normalizer by bisection and return the weights.

    p_i = (eta * (L_i - nu))**-2 with nu chosen so the weights sum to one.
    Losses are shifted by their minimum first (the weights depend only on
    differences), keeping the root near the origin where bisection reaches
    the 1e-12 residual even for huge cumulative losses.  The shifted sum is
    increasing in nu and [-sqrt(K)/eta - 1, -1/eta] brackets the root for
    K >= 2.
    """
    K = losses.shape[0]
    lmin = losses[0]
    for i in range(1, K):
        if losses[i] < lmin:
            lmin = losses[i]
    shifted = np.empty(K)
    for i in range(K):
        shifted[i] = losses[i] - lmin
    lo = -math.sqrt(K) / eta - 1.0
    hi = -1.0 / eta
    nu = 0.5 * (lo + hi)
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        s = 0.0
        for i in range(K):
            d = eta * (shifted[i] - nu)
            s += 1.0 / (d * d)
        if abs(s - 1.0) <= 1e-12:
            break
        if s > 1.0:
            hi = nu
        else:
            lo = nu
        if hi - lo <= 4e-16 * max(1.0, abs(lo)):
            break
    p = np.empty(K)
    for i in range(K):
        d = eta * (shifted[i] - nu)
        p[i] = 1.0 / (d * d)
    return p


def tsallis_inf_distribution(cumulative_losses, eta: float) -> np.ndarray:
    """Sampling distribution of a Tsallis-INF player over cumulative losses."""
    losses = np.ascontiguousarray(cumulative_losses, dtype=np.float64)
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if not np.all(np.isfinite(losses)):
        raise ValueError("cumulative losses must be finite")
    if losses.shape[0] < 2:
        raise ValueError("need at least two arms")
    return _tsallis_weights(losses, eta)


def _sample_index(p, u: float) -> int:
    acc = 0.0
    last = len(p) - 1
    for i in range(last):
        acc += p[i]
        if u < acc:
            return i
    return last


class TwoPlayerTsallisInf(BaseDuelingLearner):
    """Reference best-of-both-worlds learner (two-player Tsallis-INF).

    Player 1 picks x against losses (1 - o) / p1(x); player 2 picks y
    against losses o / p2(y); both use eta_t = 1 / sqrt(t).  Internals
    follow the cited construction at the interface level only; per-round
    distributions here are this reconstruction's, not the original's.
    """

    def __init__(self, K: int, rng):
        if K < 2:
            raise ValueError("need at least two arms")
        self.K = K
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._u = UniformStream(gen)
        self._loss1 = np.zeros(K)
        self._loss2 = np.zeros(K)
        self._t = 1
        self._pending = None  # (x, y, p1x, p2y) between propose and update

    def propose(self) -> tuple[int, int]:
        if self._pending is not None:
            raise ProtocolError("propose called twice without an update")
        eta = 1.0 / math.sqrt(self._t)
        p1 = _tsallis_weights(self._loss1, eta)
        p2 = _tsallis_weights(self._loss2, eta)
        x = _sample_index(p1, self._u.next())
        y = _sample_index(p2, self._u.next())
        self._pending = (x, y, p1[x], p2[y])
        return x, y

    def update(self, x: int, y: int, o: int) -> None:
        if self._pending is None:
            raise ProtocolError("update called before propose")
        px, py, p1x, p2y = self._pending
        if (x, y) != (px, py):
            raise ProtocolError(f"update pair {(x, y)} does not match proposed {(px, py)}")
        if o:
            self._loss2[y] += 1.0 / p2y
        else:
            self._loss1[x] += 1.0 / p1x
        self._t += 1
        self._pending = None

    def distributions(self) -> tuple[np.ndarray, np.ndarray]:
        """Current per-player sampling distributions (diagnostic)."""
        eta = 1.0 / math.sqrt(self._t)
        return _tsallis_weights(self._loss1, eta), _tsallis_weights(self._loss2, eta)


class NaiveUcbDueling(BaseDuelingLearner):
    """UCB-style stochastic-only baseline behind the dueling interface.

    Keeps optimistic pairwise estimates; plays a surviving candidate against
    its most optimistic challenger, or against itself once no challenger's
    upper bound reaches one half.
    """

    def __init__(self, K: int, rng, alpha: float = 0.51):
        if K < 2:
            raise ValueError("need at least two arms")
        self.K = K
        self.alpha = alpha
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._u = UniformStream(gen)
        self._wins = np.zeros((K, K))
        self._counts = np.zeros((K, K))
        self._t = 1
        self._pending = None

    def _ucb(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            bonus = np.sqrt(self.alpha * math.log(max(self._t, 2)) / self._counts)
            u = self._wins / self._counts + bonus
        u[self._counts == 0] = np.inf
        np.fill_diagonal(u, 0.5)
        return u

    def propose(self) -> tuple[int, int]:
        if self._pending is not None:
            raise ProtocolError("propose called twice without an update")
        u = self._ucb()
        off_min = np.where(np.eye(self.K, dtype=bool), np.inf, u).min(axis=1)
        candidates = np.flatnonzero(off_min >= 0.5)
        if candidates.size == 0:
            candidates = np.arange(self.K)
        x = int(candidates[self._u.randint(candidates.size)])
        challengers = u[:, x].copy()
        challengers[x] = -np.inf
        y = int(np.argmax(challengers))
        if challengers[y] < 0.5:
            y = x
        self._pending = (x, y)
        return x, y

    def update(self, x: int, y: int, o: int) -> None:
        if self._pending is None:
            raise ProtocolError("update called before propose")
        if (x, y) != self._pending:
            raise ProtocolError(f"update pair {(x, y)} does not match proposed {self._pending}")
        if x != y:
            self._wins[x, y] += o
            self._counts[x, y] += 1
            self._wins[y, x] += 1 - o
            self._counts[y, x] += 1
        self._t += 1
        self._pending = None


class UniformRandomLearner(BaseDuelingLearner):
    """Proposes independent uniform arms every round; never learns."""

    def __init__(self, K: int, rng):
        self.K = K
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._u = UniformStream(gen)
        self._pending = False

    def propose(self) -> tuple[int, int]:
        if self._pending:
            raise ProtocolError("propose called twice without an update")
        self._pending = True
        return self._u.randint(self.K), self._u.randint(self.K)

    def update(self, x: int, y: int, o: int) -> None:
        if not self._pending:
            raise ProtocolError("update called before propose")
        self._pending = False
