"""Ground-truth preference model, the pairwise-subset choice model, and regret accounting.

A preference matrix ``P`` gives the probability ``P[i, j]`` that arm ``i``
beats arm ``j`` in a duel.  Valid matrices are reciprocal
(``P[i, j] + P[j, i] == 1``) with a one-half diagonal.  When a size-``m``
multiset of arms is played, the winner index is drawn from the
pairwise-averaging choice model: the slot holding arm ``a`` wins with
probability ``sum_{j != slot} 2 * P[a, arm_j] / (m * (m - 1))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VALIDATION_TOL = 1e-12


@dataclass(frozen=True)
class PreferenceMatrix:
    """K x K win-probability matrix; immutable after construction."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"preference matrix must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, idx):
        return self.entries[idx]

    @classmethod
    def from_text(cls, text: str) -> "PreferenceMatrix":
        """Parse the plain-text format: first line K, then K whitespace-separated rows."""
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty preference-matrix file")
        k = int(lines[0])
        if len(lines) < k + 1:
            raise ValueError(f"expected {k} matrix rows, found {len(lines) - 1}")
        rows = [[float(v) for v in lines[1 + i].split()] for i in range(k)]
        arr = np.array(rows, dtype=np.float64)
        if arr.shape != (k, k):
            raise ValueError(f"expected a {k}x{k} matrix, got shape {arr.shape}")
        return cls(arr)

    @classmethod
    def from_file(cls, path) -> "PreferenceMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        lines = [str(self.K)]
        for row in self.entries:
            lines.append(" ".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a preference-matrix check: empty ``violations`` means pass."""

    ok: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_preference_matrix(P: PreferenceMatrix | np.ndarray) -> ValidationReport:
    """Check reciprocity, the one-half diagonal, and entry bounds to 1e-12.

    Returns a report listing every violated constraint with its indices.
    Raises ``ValueError`` on non-square input.
    """
    arr = P.entries if isinstance(P, PreferenceMatrix) else np.asarray(P, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"preference matrix must be square, got shape {arr.shape}")
    k = arr.shape[0]
    violations = []
    for i in range(k):
        if abs(arr[i, i] - 0.5) > VALIDATION_TOL:
            violations.append(("diagonal", i, i, float(arr[i, i])))
    for i in range(k):
        for j in range(i + 1, k):
            if abs(arr[i, j] + arr[j, i] - 1.0) > VALIDATION_TOL:
                violations.append(("reciprocity", i, j, float(arr[i, j] + arr[j, i])))
    bad = np.argwhere((arr < -VALIDATION_TOL) | (arr > 1.0 + VALIDATION_TOL))
    for i, j in bad:
        violations.append(("bounds", int(i), int(j), float(arr[i, j])))
    return ValidationReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class MultisetAction:
    """Size-m multiset of arms stored as (arm, count) pairs plus a flat slot view."""

    composition: tuple
    flattened: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        comp = tuple((int(a), int(c)) for a, c in self.composition)
        if any(c < 0 for _, c in comp):
            raise ValueError("multiset counts must be nonnegative")
        flat = np.array([a for a, c in comp for _ in range(c)], dtype=np.int64)
        flat.setflags(write=False)
        object.__setattr__(self, "composition", comp)
        object.__setattr__(self, "flattened", flat)

    @property
    def m(self) -> int:
        return int(self.flattened.shape[0])

    @classmethod
    def from_arms(cls, arms) -> "MultisetAction":
        comp = []
        for a in arms:
            if comp and comp[-1][0] == a:
                comp[-1] = (a, comp[-1][1] + 1)
            else:
                comp.append((int(a), 1))
        return cls(tuple(comp))


def winner_distribution(A: MultisetAction, P: PreferenceMatrix) -> np.ndarray:
    """Probability that each slot of ``A`` wins under the pairwise-averaging model."""
    m = A.m
    if m < 2:
        raise ValueError(f"multiset size must be at least 2, got {m}")
    arms = A.flattened
    sub = P.entries[np.ix_(arms, arms)]
    # Row sums include the slot's self term P[a, a] = 1/2, which the model excludes.
    w = (sub.sum(axis=1) - 0.5) * (2.0 / (m * (m - 1)))
    return w


def sample_winner(A: MultisetAction, P: PreferenceMatrix, rng: np.random.Generator) -> int:
    """Draw the winning slot index via inverse CDF; deterministic given the rng state."""
    w = winner_distribution(A, P)
    u = rng.random()
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, A.m - 1)


@dataclass(frozen=True)
class GapProfile:
    """Per-arm optimality structure of a preference matrix.

    ``a_star`` is the Condorcet winner (lowest index on ties) or ``None``.
    ``borda_scores`` average each arm's win probability over the other K-1
    arms; ``shifted_borda`` includes the self comparison and divides by K,
    so ``shifted = (borda * (K - 1) + 1/2) / K``.
    """

    a_star: int | None
    condorcet_gaps: np.ndarray | None
    borda_scores: np.ndarray
    shifted_borda: np.ndarray
    borda_gaps: np.ndarray
    shifted_max: float = 0.0

    @property
    def borda_winner(self) -> int:
        return int(np.argmax(self.borda_scores))


def gap_profile(P: PreferenceMatrix) -> GapProfile:
    """Compute Condorcet/Borda structure exactly from a valid matrix."""
    arr = P.entries
    k = arr.shape[0]
    a_star = None
    for i in range(k):
        if np.all(arr[i] >= 0.5):
            a_star = i
            break
    if a_star is not None:
        gaps = arr[a_star] - 0.5
        gaps = gaps.copy()
        gaps[a_star] = 0.0
        gaps.setflags(write=False)
    else:
        gaps = None
    row_sums = arr.sum(axis=1)
    borda = (row_sums - 0.5) / (k - 1)
    shifted = row_sums / k
    borda_gaps = borda.max() - borda
    for a in (borda, shifted, borda_gaps):
        a.setflags(write=False)
    return GapProfile(
        a_star=a_star,
        condorcet_gaps=gaps,
        borda_scores=borda,
        shifted_borda=shifted,
        borda_gaps=borda_gaps,
        shifted_max=float(shifted.max()),
    )


class RegretLedger:
    """Per-round instantaneous and cumulative regrets for both objectives.

    Condorcet regret is the average gap of the arms in the played multiset;
    it is NaN for rounds whose matrix has no Condorcet winner.  Borda regret
    is measured on the shifted score scale against ``borda_benchmark`` (the
    fixed comparator arm); when the benchmark is ``None`` the per-round best
    shifted score is used, which coincides in stationary environments.
    """

    __slots__ = (
        "borda_benchmark",
        "rounds",
        "inst_condorcet",
        "inst_borda",
        "cum_condorcet",
        "cum_borda",
    )

    def __init__(self, borda_benchmark: int | None = None):
        self.borda_benchmark = borda_benchmark
        self.rounds = 0
        self.inst_condorcet: list[float] = []
        self.inst_borda: list[float] = []
        self.cum_condorcet = 0.0
        self.cum_borda = 0.0

    def append(self, r_c: float, r_b: float) -> None:
        self.rounds += 1
        self.inst_condorcet.append(r_c)
        self.inst_borda.append(r_b)
        self.cum_condorcet += r_c
        self.cum_borda += r_b


def record_round(
    ledger: RegretLedger,
    A: MultisetAction,
    pair: tuple[int, int],
    P: PreferenceMatrix,
    profile: GapProfile,
) -> RegretLedger:
    """Append this round's instantaneous regrets, computed from ground truth."""
    if profile.borda_scores.shape[0] != P.K:
        raise ValueError("gap profile does not match the preference matrix size")
    x, y = pair
    if profile.condorcet_gaps is not None:
        gaps = profile.condorcet_gaps
        r_c = sum(c * gaps[a] for a, c in A.composition) / A.m
    else:
        r_c = float("nan")
    s = profile.shifted_borda
    bench = ledger.borda_benchmark
    s_star = s[bench] if bench is not None else s.max()
    r_b = s_star - 0.5 * (s[x] + s[y])
    ledger.append(float(r_c), float(r_b))
    return ledger
