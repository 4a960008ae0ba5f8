"""Independent oracles for the feedback and estimation identities.

Everything here is closed-form or exhaustive enumeration, deliberately kept
separate from the simulation code paths it validates.  The ``verify`` CLI
subcommand runs the full battery and emits a machine-readable report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from multiduel.environments import gen_condorcet_instance, random_valid_matrix
from multiduel.metadueling import rescaled_matrix, rescaling_constants
from multiduel.model import (
    MultisetAction,
    PreferenceMatrix,
    gap_profile,
    validate_preference_matrix,
    winner_distribution,
)

DEFAULT_P_GRID = tuple(round(0.1 * i, 10) for i in range(11))


@dataclass
class OracleReport:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "max_error": float(self.max_error),
            "tolerance": float(self.tolerance),
            "detail": self.detail,
        }


def exact_win_probability(n_x: int, n_y: int, p: float) -> float:
    """Closed-form probability that the x side wins an (n_x, n_y) multiset.

    n_x (n_x - 1) / (m (m - 1)) + 2 n_x n_y p / (m (m - 1)) with m = n_x + n_y.
    """
    m = n_x + n_y
    if m < 2:
        raise ValueError("multiset needs at least two slots")
    return (n_x * (n_x - 1) + 2.0 * n_x * n_y * p) / (m * (m - 1))


def symmetrized_win_probability(m: int, p: float) -> float:
    """E[o] under the reduction: even split, or the average of the two odd splits."""
    if m % 2 == 0:
        return exact_win_probability(m // 2, m // 2, p)
    hi, lo = (m + 1) // 2, m // 2
    return 0.5 * (exact_win_probability(hi, lo, p) + exact_win_probability(lo, hi, p))


def verify_unbiased_feedback(m_range=range(2, 9), p_grid=DEFAULT_P_GRID) -> OracleReport:
    """Check E[o] = alpha_m + beta_m p over the (m, p) grid."""
    worst = 0.0
    for m in m_range:
        c = rescaling_constants(m)
        for p in p_grid:
            err = abs(symmetrized_win_probability(m, p) - (c.alpha + c.beta * p))
            worst = max(worst, err)
    return OracleReport("unbiased_feedback", worst <= 1e-12, worst, 1e-12)


def verify_choice_model_agreement(n_max: int = 8, p_grid=DEFAULT_P_GRID) -> OracleReport:
    """Aggregate x-mass of the simulated winner distribution vs the closed form."""
    worst = 0.0
    for n_x in range(0, n_max + 1):
        for n_y in range(0, n_max + 1):
            if n_x + n_y < 2:
                continue
            for p in p_grid:
                arr = np.array([[0.5, p], [1.0 - p, 0.5]])
                P = PreferenceMatrix(arr)
                comp = tuple(c for c in ((0, n_x), (1, n_y)) if c[1] > 0)
                A = MultisetAction(comp)
                w = winner_distribution(A, P)
                x_mass = float(w[:n_x].sum())
                err = abs(x_mass - exact_win_probability(n_x, n_y, p))
                worst = max(worst, err)
    return OracleReport("choice_model_agreement", worst <= 1e-12, worst, 1e-12)


def verify_rescaled_validity(
    n_matrices: int = 1000, m_range=range(2, 9), seed: int = 20240601, k_range=(2, 8)
) -> OracleReport:
    """Random planted-winner matrices stay valid and keep their winner when rescaled."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for _ in range(n_matrices):
        K = int(rng.integers(k_range[0], k_range[1] + 1))
        gaps = rng.uniform(0.02, 0.5, size=K - 1)
        P = gen_condorcet_instance(K, gaps, rng)
        a_star = gap_profile(P).a_star
        for m in m_range:
            Q = rescaled_matrix(P, m)
            report = validate_preference_matrix(Q)
            if not report.ok:
                failures += 1
                worst = max(worst, max(abs(v[3]) for v in report.violations))
                continue
            if gap_profile(Q).a_star != a_star:
                failures += 1
    passed = failures == 0
    return OracleReport(
        "rescaled_validity", passed, worst, 1e-12, detail=f"{failures} failures/{n_matrices} matrices"
    )


def iw_estimator_expectation(P: PreferenceMatrix, q) -> np.ndarray:
    """Exhaustive E over (x, y) ~ q x q of the importance-weighted shifted score."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0.0):
        raise ValueError("q must be strictly positive: zero entries leave weights undefined")
    K = P.K
    est = np.zeros(K)
    for x in range(K):
        for y in range(K):
            # E[g | x, y] = P(x, y); the estimator credits only arm x.
            est[x] += q[x] * q[y] * P.entries[x, y] / (K * q[x] * q[y])
    return est


def verify_iw_unbiased(K: int, P: PreferenceMatrix, q) -> OracleReport:
    """Compare the enumerated estimator mean against the true shifted scores."""
    s = gap_profile(P).shifted_borda
    est = iw_estimator_expectation(P, q)
    worst = float(np.abs(est - s).max())
    return OracleReport("iw_unbiased", worst <= 1e-10, worst, 1e-10, detail=f"K={K}")


def verify_beta_bound(ms=None) -> OracleReport:
    """beta_m >= 1/2 on a sparse grid up to 10^6."""
    if ms is None:
        ms = list(range(2, 101)) + [10**3, 10**4 + 1, 10**5, 10**6, 10**6 + 1]
    worst = 0.0
    ok = True
    for m in ms:
        beta = rescaling_constants(m).beta
        if beta < 0.5 or beta > 1.0:
            ok = False
            worst = max(worst, abs(beta - 0.5))
    return OracleReport("beta_bound", ok, worst, 0.0, detail=f"{len(ms)} sizes")


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    n_points: int
    excluded: int = 0


def empirical_regret_slope(horizons, values) -> SlopeFit:
    """Least-squares slope of log(value) against log(horizon).

    Nonpositive values cannot enter the log fit; they are dropped with a
    warning.  Needs at least three usable points.
    """
    horizons = np.asarray(horizons, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if horizons.shape != values.shape:
        raise ValueError("horizons and values must have matching shapes")
    keep = values > 0.0
    excluded = int((~keep).sum())
    if excluded:
        warnings.warn(f"excluded {excluded} nonpositive regret values from the slope fit")
    x = np.log(horizons[keep])
    y = np.log(values[keep])
    n = x.shape[0]
    if n < 3:
        raise ValueError(f"need at least three positive points, have {n}")
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    sigma2 = float((resid**2).sum()) / max(n - 2, 1)
    return SlopeFit(slope=slope, stderr=float(np.sqrt(sigma2 / sxx)), n_points=n, excluded=excluded)


def run_all_verifications(seed: int = 20240601) -> list[OracleReport]:
    """The build-gate battery: every report here must pass before acceptance runs."""
    rng = np.random.default_rng(seed)
    reports = [
        verify_unbiased_feedback(),
        verify_choice_model_agreement(),
        verify_rescaled_validity(seed=seed),
        verify_beta_bound(),
    ]
    for K in (2, 3, 4):
        P = random_valid_matrix(K, rng)
        q = rng.uniform(0.05, 1.0, size=K)
        q = q / q.sum()
        gamma = 0.2
        q = (1 - gamma) * q + gamma / K
        report = verify_iw_unbiased(K, P, q)
        report.name = f"iw_unbiased_K{K}"
        reports.append(report)
    return reports
