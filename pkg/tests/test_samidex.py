"""Algorithm-state machinery: schedules, statistics, elimination, detection, EXP3."""

import math

import numpy as np
import pytest

from multiduel.environments import (
    StochasticFixed,
    SwitchingAdversary,
    gen_borda_instance,
    gen_condorcet_instance,
)
from multiduel.learners import ProtocolError
from multiduel.model import PreferenceMatrix, gap_profile
from multiduel.samidex import (
    ADV,
    CONF_CONSTANT,
    ELIMINATE,
    EXPLOIT,
    MONITOR,
    STOCH,
    SaMidexConfig,
    SaMidexState,
    check_and_switch,
    confidence_radius,
    default_exp3_params,
    deviation_statistic,
    elimination_step,
    exp3_mixture,
    exp3_select,
    exp3_update,
    round_robin_pair,
    run_sa_midex,
    select_action,
    update_stats,
)


def test_config_formulas():
    cfg = SaMidexConfig(K=4, T=100)
    # delta defaults to 1/T^2; T0 = 4K(K-1) ceil(ln(2 K^2 T^2 / delta)).
    assert cfg.delta == 1e-4
    assert cfg.T0 == 48 * math.ceil(math.log(2 * 16 * 100**2 / 1e-4))
    assert cfg.T0 == 1056  # exceeds T: that run stays in baseline exploration
    assert abs(cfg.tau - math.sqrt(8 * math.log(16 * 100**2 / 1e-4))) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        SaMidexConfig(K=1, T=10)
    with pytest.raises(ValueError):
        SaMidexConfig(K=3, T=10, delta=2.0)
    with pytest.raises(ValueError):
        SaMidexConfig(K=3, T=10, gamma=0.9)


def test_round_robin_lexicographic():
    pairs = [round_robin_pair(t, 3) for t in range(1, 7)]
    assert pairs == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
    assert [round_robin_pair(t, 2) for t in range(1, 5)] == [(0, 1), (1, 0)] * 2


def test_round_robin_exact_counts():
    K = 4
    cycles = 5
    counts = {}
    for t in range(1, K * (K - 1) * cycles + 1):
        counts[round_robin_pair(t, K)] = counts.get(round_robin_pair(t, K), 0) + 1
    assert len(counts) == K * (K - 1)
    assert all(c == cycles for c in counts.values())


def test_confidence_radius_formula():
    cfg = SaMidexConfig(K=4, T=10**4, delta=1e-8)
    L = cfg.conf_log_term()
    # Implemented radius sqrt(2K L / N): 0.5 at N = 32 L, sqrt(0.1) at N = 80 L.
    assert CONF_CONSTANT == 2.0
    assert abs(confidence_radius(int(32 * L), cfg) - 0.5) < 1e-3
    assert abs(confidence_radius(int(80 * L), cfg) - math.sqrt(0.1)) < 1e-3
    n = 1000
    assert abs(confidence_radius(n, cfg) ** 2 - 2 * confidence_radius(2 * n, cfg) ** 2) < 1e-12
    assert confidence_radius(0, cfg) == math.inf


def test_select_action_exploit_when_singleton():
    cfg = SaMidexConfig(K=4, T=10**5)
    state = SaMidexState(cfg)
    for j in (0, 1, 2):
        state.active[j] = False
    state.n_active = 1

    class NeverMonitor:
        def random(self):
            return 0.999999

        def integers(self, n):
            return 0

    t = cfg.T0 + 10**4  # large t so K log t / t is small
    x, y, branch = select_action(t, state, NeverMonitor())
    assert (x, y, branch) == (3, 3, EXPLOIT)


def test_select_action_always_monitors_at_small_t():
    # At t = K = 4 > e, K log t / t >= 1 so the monitor branch always fires.
    cfg = SaMidexConfig(K=4, T=10**5)
    state = SaMidexState(cfg)
    rng = np.random.default_rng(0)
    branches = {select_action(4, state, rng)[2] for _ in range(200)}
    assert branches == {MONITOR}


def test_select_action_monitor_frequency():
    # t = 500 gives p_t = 4 ln(500)/500 ~ 0.0497; the empirical monitor
    # frequency over 1e5 draws must sit within the +-0.003 binomial band.
    cfg = SaMidexConfig(K=4, T=10**6)
    state = SaMidexState(cfg)
    t = 500
    p_t = 4 * math.log(t) / t
    assert abs(p_t - 0.05) < 0.001
    rng = np.random.default_rng(123)
    n = 100_000
    hits = sum(1 for _ in range(n) if select_action(t, state, rng)[2] == MONITOR)
    assert abs(hits / n - p_t) < 0.003


def test_select_action_eliminate_branch_skips_primary_as_opponent():
    cfg = SaMidexConfig(K=4, T=10**5)
    state = SaMidexState(cfg)
    rng = np.random.default_rng(7)
    t = cfg.T0 + 10**4
    seen_pairs = set()
    for _ in range(500):
        x, y, branch = select_action(t, state, rng)
        if branch == ELIMINATE:
            assert x != y
            seen_pairs.add((x, y))
    assert len(seen_pairs) >= 10


def test_update_stats_single_observation_unclamped():
    cfg = SaMidexConfig(K=3, T=1000)
    state = SaMidexState(cfg)
    update_stats(state, 0, 1, 1.25, primary_pull=True)
    assert state.pair_stats.N[0][1] == 1
    assert state.pair_stats.S[0][1] == 1.25
    assert state.borda_estimate(0) == 1.25 / 2  # mean kept raw, above 1 is fine
    assert state.pulls == [1, 0, 0]


def test_update_stats_self_pair_excluded_from_borda():
    cfg = SaMidexConfig(K=3, T=1000)
    state = SaMidexState(cfg)
    update_stats(state, 2, 2, 1.0, primary_pull=False)
    assert state.pair_stats.N[2][2] == 1
    assert state.borda_estimate(2) == 0.0


def test_update_stats_monte_carlo_unbiased_m3():
    # Feedback through the m=3 reduction has mean P(i, j).
    from multiduel._util import UniformStream
    from multiduel.metadueling import _sample_two_arm_winner, transform_feedback

    rng = np.random.default_rng(5)
    u = UniformStream(rng)
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    p = 0.7
    n = 10_000
    for _ in range(n):
        coin = 1 if u.next() < 0.5 else 0
        n_x, n_y = (2, 1) if coin else (1, 2)
        winner = _sample_two_arm_winner(n_x, n_y, p, u.next())
        g = transform_feedback(1 if winner < n_x else 0, 3)
        update_stats(state, 0, 1, g, primary_pull=False)
    mean = state.pair_stats.S[0][1] / state.pair_stats.N[0][1]
    assert abs(mean - p) < 0.02


def test_elimination_step_requires_finite_radii():
    cfg = SaMidexConfig(K=3, T=1000)
    state = SaMidexState(cfg)
    update_stats(state, 0, 1, 1.0, primary_pull=False)  # no primary pulls anywhere
    assert elimination_step(state, cfg) == []
    assert state.n_active == 3


def test_elimination_step_direct_inequality():
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    L = cfg.conf_log_term()
    n = int(2 * CONF_CONSTANT * cfg.K * L / 0.01)  # conf ~ 0.0707 each
    for _ in range(n):
        update_stats(state, 0, 1, 0.9, primary_pull=True)
        update_stats(state, 1, 0, 0.1, primary_pull=True)
    # b_hat = (0.9, 0.1), both radii ~0.07: arm 1 dominated.
    removed = elimination_step(state, cfg)
    assert removed == [1]
    assert state.active_set() == (0,)
    assert elimination_step(state, cfg) == []  # singleton: nothing further


def test_deviation_statistic_requires_lock():
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    with pytest.raises(ProtocolError):
        deviation_statistic(state.pair_stats, 0, 1)


def test_deviation_statistic_zero_cases():
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    for _ in range(10):
        update_stats(state, 0, 1, 0.5, primary_pull=False)
    state.pair_stats.lock()
    assert deviation_statistic(state.pair_stats, 0, 1) == 0.0
    for _ in range(7):  # post-lock samples equal to the locked mean
        update_stats(state, 0, 1, 0.5, primary_pull=False)
    assert deviation_statistic(state.pair_stats, 0, 1) == 0.0


def test_deviation_statistic_expected_drift():
    # Locked mean 0.5, then 100 samples at 0.9: D = 40, triggering any
    # threshold with tau < 40 / 11.
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    for _ in range(50):
        update_stats(state, 0, 1, 0.5, primary_pull=False)
    state.pair_stats.lock()
    for _ in range(100):
        update_stats(state, 0, 1, 0.9, primary_pull=False)
    d = deviation_statistic(state.pair_stats, 0, 1)
    assert abs(d - 40.0) < 1e-9
    assert d > (40.0 / 11.0 - 1e-9) * (math.sqrt(100) + 1)


def test_check_and_switch_triggers_and_is_idempotent():
    cfg = SaMidexConfig(K=2, T=1000)
    state = SaMidexState(cfg)
    for _ in range(50):
        update_stats(state, 0, 1, 0.5, primary_pull=False)
    state.pair_stats.lock()
    assert check_and_switch(state, cfg, t=60) == STOCH
    drift_needed = cfg.tau * (math.sqrt(400) + 1) / 400 + 0.5  # mean that crosses
    for _ in range(400):
        update_stats(state, 0, 1, drift_needed + 0.05, primary_pull=False)
    assert check_and_switch(state, cfg, t=500) == ADV
    assert state.switch_round == 500
    assert state.S_tilde == [0.0, 0.0]
    state.S_tilde[0] = 3.0
    assert check_and_switch(state, cfg, t=900) == ADV  # idempotent, S kept
    assert state.S_tilde[0] == 3.0
    assert state.switch_round == 500


def test_exp3_mixture_uniform_cases():
    q = exp3_mixture([0.0, 0.0, 0.0], eta=0.3, gamma=0.2)
    np.testing.assert_allclose(q, 1.0 / 3.0, atol=1e-15)
    q = exp3_mixture([5.0, -1.0, 0.0], eta=0.5, gamma=1.0)
    np.testing.assert_allclose(q, 1.0 / 3.0, atol=1e-15)


def test_exp3_mixture_matches_direct_formula():
    S = np.array([0.0, 1.0, 2.0])
    eta, gamma = 0.5, 0.1
    expz = np.exp(eta * S)
    direct = (1 - gamma) * expz / expz.sum() + gamma / 3
    np.testing.assert_allclose(exp3_mixture(S, eta, gamma), direct, atol=1e-12)
    assert np.all(exp3_mixture(S, eta, gamma) >= gamma / 3 - 1e-15)


def test_exp3_select_and_update_roundtrip():
    cfg = SaMidexConfig(K=2, T=100, eta=0.1, gamma=0.2)
    state = SaMidexState(cfg)
    with pytest.raises(ProtocolError):
        exp3_select(state, np.random.default_rng(0))
    state.mode = ADV
    state.S_tilde = [0.0, 0.0]
    state.eta, state.gamma = 0.1, 0.5
    rng = np.random.default_rng(0)
    x, y = exp3_select(state, rng)
    assert x in (0, 1) and y in (0, 1)
    q = exp3_mixture(state.S_tilde, state.eta, state.gamma)
    exp3_update(state, 0, 1, 0.0, q)
    assert state.S_tilde == [0.0, 0.0]  # g = 0 leaves scores untouched
    exp3_update(state, 0, 1, 1.0, q)  # q uniform: increment 1/(2*.5*.5) = 2
    assert abs(state.S_tilde[0] - 2.0) < 1e-12
    with pytest.raises(ProtocolError):
        exp3_update(state, 0, 1, 1.0, [0.01, 0.99])


def test_default_exp3_params():
    eta, gamma = default_exp3_params(4, max(1, int(4 * math.log(4))))
    assert gamma == 0.5  # clamped
    _, g1 = default_exp3_params(4, 10**5)
    _, g8 = default_exp3_params(4, 8 * 10**5)
    assert abs(g1 / g8 - 2.0) < 1e-9  # cube-root law
    _, g = default_exp3_params(10, 10**6)
    assert abs(g - (10 * math.log(10) / 10**6) ** (1 / 3)) < 1e-12
    assert abs(g - 0.0285) < 5e-4
    eta, gamma = default_exp3_params(4, 10**5)
    assert abs(eta - gamma * gamma / 4) < 1e-15
    with pytest.raises(ValueError):
        default_exp3_params(4, 0)


def _borda_env(seed=3):
    P = gen_borda_instance(4, [0.0, 0.3, 0.2, 0.1], np.random.default_rng(seed))
    return StochasticFixed(P)


def test_run_short_horizon_stays_in_stage0():
    # K=4, T=100, delta=1/T^2: T0 = 1056 > T, so the whole run is baseline
    # exploration and the baseline never locks.
    env = _borda_env()
    cfg = SaMidexConfig(K=4, T=100)
    assert cfg.T0 == 1056
    res = run_sa_midex(env, cfg, 0, borda_benchmark=0, record_trace=True)
    assert not res.state.pair_stats.locked
    assert res.switch_round is None
    assert all(row[2] == "stage0" for row in res.trace)
    counts = res.state.pair_stats.counts()
    assert counts.sum() == 100
    assert counts.max() <= math.ceil(100 / 12) and counts.min() >= 0


def test_run_stage0_counts_exact_at_t0():
    env = _borda_env()
    cfg = SaMidexConfig(K=4, T=2800)  # T0 = 2688 for T=2800
    res = run_sa_midex(env, cfg, 1, borda_benchmark=0)
    n_t0 = np.array(res.state.pair_stats.N_T0)
    off = ~np.eye(4, dtype=bool)
    assert np.all(n_t0[off] == cfg.T0 // 12)
    assert np.all(n_t0[~off] == 0)


def test_mode_monotone_and_trace_schema():
    P = gen_borda_instance(3, [0.0, 0.25, 0.15], np.random.default_rng(1))
    Q_arr = P.entries.copy()
    Q_arr[0, 1] = min(1.0, Q_arr[0, 1] + 0.4)
    Q_arr[1, 0] = 1.0 - Q_arr[0, 1]
    env = SwitchingAdversary(P, PreferenceMatrix(Q_arr), t_switch=4000)
    cfg = SaMidexConfig(K=3, T=30_000, m=3)
    res = run_sa_midex(env, cfg, 11, borda_benchmark=0, record_trace=True)
    assert res.switch_round is not None
    modes = [row[1] for row in res.trace]
    first_adv = modes.index(ADV)
    assert all(m == STOCH for m in modes[:first_adv])
    assert all(m == ADV for m in modes[first_adv:])
    # The switch round itself still played a stochastic-branch action; every
    # later round draws from the EXP3 mixture.
    assert all(row[2] == "exp3" for row in res.trace[first_adv + 1 :])
    switched_flags = [row[8] for row in res.trace]
    assert sum(switched_flags) == 1
    for row in res.trace[:5]:
        t, mode, branch, x, y, o, g, n_active, switched = row
        assert o in (0, 1) and -1.0 <= g <= 2.0 and n_active == 3


def test_incremental_loop_matches_snapshot_operations():
    # Replay the recorded trajectory through the public snapshot operations
    # and require identical elimination rounds and switch behavior.
    env = _borda_env(seed=9)
    cfg = SaMidexConfig(K=4, T=60_000, m=2, delta=0.05)
    res = run_sa_midex(env, cfg, 123, borda_benchmark=0, record_trace=True)
    assert res.elimination_rounds, "expected at least one elimination in this setup"

    state = SaMidexState(cfg)
    elim_rounds = {}
    mode = STOCH
    switch_round = None
    for t, _mode_after, branch, x, y, o, g, _n, _sw in res.trace:
        update_stats(state, x, y, g, primary_pull=branch == ELIMINATE)
        if t == cfg.T0:
            state.pair_stats.lock()
        if mode == STOCH and t > cfg.T0:
            for j in elimination_step(state, cfg):
                elim_rounds[j] = t
            mode = check_and_switch(state, cfg, t)
            if mode == ADV and switch_round is None:
                switch_round = t
    assert elim_rounds == res.elimination_rounds
    assert switch_round == res.switch_round
    np.testing.assert_allclose(
        state.borda_estimates(), res.state.borda_estimates(), atol=1e-8
    )


def test_exp3_state_floor_holds_during_run():
    env = _borda_env(seed=5)
    cfg = SaMidexConfig(K=4, T=4000, m=2, delta=0.3)
    # Force an early switch by a planted drift via a switching environment.
    Q_arr = env.P.entries.copy()
    Q_arr[0, 1] = min(1.0, Q_arr[0, 1] + 0.45)
    Q_arr[1, 0] = 1.0 - Q_arr[0, 1]
    sw_env = SwitchingAdversary(env.P, PreferenceMatrix(Q_arr), t_switch=1)
    res = run_sa_midex(sw_env, cfg, 3, borda_benchmark=0)
    if res.switch_round is not None:
        q = exp3_mixture(res.state.S_tilde, res.state.eta, res.state.gamma)
        assert np.all(q >= res.state.gamma / cfg.K - 1e-12)
