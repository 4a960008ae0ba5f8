"""Config-driven experiment runner with seeded replications and flat-file output.

One config file describes one experiment: an environment, an algorithm, a
horizon with checkpoint rounds, and a replication count.  Output is a CSV of
per-(seed, checkpoint) cumulative regrets plus a JSON summary with means,
standard errors, and fitted log-log slopes.  Every output byte is a function
of (config, base seed): replication seeds are derived, not drawn, and worker
results are merged in submission order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from multiduel.environments import (
    DriftingAdversary,
    StochasticFixed,
    SwitchingAdversary,
    SubsetSchedule,
    gen_borda_instance,
    gen_condorcet_instance,
    gen_cyclic,
)
from multiduel.learners import NaiveUcbDueling, TwoPlayerTsallisInf, UniformRandomLearner
from multiduel.metadueling import run_metadueling
from multiduel.model import PreferenceMatrix
from multiduel.oracles import empirical_regret_slope
from multiduel.samidex import SaMidexConfig, run_exp3_borda, run_sa_midex

CSV_HEADER = "algo,env,seed,t,regret_condorcet,regret_borda,mode,active_set_size"

ALGORITHMS = ("metadueling_tsallis", "metadueling_naive", "sa_midex", "uniform_random", "exp3_borda")
ENVIRONMENTS = ("condorcet", "borda", "cyclic", "uniform", "switching", "drifting", "matrix")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message lists every bad field."""


@dataclass
class ExperimentConfig:
    algo: str = "metadueling_tsallis"
    env: str = "condorcet"
    K: int = 4
    T: int = 1024
    m: int | str = 2
    replications: int = 1
    base_seed: int = 0
    env_seed: int = 0
    checkpoints: str | list = "pow2"
    delta: float | None = None
    gaps: list | None = None
    borda_gaps: list | None = None
    margin: float = 0.1
    switch_round: int | None = None
    swap_arms: list | None = None
    shift_pair: list | None = None
    shift: float = 0.0
    drift_amplitude: float = 0.2
    drift_period: int = 2048
    matrix_file: str | None = None
    workers: int = 1
    trace: bool = False
    out: str | None = None

    def validate(self) -> None:
        bad = []
        if self.algo not in ALGORITHMS:
            bad.append(f"algo={self.algo!r} (choose from {ALGORITHMS})")
        if self.env not in ENVIRONMENTS:
            bad.append(f"env={self.env!r} (choose from {ENVIRONMENTS})")
        if self.K < 2:
            bad.append(f"K={self.K} (need >= 2)")
        if self.T < 1:
            bad.append(f"T={self.T} (need >= 1)")
        if self.replications < 1:
            bad.append(f"replications={self.replications} (need >= 1)")
        if isinstance(self.m, int) and self.m < 2:
            bad.append(f"m={self.m} (need >= 2)")
        if isinstance(self.m, str) and not self.m.startswith("random:"):
            bad.append(f"m={self.m!r} (int or 'random:LO:HI')")
        if self.workers < 1:
            bad.append(f"workers={self.workers} (need >= 1)")
        if self.delta is not None and not 0 < self.delta < 1:
            bad.append(f"delta={self.delta} (need in (0, 1) or auto)")
        if self.env == "switching" and self.switch_round is None:
            bad.append("switch_round missing for switching environment")
        if self.env == "matrix" and not self.matrix_file:
            bad.append("matrix_file missing for matrix environment")
        if bad:
            raise ConfigError("invalid config fields: " + "; ".join(bad))

    def checkpoint_list(self) -> list[int]:
        if self.checkpoints == "pow2":
            pts = [2**k for k in range(1, self.T.bit_length()) if 2**k <= self.T]
        elif isinstance(self.checkpoints, int):
            pts = [self.checkpoints]
        elif isinstance(self.checkpoints, str):
            pts = [int(v) for v in self.checkpoints.split(",") if v.strip()]
        else:
            pts = [int(v) for v in self.checkpoints]
        pts = sorted(set(p for p in pts if 1 <= p <= self.T) | {self.T})
        return pts

    def gap_vector(self) -> list[float]:
        return list(self.gaps) if self.gaps is not None else [0.2] * (self.K - 1)


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("gaps", "borda_gaps", "swap_arms", "shift_pair", "checkpoints") and "," in raw:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if key in ("swap_arms", "shift_pair"):
            return [int(p) for p in parts]
        if key == "checkpoints":
            return [int(p) for p in parts]
        return [float(p) for p in parts]
    if raw.lower() in ("auto", "none"):
        return None
    if key == "trace":
        return _BOOL.get(raw.lower(), raw)
    if key == "m" and raw.startswith("random:"):
        return raw
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse the key = value config format ('#' starts a comment)."""
    cfg = ExperimentConfig()
    known = set(cfg.__dataclass_fields__)
    unknown = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in known:
            unknown.append(key)
            continue
        value = _parse_value(key, raw)
        if key in ("gaps", "borda_gaps") and isinstance(value, (int, float)) and value is not None:
            value = [float(value)]
        setattr(cfg, key, value)
    if unknown:
        raise ConfigError("unknown config fields: " + ", ".join(sorted(unknown)))
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_environment(cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.env_seed)
    if cfg.env == "condorcet":
        P = gen_condorcet_instance(cfg.K, cfg.gap_vector(), rng)
        return StochasticFixed(P)
    if cfg.env == "borda":
        if cfg.borda_gaps is None:
            raise ConfigError("borda environment needs borda_gaps")
        P = gen_borda_instance(cfg.K, cfg.borda_gaps, rng)
        return StochasticFixed(P)
    if cfg.env == "cyclic":
        return StochasticFixed(gen_cyclic(cfg.K, cfg.margin))
    if cfg.env == "uniform":
        return StochasticFixed(PreferenceMatrix(np.full((cfg.K, cfg.K), 0.5)))
    if cfg.env == "matrix":
        return StochasticFixed(PreferenceMatrix.from_file(cfg.matrix_file))
    if cfg.env == "switching":
        if cfg.borda_gaps is not None:
            P = gen_borda_instance(cfg.K, cfg.borda_gaps, rng)
        else:
            P = gen_condorcet_instance(cfg.K, cfg.gap_vector(), rng)
        if cfg.swap_arms:
            a, b = cfg.swap_arms
            perm = list(range(cfg.K))
            perm[a], perm[b] = perm[b], perm[a]
            Q = PreferenceMatrix(P.entries[np.ix_(perm, perm)])
        elif cfg.shift_pair:
            i, j = cfg.shift_pair
            arr = P.entries.copy()
            arr[i, j] = min(max(arr[i, j] + cfg.shift, 0.0), 1.0)
            arr[j, i] = 1.0 - arr[i, j]
            Q = PreferenceMatrix(arr)
        else:
            raise ConfigError("switching environment needs swap_arms or shift_pair")
        return SwitchingAdversary(P, Q, cfg.switch_round)
    if cfg.env == "drifting":
        if cfg.borda_gaps is not None:
            P = gen_borda_instance(cfg.K, cfg.borda_gaps, rng)
        else:
            P = gen_condorcet_instance(cfg.K, cfg.gap_vector(), rng)
        return DriftingAdversary(P, cfg.drift_amplitude, cfg.drift_period, seed=cfg.env_seed)
    raise ConfigError(f"unhandled environment kind {cfg.env!r}")


def build_m_schedule(cfg: ExperimentConfig):
    if isinstance(cfg.m, str) and cfg.m.startswith("random:"):
        _, lo, hi = cfg.m.split(":")
        return SubsetSchedule.random_uniform(int(lo), int(hi), cfg.T, seed=cfg.env_seed + 1)
    return int(cfg.m)


@dataclass
class ResultRow:
    algo: str
    env: str
    seed: int
    t: int
    regret_condorcet: float
    regret_borda: float
    mode: str
    active_set_size: str

    def csv(self) -> str:
        return (
            f"{self.algo},{self.env},{self.seed},{self.t},"
            f"{self.regret_condorcet!r},{self.regret_borda!r},{self.mode},{self.active_set_size}"
        )


def _run_replication(cfg: ExperimentConfig, rep: int, benchmark: int) -> tuple[list[ResultRow], dict]:
    env = build_environment(cfg)
    m_schedule = build_m_schedule(cfg)
    seed_label = cfg.base_seed + rep
    run_rng = np.random.default_rng([cfg.base_seed, rep])
    learner_rng = np.random.default_rng([cfg.base_seed, rep, 1])
    checkpoints = cfg.checkpoint_list()
    extra: dict = {}

    if cfg.algo == "sa_midex":
        sa_cfg = SaMidexConfig(K=cfg.K, T=cfg.T, m=m_schedule, delta=cfg.delta)
        result = run_sa_midex(
            env,
            sa_cfg,
            run_rng,
            borda_benchmark=benchmark,
            checkpoints=checkpoints,
            record_trace=cfg.trace,
        )
        rows = [
            ResultRow(
                cfg.algo,
                cfg.env,
                seed_label,
                cp.t,
                cp.cum_condorcet,
                cp.cum_borda,
                cp.mode,
                str(cp.active_set_size),
            )
            for cp in result.checkpoint_rows
        ]
        extra = {
            "switch_round": result.switch_round,
            "final_active": list(result.final_active),
            "trace": result.trace,
        }
        return rows, extra

    if cfg.algo == "exp3_borda":
        rows_raw = run_exp3_borda(
            env, cfg.K, cfg.T, m_schedule, run_rng, borda_benchmark=benchmark, checkpoints=checkpoints
        )
        rows = [
            ResultRow(cfg.algo, cfg.env, seed_label, t, rc, rb, "", "")
            for (t, rc, rb) in rows_raw
        ]
        return rows, extra

    if cfg.algo == "metadueling_tsallis":
        base = TwoPlayerTsallisInf(cfg.K, learner_rng)
    elif cfg.algo == "metadueling_naive":
        base = NaiveUcbDueling(cfg.K, learner_rng)
    else:
        base = UniformRandomLearner(cfg.K, learner_rng)
    result = run_metadueling(base, env, cfg.T, m_schedule, run_rng, borda_benchmark=benchmark)
    # Plain cumsum: a round with no Condorcet winner poisons the rest with
    # NaN, which is honest (the objective is undefined from there on).
    cum_c = np.cumsum(result.ledger.inst_condorcet)
    cum_b = np.cumsum(result.ledger.inst_borda)
    rows = [
        ResultRow(
            cfg.algo, cfg.env, seed_label, t, float(cum_c[t - 1]), float(cum_b[t - 1]), "", ""
        )
        for t in checkpoints
    ]
    return rows, extra


def _worker(args):
    cfg, rep, benchmark = args
    return _run_replication(cfg, rep, benchmark)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: dict
    traces: list = field(default_factory=list)

    def csv_text(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def summary_json(self) -> str:
        return json.dumps(_sanitize(self.summary), indent=2, sort_keys=True) + "\n"


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.floating):
        return _sanitize(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _objective_summary(rows: list, checkpoints: list[int], attr: str) -> dict:
    per_cp = []
    means = []
    for t in checkpoints:
        vals = np.array([getattr(r, attr) for r in rows if r.t == t], dtype=np.float64)
        mean = float(np.mean(vals))
        stderr = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        per_cp.append({"t": t, "mean": mean, "stderr": stderr, "n": int(len(vals))})
        means.append(mean)
    means = np.array(means)
    out = {"checkpoints": per_cp, "slope": None}
    usable = np.isfinite(means) & (means > 0)
    if usable.sum() >= 3:
        fit = empirical_regret_slope(np.array(checkpoints)[usable], means[usable])
        out["slope"] = {"value": fit.slope, "stderr": fit.stderr, "n_points": fit.n_points}
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run all replications and aggregate; deterministic given the config."""
    cfg.validate()
    workers = workers if workers is not None else cfg.workers
    env = build_environment(cfg)
    benchmark = env.borda_benchmark(cfg.T)
    jobs = [(cfg, rep, benchmark) for rep in range(cfg.replications)]
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_worker, jobs))
    else:
        outputs = [_worker(j) for j in jobs]

    rows: list[ResultRow] = []
    extras = []
    traces = []
    for rep_rows, extra in outputs:
        rows.extend(rep_rows)
        extras.append(extra)
        traces.append(extra.pop("trace", None))
    checkpoints = cfg.checkpoint_list()
    summary = {
        "algo": cfg.algo,
        "env": cfg.env,
        "K": cfg.K,
        "T": cfg.T,
        "m": cfg.m,
        "replications": cfg.replications,
        "base_seed": cfg.base_seed,
        "borda_benchmark_arm": benchmark,
        "borda_unshifted_scale": cfg.K / (cfg.K - 1),
        "condorcet": _objective_summary(rows, checkpoints, "regret_condorcet"),
        "borda": _objective_summary(rows, checkpoints, "regret_borda"),
    }
    if cfg.algo == "sa_midex":
        summary["sa_midex"] = {
            "switch_rounds": [e.get("switch_round") for e in extras],
            "final_active": [e.get("final_active") for e in extras],
        }
    return ExperimentResult(config=cfg, rows=rows, summary=summary, traces=traces)


TRACE_HEADER = "t,mode,branch,x,y,o,g,active_set_size,switched"


def write_outputs(result: ExperimentResult, out_dir) -> dict:
    """Write results.csv, summary.json, and any per-round traces; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    json_path = os.path.join(out_dir, "summary.json")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(result.csv_text())
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(result.summary_json())
    paths = {"csv": csv_path, "summary": json_path, "traces": []}
    for rep, trace in enumerate(result.traces):
        if trace is None:
            continue
        seed = result.config.base_seed + rep
        trace_path = os.path.join(out_dir, f"trace_seed{seed}.csv")
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(TRACE_HEADER + "\n")
            for t, mode, branch, x, y, o, g, n_active, switched in trace:
                fh.write(f"{t},{mode},{branch},{x},{y},{o},{g!r},{n_active},{int(switched)}\n")
        paths["traces"].append(trace_path)
    return paths


def compare_runs(rows: list, algorithms: tuple[str, str], objective: str = "condorcet") -> dict:
    """Paired per-seed comparison at the final checkpoint, with a sign test."""
    attr = "regret_condorcet" if objective == "condorcet" else "regret_borda"
    a, b = algorithms
    t_final = max(r.t for r in rows)
    vals_a = {r.seed: getattr(r, attr) for r in rows if r.algo == a and r.t == t_final}
    vals_b = {r.seed: getattr(r, attr) for r in rows if r.algo == b and r.t == t_final}
    if set(vals_a) != set(vals_b):
        raise ValueError(
            f"pairing error: seed sets differ between {a} ({sorted(vals_a)[:5]}...) "
            f"and {b} ({sorted(vals_b)[:5]}...)"
        )
    seeds = sorted(vals_a)
    diffs = np.array([vals_a[s] - vals_b[s] for s in seeds])
    wins_b = int((diffs > 0).sum())  # rounds where b had lower regret
    wins_a = int((diffs < 0).sum())
    n_eff = wins_a + wins_b
    p_value = _sign_test_p(min(wins_a, wins_b), n_eff)
    return {
        "objective": objective,
        "algorithms": [a, b],
        "t": int(t_final),
        "n_seeds": len(seeds),
        "mean_difference": float(diffs.mean()),
        "wins": {a: wins_a, b: wins_b, "ties": len(seeds) - n_eff},
        "sign_test_p": p_value,
    }


def _sign_test_p(k: int, n: int) -> float:
    """Two-sided sign-test p-value: 2 P[Binomial(n, 1/2) <= k], capped at 1."""
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0**n
    return min(1.0, 2.0 * tail)


def read_result_csv(path) -> list[ResultRow]:
    """Parse a harness CSV back into rows, validating the schema."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}: {lines[0] if lines else '(empty)'!r}")
    rows = []
    for ln in lines[1:]:
        if not ln:
            continue
        algo, env, seed, t, rc, rb, mode, act = ln.split(",")
        rows.append(
            ResultRow(algo, env, int(seed), int(t), float(rc), float(rb), mode, act)
        )
    return rows
