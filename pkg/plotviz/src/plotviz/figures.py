"""Regret curves and mode timelines from harness CSVs.

Figures are pure functions of the input CSVs and flags: fixed style, colors
keyed by sorted algorithm name, scrubbed image metadata, and a sidecar
manifest JSON (written next to the image) describing everything the figure
shows.  Golden-file tests pin the manifest bytes.

This package deliberately knows only the documented CSV schema; it never
imports the simulation library.
"""

from __future__ import annotations

import csv
import json
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CSV_HEADER = "algo,env,seed,t,regret_condorcet,regret_borda,mode,active_set_size"
COLUMNS = CSV_HEADER.split(",")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
IMAGE_METADATA = {"Software": "plotviz"}


class SchemaError(ValueError):
    """Input CSV does not match the documented schema; names the offender."""


class NoDataError(ValueError):
    """Input CSV has a header but no rows."""


class ValidationError(ValueError):
    """Rows are schema-valid but semantically corrupt (e.g. mode regressions)."""


def read_rows(path) -> list[dict]:
    """Read one harness CSV, enforcing the exact column set."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {CSV_HEADER!r}")
        if header != COLUMNS:
            missing = [c for c in COLUMNS if c not in header]
            extra = [c for c in header if c not in COLUMNS]
            if missing:
                raise SchemaError(f"{path}: missing column(s) {missing}")
            if extra:
                raise SchemaError(f"{path}: unexpected column(s) {extra}")
            raise SchemaError(f"{path}: columns out of order: {header}")
        rows = []
        for line in reader:
            if not line:
                continue
            rows.append(
                {
                    "algo": line[0],
                    "env": line[1],
                    "seed": int(line[2]),
                    "t": int(line[3]),
                    "regret_condorcet": float(line[4]),
                    "regret_borda": float(line[5]),
                    "mode": line[6],
                    "active_set_size": line[7],
                }
            )
    if not rows:
        raise NoDataError(f"{path}: no data rows")
    return rows


def _fmt(values) -> list[str]:
    # repr keeps the manifest byte-stable and round-trippable.
    return [repr(float(v)) for v in values]


def _slope(ts, means):
    xs = [math.log(t) for t, m in zip(ts, means) if m > 0]
    ys = [math.log(m) for m in means if m > 0]
    if len(xs) < 3:
        return None
    n = len(xs)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    slope = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys)) / sxx
    return slope


def plot_regret(csv_paths, objective: str, out, loglog: bool = False) -> dict:
    """One mean curve per algorithm with a stderr band; writes image + manifest."""
    if objective not in ("condorcet", "borda"):
        raise ValueError(f"objective must be condorcet or borda, got {objective!r}")
    rows = []
    for path in csv_paths:
        rows.extend(read_rows(path))
    key = f"regret_{objective}"
    algos = sorted({r["algo"] for r in rows})

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    manifest_curves = []
    for idx, algo in enumerate(algos):
        sub = [r for r in rows if r["algo"] == algo]
        ts = sorted({r["t"] for r in sub})
        means, errs = [], []
        n_seeds = len({r["seed"] for r in sub})
        for t in ts:
            vals = np.array([r[key] for r in sub if r["t"] == t])
            means.append(float(np.mean(vals)))
            errs.append(float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0)
        color = PALETTE[idx % len(PALETTE)]
        ax.plot(ts, means, color=color, label=algo, linewidth=1.6)
        lo = np.array(means) - np.array(errs)
        hi = np.array(means) + np.array(errs)
        ax.fill_between(ts, lo, hi, color=color, alpha=0.2, linewidth=0)
        entry = {
            "algo": algo,
            "color": color,
            "n_seeds": n_seeds,
            "t": ts,
            "mean": _fmt(means),
            "stderr": _fmt(errs),
        }
        if loglog:
            slope = _slope(ts, means)
            entry["slope"] = repr(slope) if slope is not None else None
            if slope is not None:
                ax.annotate(
                    f"{algo}: slope {slope:.3f}",
                    xy=(0.02, 0.95 - 0.06 * idx),
                    xycoords="axes fraction",
                    fontsize=8,
                    color=color,
                )
        manifest_curves.append(entry)
    if loglog:
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel(f"cumulative {objective} regret")
    ax.legend(loc="upper left" if not loglog else "lower right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, metadata=IMAGE_METADATA)
    plt.close(fig)

    manifest = {
        "figure": "regret",
        "objective": objective,
        "loglog": bool(loglog),
        "inputs": len(csv_paths),
        "algorithms": algos,
        "curves": manifest_curves,
    }
    _write_manifest(out, manifest)
    return manifest


def plot_mode_timeline(csv_path, out) -> dict:
    """Per-seed switch-round raster plus the active-set-size trajectory."""
    rows = read_rows(csv_path)
    if all(r["mode"] == "" for r in rows):
        raise SchemaError(f"{csv_path}: mode column carries no values (not a sa_midex run)")
    seeds = sorted({r["seed"] for r in rows})
    switch_at = {}
    sizes_by_t: dict[int, list[int]] = {}
    for seed in seeds:
        sub = sorted((r for r in rows if r["seed"] == seed), key=lambda r: r["t"])
        seen_adv = False
        for r in sub:
            if r["mode"] == "adv":
                if not seen_adv:
                    switch_at[seed] = r["t"]
                seen_adv = True
            elif r["mode"] == "stoch" and seen_adv:
                raise ValidationError(
                    f"{csv_path}: seed {seed} reverts to stochastic mode at t={r['t']} "
                    "(mode must be monotone)"
                )
            if r["active_set_size"]:
                sizes_by_t.setdefault(r["t"], []).append(int(r["active_set_size"]))

    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6.4, 5.2), sharex=True)
    for i, seed in enumerate(seeds):
        if seed in switch_at:
            ax0.plot(switch_at[seed], i, marker="|", markersize=10, color="#d62728")
    ax0.set_yticks(range(len(seeds)))
    ax0.set_yticklabels([str(s) for s in seeds], fontsize=7)
    ax0.set_ylabel("seed (switch round)")
    ax0.grid(True, alpha=0.3)
    ts = sorted(sizes_by_t)
    mean_sizes = [float(np.mean(sizes_by_t[t])) for t in ts]
    ax1.plot(ts, mean_sizes, color="#1f77b4", linewidth=1.6)
    ax1.set_xlabel("round")
    ax1.set_ylabel("mean active-set size")
    ax1.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, metadata=IMAGE_METADATA)
    plt.close(fig)

    manifest = {
        "figure": "mode_timeline",
        "seeds": seeds,
        "switch_rounds": {str(s): switch_at.get(s) for s in seeds},
        "active_set": {"t": ts, "mean": _fmt(mean_sizes)},
    }
    _write_manifest(out, manifest)
    return manifest


def _manifest_path(out) -> str:
    return str(out) + ".json"


def _write_manifest(out, manifest: dict) -> None:
    with open(_manifest_path(out), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
