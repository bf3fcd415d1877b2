"""Figure rendering for the report path: each plot-data CSV emitted by the
CLI gets a matching PNG rendered next to it."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = [
    "plot_adaption_vs_time",
    "plot_resilience_vs_weights",
    "plot_resilience_vs_elements",
]


def plot_adaption_vs_time(rows: list[dict], outage_time_ms: float, path) -> Path:
    """Recovery timelines: per-replication adaption vs time since start."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    by_rep: dict[int, list[dict]] = {}
    for row in rows:
        by_rep.setdefault(int(row["replication"]), []).append(row)
    for rep, samples in sorted(by_rep.items()):
        samples = sorted(samples, key=lambda r: r["time_ms"])
        ax.step(
            [s["time_ms"] for s in samples],
            [s["r_ada"] for s in samples],
            where="post",
            alpha=0.6,
            lw=1.0,
            label=f"rep {rep}" if len(by_rep) <= 6 else None,
        )
    ax.axvline(outage_time_ms, color="k", ls="--", lw=0.8)
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("adaption $r_{ada}$")
    ax.set_ylim(0.0, 1.05)
    if len(by_rep) <= 6:
        ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_resilience_vs_weights(rows: list[dict], path) -> Path:
    """Best resilience over the (lambda_ada, lambda_rec) grid."""
    rows = sorted(rows, key=lambda r: r["lambda_ada"])
    x = [r["lambda_ada"] for r in rows]
    y = [r["mean_best_r"] for r in rows]
    s = [r["std_best_r"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(x, y, "o-", lw=1.2)
    ax.fill_between(x, [a - b for a, b in zip(y, s)], [a + b for a, b in zip(y, s)], alpha=0.2)
    ax.set_xlabel(r"adaption weight $\lambda_2$ ($\lambda_3 = 1 - \lambda_2$)")
    ax.set_ylabel("best resilience $r$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_resilience_vs_elements(rows: list[dict], path) -> Path:
    """Best resilience over the RIS size, one line per weight setup."""
    setups: dict[str, list[dict]] = {}
    for row in rows:
        setups.setdefault(row["setup"], []).append(row)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for name, entries in sorted(setups.items()):
        entries = sorted(entries, key=lambda r: r["n_elements"])
        ax.plot(
            [e["n_elements"] for e in entries],
            [e["mean_best_r"] for e in entries],
            "o-",
            lw=1.2,
            label=name.replace("_", " "),
        )
    ax.set_xlabel("number of reflecting elements $M$")
    ax.set_ylabel("best resilience $r$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
