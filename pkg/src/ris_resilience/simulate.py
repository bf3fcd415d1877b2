"""End-to-end outage scenarios: pre-outage optimization, blockage injection,
immediate rate adaption, recovery mechanism, trace assembly, and the sweep
experiments (operating modes, resilience weights, element counts), with
seeded Monte Carlo replication and on-disk persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import (
    DesignPoint,
    ResilienceTrace,
    ResilienceWeights,
    TraceSample,
    adaption_gap,
    best_resilience,
    trace_from_csv,
    trace_to_csv,
)
from .sca import ScaSettings, alternating_optimize, initial_design_point, rate_adaption
from .system_model import (
    ChannelStreams,
    SystemConfig,
    apply_blockage,
    draw_blockage_mask,
    generate_channels,
    generate_topology,
)
from .timing import SyntheticClock, SyntheticCosts, WallClock

__all__ = [
    "MODES",
    "NAMED_WEIGHT_SETUPS",
    "Scenario",
    "ReplicationResult",
    "ExperimentResult",
    "WeightSweepResult",
    "ElementSweepResult",
    "run_scenario",
    "sweep_weights",
    "sweep_elements",
    "save_experiment",
    "load_experiment",
    "save_weight_sweep",
    "save_element_sweep",
]

MODE_NO_RIS = "no_ris"
MODE_RANDOM_RIS = "random_ris"
MODE_OPTIMIZED_RIS = "optimized_ris"
MODES = (MODE_NO_RIS, MODE_RANDOM_RIS, MODE_OPTIMIZED_RIS)

# (lambda_ada, lambda_rec) pairs with lambda_abs = 0.
NAMED_WEIGHT_SETUPS = {
    "time_sensitive": (0.85, 0.15),
    "quality_sensitive": (0.15, 0.85),
    "quality_time_sensitive": (0.5, 0.5),
}

# Stream purposes, keyed into the seed tree so that e.g. resizing the RIS
# never shifts the direct-link draws of a paired replication.
_PURPOSE_TOPOLOGY = 0
_PURPOSE_DIRECT = 1
_PURPOSE_AP_RIS = 2
_PURPOSE_RIS_USER = 3
_PURPOSE_BLOCKAGE = 4
_PURPOSE_PHASES = 5


@dataclass(frozen=True)
class Scenario:
    """One experiment description: configuration, RIS operating mode,
    optimizer settings, outage instant, scoring weights, and timing model."""

    config: SystemConfig
    mode: str
    settings: ScaSettings
    outage_time_s: float
    weights: ResilienceWeights
    replications: int = 1
    time_model: str = "synthetic"  # 'synthetic' | 'wall'
    synthetic_costs: SyntheticCosts = field(default_factory=SyntheticCosts)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.time_model not in ("synthetic", "wall"):
            raise ValueError("time_model must be 'synthetic' or 'wall'")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.outage_time_s < 0:
            raise ValueError("outage_time_s must be >= 0")


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    trace: ResilienceTrace | None
    pre_outage_gap: float | None
    excluded: bool = False
    exclusion_reason: str = ""
    solver_failures: int = 0
    n_clamped_distances: int = 0


@dataclass(frozen=True)
class ExperimentResult:
    scenario: Scenario
    replications: tuple[ReplicationResult, ...]
    metadata: dict

    @property
    def included(self) -> tuple[ReplicationResult, ...]:
        return tuple(r for r in self.replications if not r.excluded)

    @property
    def n_excluded(self) -> int:
        return sum(1 for r in self.replications if r.excluded)

    def aggregate(self) -> dict:
        """Summary statistics, recomputed from the stored traces."""
        qos = self.scenario.config.qos_rate_bps
        inc = self.included
        out = {
            "n_replications": len(self.replications),
            "n_included": len(inc),
            "n_excluded": self.n_excluded,
        }
        if not inc:
            return out
        pre = np.array([r.pre_outage_gap for r in inc])
        final = np.array([r.trace.samples[-1].gap for r in inc])
        best = np.array([min(s.gap for s in r.trace.samples) for r in inc])
        out.update(
            mean_pre_outage_gap=float(pre.mean()),
            std_pre_outage_gap=float(pre.std()),
            mean_final_gap=float(final.mean()),
            std_final_gap=float(final.std()),
            mean_best_gap=float(best.mean()),
            std_best_gap=float(best.std()),
        )
        t0 = self.scenario.weights.t0_tolerable_s
        setups = dict(NAMED_WEIGHT_SETUPS)
        setups["configured"] = (self.scenario.weights.lambda_ada, self.scenario.weights.lambda_rec)
        for name, (l_ada, l_rec) in setups.items():
            l_abs = 0.0 if name != "configured" else self.scenario.weights.lambda_abs
            w = ResilienceWeights(l_abs, l_ada, l_rec, t0)
            scores = np.array([best_resilience(r.trace, qos, w)[0] for r in inc])
            out[f"mean_best_r_{name}"] = float(scores.mean())
            out[f"std_best_r_{name}"] = float(scores.std())
        return out


def _streams(seed: int, rep: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, purpose)))


def _initial_phases(config: SystemConfig, mode: str, rng: np.random.Generator) -> np.ndarray:
    m = config.n_ris_elements
    if mode == MODE_NO_RIS or m == 0:
        return np.zeros(m, dtype=complex)
    if mode == MODE_RANDOM_RIS:
        return np.exp(2j * np.pi * rng.random(m))
    return np.ones(m, dtype=complex)


def _mode_settings(settings: ScaSettings, mode: str, for_pre_outage: bool) -> ScaSettings:
    phase_on = mode == MODE_OPTIMIZED_RIS
    first = settings.first_subproblem if phase_on else "beamforming"
    updated = replace(settings, phase_enabled=phase_on, first_subproblem=first)
    if for_pre_outage and updated.outer_rel_tol is None:
        # Pre-outage design is not time-scored; run it to stagnation.
        updated = replace(updated, outer_rel_tol=1e-4)
    return updated


def _make_clock(scenario: Scenario):
    if scenario.time_model == "synthetic":
        return SyntheticClock(scenario.synthetic_costs)
    return WallClock()


def run_replication(scenario: Scenario, rep: int) -> ReplicationResult:
    config = scenario.config
    seed = config.rng_seed
    topo = generate_topology(config, _streams(seed, rep, _PURPOSE_TOPOLOGY))
    channels = generate_channels(
        config,
        topo,
        ChannelStreams(
            direct=_streams(seed, rep, _PURPOSE_DIRECT),
            ap_to_ris=_streams(seed, rep, _PURPOSE_AP_RIS),
            ris_to_user=_streams(seed, rep, _PURPOSE_RIS_USER),
        ),
    )
    phases = _initial_phases(config, scenario.mode, _streams(seed, rep, _PURPOSE_PHASES))
    start = initial_design_point(channels, config, phases)

    pre_events = alternating_optimize(
        channels, start, _mode_settings(scenario.settings, scenario.mode, True), config
    )
    pre_ok = [e for e in pre_events if e.solve_status == "optimal"]
    if not pre_ok:
        return ReplicationResult(
            rep,
            None,
            None,
            excluded=True,
            exclusion_reason="no feasible pre-outage design",
            solver_failures=len(pre_events),
            n_clamped_distances=channels.n_clamped_distances,
        )
    # The operating allocation is always rate-adapted to the design in use;
    # this also makes the post-outage adaption a strict no-op when nothing
    # gets blocked.
    pre_point: DesignPoint = rate_adaption(channels, pre_ok[-1].point, config)
    pre_gap = adaption_gap(pre_point.rates, config.qos_rate_bps)

    mask = draw_blockage_mask(config, _streams(seed, rep, _PURPOSE_BLOCKAGE))
    blocked = apply_blockage(channels, mask)

    clock = _make_clock(scenario)
    adapted = rate_adaption(blocked, pre_point, config)
    t_adapt = clock.charge("adaption", 0.0)
    t0 = scenario.outage_time_s
    samples = [
        TraceSample(
            t0 + t_adapt,
            adapted.rates,
            adaption_gap(adapted.rates, config.qos_rate_bps),
            "adaption",
        )
    ]
    events = alternating_optimize(
        blocked, adapted, _mode_settings(scenario.settings, scenario.mode, False), config, clock
    )
    failures = sum(1 for e in events if e.solve_status != "optimal")
    for ev in events:
        samples.append(TraceSample(t0 + ev.wall_time_s, ev.point.rates, ev.gap, ev.subproblem))
    trace = ResilienceTrace(t0, tuple(samples), pre_point.rates)
    return ReplicationResult(
        rep, trace, pre_gap, solver_failures=failures,
        n_clamped_distances=channels.n_clamped_distances,
    )


def run_scenario(scenario: Scenario) -> ExperimentResult:
    """Run all replications and assemble the experiment result.

    Replications use disjoint seed streams derived from the configured root
    seed and are excluded only on solver failure, never on poor gap values.
    """
    reps = tuple(run_replication(scenario, i) for i in range(scenario.replications))
    metadata = {
        "package_version": __version__,
        "rng_seed": scenario.config.rng_seed,
        "mode": scenario.mode,
        "time_model": scenario.time_model,
        "pathloss": scenario.config.pathloss.describe(
            scenario.config.wavelength_m, scenario.config.ris_element_spacing_m
        ),
        "n_excluded": sum(1 for r in reps if r.excluded),
    }
    return ExperimentResult(scenario, reps, metadata)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSweepResult:
    scenario: Scenario
    experiment: ExperimentResult
    rows: tuple[dict, ...]  # one per (lambda_ada, lambda_rec) grid point


@dataclass(frozen=True)
class ElementSweepResult:
    scenario: Scenario
    element_counts: tuple[int, ...]
    rows: tuple[dict, ...]  # one per (element count, weight setup)
    experiments: dict  # element count -> ExperimentResult


def sweep_weights(scenario: Scenario, weight_pairs) -> WeightSweepResult:
    """Score one set of traces under a grid of (lambda_ada, lambda_rec)
    pairs (lambda_abs = 0); scoring is pure trace post-processing."""
    pairs = [(float(a), float(r)) for a, r in weight_pairs]
    if not pairs:
        raise ValueError("weight grid must be nonempty")
    for a, r in pairs:
        if abs(a + r - 1.0) > 1e-9:
            raise ValueError(f"weights ({a}, {r}) must sum to 1")
    result = run_scenario(scenario)
    qos = scenario.config.qos_rate_bps
    rows = []
    for l_ada, l_rec in pairs:
        w = ResilienceWeights(0.0, l_ada, l_rec, scenario.weights.t0_tolerable_s)
        scores, indices = [], []
        for rep in result.included:
            r, idx = best_resilience(rep.trace, qos, w)
            scores.append(r)
            indices.append(idx)
        rows.append(
            {
                "lambda_ada": l_ada,
                "lambda_rec": l_rec,
                "n_included": len(scores),
                "mean_best_r": float(np.mean(scores)) if scores else float("nan"),
                "std_best_r": float(np.std(scores)) if scores else float("nan"),
                "mean_best_index": float(np.mean(indices)) if indices else float("nan"),
            }
        )
    return WeightSweepResult(scenario, result, tuple(rows))


def sweep_elements(
    scenario: Scenario, element_counts, weight_setups: dict | None = None
) -> ElementSweepResult:
    """Re-run the scenario over RIS sizes with paired seeds (only RIS-side
    draws change) and score each with the named weight setups."""
    counts = [int(m) for m in element_counts]
    if not counts:
        raise ValueError("element count list must be nonempty")
    setups = weight_setups or NAMED_WEIGHT_SETUPS
    qos = scenario.config.qos_rate_bps
    rows = []
    experiments = {}
    for m in counts:
        config_m = replace(scenario.config, n_ris_elements=m)
        mode = MODE_NO_RIS if m == 0 else scenario.mode
        scenario_m = replace(scenario, config=config_m, mode=mode)
        result = run_scenario(scenario_m)
        experiments[m] = result
        for name, (l_ada, l_rec) in setups.items():
            w = ResilienceWeights(0.0, l_ada, l_rec, scenario.weights.t0_tolerable_s)
            scores = [best_resilience(rep.trace, qos, w)[0] for rep in result.included]
            rows.append(
                {
                    "n_elements": m,
                    "setup": name,
                    "lambda_ada": l_ada,
                    "lambda_rec": l_rec,
                    "n_included": len(scores),
                    "mean_best_r": float(np.mean(scores)) if scores else float("nan"),
                    "std_best_r": float(np.std(scores)) if scores else float("nan"),
                }
            )
    return ElementSweepResult(scenario, tuple(counts), tuple(rows), experiments)


# ---------------------------------------------------------------------------
# Persistence: a result directory holds meta.json, per-replication trace
# CSVs under traces/, and an aggregate CSV. All numbers are written with 17
# significant digits so identical runs produce identical bytes.
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _scenario_meta(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "system": {
            "n_aps": cfg.n_aps,
            "antennas_per_ap": cfg.antennas_per_ap,
            "n_users": cfg.n_users,
            "n_ris_elements": cfg.n_ris_elements,
            "bandwidth_hz": cfg.bandwidth_hz,
            "noise_power_w": cfg.noise_power_w,
            "max_power_w_per_ap": [float(p) for p in cfg.max_power_w_per_ap],
            "qos_rate_bps": [float(q) for q in cfg.qos_rate_bps],
            "wavelength_m": cfg.wavelength_m,
            "ris_element_spacing_m": cfg.ris_element_spacing_m,
            "area_half_m": cfg.area_half_m,
            "shadowing_std_db": cfg.shadowing_std_db,
            "blockage_prob": cfg.blockage_prob,
            "rng_seed": cfg.rng_seed,
        },
        "pathloss": cfg.pathloss.describe(cfg.wavelength_m, cfg.ris_element_spacing_m),
        "mode": scenario.mode,
        "outage_time_s": scenario.outage_time_s,
        "replications": scenario.replications,
        "time_model": scenario.time_model,
        "synthetic_costs": {
            "beamforming_s": scenario.synthetic_costs.beamforming_s,
            "phase_s": scenario.synthetic_costs.phase_s,
            "adaption_s": scenario.synthetic_costs.adaption_s,
        },
        "weights": {
            "lambda_abs": scenario.weights.lambda_abs,
            "lambda_ada": scenario.weights.lambda_ada,
            "lambda_rec": scenario.weights.lambda_rec,
            "t0_tolerable_s": scenario.weights.t0_tolerable_s,
        },
        "sca": {
            "inner_budget_w": scenario.settings.inner_budget_w,
            "inner_budget_v": scenario.settings.inner_budget_v,
            "gap_threshold": scenario.settings.gap_threshold,
            "penalty_weight": scenario.settings.penalty_weight,
            "first_subproblem": scenario.settings.first_subproblem,
            "max_outer_rounds": scenario.settings.max_outer_rounds,
            "emit_intermediate": scenario.settings.emit_intermediate,
            "inner_rel_tol": scenario.settings.inner_rel_tol,
            "outer_rel_tol": scenario.settings.outer_rel_tol,
        },
    }


def save_experiment(result: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": "run",
        "scenario": _scenario_meta(result.scenario),
        **result.metadata,
        "replication_index": [
            {
                "index": r.index,
                "excluded": r.excluded,
                "exclusion_reason": r.exclusion_reason,
                "solver_failures": r.solver_failures,
                "n_clamped_distances": r.n_clamped_distances,
                "pre_outage_gap": r.pre_outage_gap,
                "outage_time_s": None if r.trace is None else r.trace.outage_time_s,
                "pre_outage_rates": None
                if r.trace is None
                else [float(x) for x in r.trace.pre_outage_rates],
                "trace_file": None if r.trace is None else f"traces/rep_{r.index:03d}.csv",
            }
            for r in result.replications
        ],
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    qos = result.scenario.config.qos_rate_bps
    for r in result.replications:
        if r.trace is None:
            continue
        with open(out / "traces" / f"rep_{r.index:03d}.csv", "w", newline="") as fh:
            trace_to_csv(r.trace, qos, fh)
    agg = result.aggregate()
    with open(out / "aggregate.csv", "w", newline="") as fh:
        fh.write("metric,value\n")
        for key in sorted(agg):
            fh.write(f"{key},{_fmt(agg[key])}\n")
    return out


def load_experiment(result_dir) -> tuple[dict, list[tuple[dict, ResilienceTrace | None]]]:
    """Load meta.json plus (entry, trace) pairs; corrupt traces load as None."""
    result_dir = Path(result_dir)
    meta = json.loads((result_dir / "meta.json").read_text())
    loaded = []
    for entry in meta.get("replication_index", []):
        trace = None
        if entry.get("trace_file"):
            try:
                with open(result_dir / entry["trace_file"]) as fh:
                    trace = trace_from_csv(
                        fh, entry["outage_time_s"], np.asarray(entry["pre_outage_rates"])
                    )
            except (OSError, ValueError, IndexError):
                trace = None
        loaded.append((entry, trace))
    return meta, loaded


def save_weight_sweep(result: WeightSweepResult, out_dir) -> Path:
    out = save_experiment(result.experiment, out_dir)
    meta = json.loads((out / "meta.json").read_text())
    meta["kind"] = "sweep-weights"
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(out / "sweep_weights.csv", "w", newline="") as fh:
        fh.write("lambda_ada,lambda_rec,n_included,mean_best_r,std_best_r,mean_best_index\n")
        for row in result.rows:
            fh.write(
                ",".join(
                    [
                        _fmt(row["lambda_ada"]),
                        _fmt(row["lambda_rec"]),
                        str(row["n_included"]),
                        _fmt(row["mean_best_r"]),
                        _fmt(row["std_best_r"]),
                        _fmt(row["mean_best_index"]),
                    ]
                )
                + "\n"
            )
    return out


def save_element_sweep(result: ElementSweepResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m, experiment in result.experiments.items():
        save_experiment(experiment, out / f"elements_{m:04d}")
    meta = {
        "kind": "sweep-elements",
        "element_counts": list(result.element_counts),
        "scenario": _scenario_meta(result.scenario),
        "package_version": __version__,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(out / "sweep_elements.csv", "w", newline="") as fh:
        fh.write("n_elements,setup,lambda_ada,lambda_rec,n_included,mean_best_r,std_best_r\n")
        for row in result.rows:
            fh.write(
                ",".join(
                    [
                        str(row["n_elements"]),
                        row["setup"],
                        _fmt(row["lambda_ada"]),
                        _fmt(row["lambda_rec"]),
                        str(row["n_included"]),
                        _fmt(row["mean_best_r"]),
                        _fmt(row["std_best_r"]),
                    ]
                )
                + "\n"
            )
    return out
