"""Command-line front end.

Subcommands: `run`, `sweep-weights`, `sweep-elements`, `trace-plotdata`.
Configuration comes from a YAML file in which every field is optional; the
effective configuration is echoed back in normalized form (linear units
only) for reproducibility. dBm / Mbps convenience keys are converted to
watts / bits per second at parse time.

Exit codes: 0 success, 2 configuration error, 3 all replications failed
(or all traces corrupt).
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .metrics import ResilienceWeights
from .sca import ScaSettings
from .simulate import (
    MODES,
    Scenario,
    load_experiment,
    run_scenario,
    save_element_sweep,
    save_experiment,
    save_weight_sweep,
    sweep_elements,
    sweep_weights,
)
from .system_model import PathlossConfig, SystemConfig
from .timing import SyntheticCosts

__all__ = ["main", "load_config", "normalized_config", "ConfigError"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


class ConfigError(Exception):
    pass


def _dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


# Canonical configuration with the standard scenario values; every key a
# config file may set appears here (None = resolved later / optional).
_DEFAULTS: dict = {
    "system": {
        "n_aps": 3,
        "antennas_per_ap": 14,
        "n_users": 14,
        "n_ris_elements": 196,
        "bandwidth_hz": 1.0e7,
        "noise_power_w": _dbm_to_watts(-100.0),
        "max_power_w_per_ap": 10.0,
        "qos_rate_bps": 1.2e7,
        "wavelength_m": 0.1,
        "ris_element_spacing_m": 0.025,
        "area_half_m": 250.0,
        "shadowing_std_db": 8.0,
        "blockage_prob": 0.12,
        "rng_seed": 1,
    },
    "pathloss": {
        "direct_exponent": 3.5,
        "direct_ref_gain": None,
        "ris_exponent": 2.0,
        "ris_ref_gain": None,
        "ref_distance_m": 1.0,
        "min_distance_m": 1.0,
    },
    "sca": {
        "inner_budget_w": 1,
        "inner_budget_v": 1,
        "gap_threshold": 1.0e-3,
        "penalty_weight": None,
        "first_subproblem": "beamforming",
        "max_outer_rounds": 12,
        "emit_intermediate": True,
        "inner_rel_tol": None,
        "outer_rel_tol": None,
    },
    "scenario": {
        "mode": "optimized_ris",
        "outage_time_s": 1.0,
        "replications": 10,
        "time_model": "synthetic",
        "synthetic_costs": {"beamforming_s": 0.025, "phase_s": 0.025, "adaption_s": 0.0},
    },
    "weights": {
        "lambda_abs": 0.0,
        "lambda_ada": 0.5,
        "lambda_rec": 0.5,
        "t0_tolerable_s": 0.05,
    },
    "sweeps": {
        "lambda_ada_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        "element_counts": [16, 64, 196],
    },
}

# Unit-convenience aliases: (section, alias key) -> (canonical key, converter).
_ALIASES = {
    ("system", "noise_dbm"): ("noise_power_w", _dbm_to_watts),
    ("system", "max_power_dbm_per_ap"): (
        "max_power_w_per_ap",
        lambda v: [_dbm_to_watts(x) for x in v] if isinstance(v, list) else _dbm_to_watts(v),
    ),
    ("system", "qos_rate_mbps"): (
        "qos_rate_bps",
        lambda v: [1e6 * x for x in v] if isinstance(v, list) else 1e6 * v,
    ),
    ("weights", "t0_tolerable_ms"): ("t0_tolerable_s", lambda v: v / 1000.0),
    ("scenario", "outage_time_ms"): ("outage_time_s", lambda v: v / 1000.0),
}


def _parse_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config parse error in {path}{where}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping at the top level")
    return data


def load_config(path=None) -> dict:
    """Merge a user config file onto the defaults, rejecting unknown keys
    and resolving unit aliases."""
    merged = copy.deepcopy(_DEFAULTS)
    if path is None:
        return merged
    user = _parse_yaml(Path(path))
    for section, content in user.items():
        if section not in merged:
            raise ConfigError(f"unknown config section '{section}'")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"config section '{section}' must be a mapping")
        for key, value in content.items():
            if (section, key) in _ALIASES:
                canonical, convert = _ALIASES[(section, key)]
                if key_present(user, section, canonical):
                    raise ConfigError(
                        f"config sets both '{section}.{key}' and '{section}.{canonical}'"
                    )
                try:
                    merged[section][canonical] = convert(value)
                except TypeError as exc:
                    raise ConfigError(f"bad value for '{section}.{key}': {value!r}") from exc
                continue
            if key not in merged[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
            if key == "synthetic_costs":
                if not isinstance(value, dict):
                    raise ConfigError("'scenario.synthetic_costs' must be a mapping")
                for ck in value:
                    if ck not in merged[section][key]:
                        raise ConfigError(f"unknown config key 'scenario.synthetic_costs.{ck}'")
                merged[section][key].update(value)
            else:
                merged[section][key] = value
    return merged


def key_present(user: dict, section: str, key: str) -> bool:
    return isinstance(user.get(section), dict) and key in user[section]


def build_objects(cfg: dict) -> tuple[Scenario, dict]:
    """Canonical config dict -> (Scenario, sweep grids)."""
    s = cfg["system"]
    p = cfg["pathloss"]
    try:
        pathloss = PathlossConfig(
            direct_exponent=float(p["direct_exponent"]),
            direct_ref_gain=None if p["direct_ref_gain"] is None else float(p["direct_ref_gain"]),
            ris_exponent=float(p["ris_exponent"]),
            ris_ref_gain=None if p["ris_ref_gain"] is None else float(p["ris_ref_gain"]),
            ref_distance_m=float(p["ref_distance_m"]),
            min_distance_m=float(p["min_distance_m"]),
        )
        config = SystemConfig(
            n_aps=int(s["n_aps"]),
            antennas_per_ap=int(s["antennas_per_ap"]),
            n_users=int(s["n_users"]),
            n_ris_elements=int(s["n_ris_elements"]),
            bandwidth_hz=float(s["bandwidth_hz"]),
            noise_power_w=float(s["noise_power_w"]),
            max_power_w_per_ap=np.asarray(s["max_power_w_per_ap"], dtype=float),
            qos_rate_bps=np.asarray(s["qos_rate_bps"], dtype=float),
            wavelength_m=float(s["wavelength_m"]),
            ris_element_spacing_m=float(s["ris_element_spacing_m"]),
            area_half_m=float(s["area_half_m"]),
            shadowing_std_db=float(s["shadowing_std_db"]),
            blockage_prob=float(s["blockage_prob"]),
            rng_seed=int(s["rng_seed"]),
            pathloss=pathloss,
        )
        a = cfg["sca"]
        settings = ScaSettings(
            inner_budget_w=int(a["inner_budget_w"]),
            inner_budget_v=int(a["inner_budget_v"]),
            gap_threshold=float(a["gap_threshold"]),
            penalty_weight=None if a["penalty_weight"] is None else float(a["penalty_weight"]),
            first_subproblem=str(a["first_subproblem"]),
            max_outer_rounds=int(a["max_outer_rounds"]),
            emit_intermediate=bool(a["emit_intermediate"]),
            inner_rel_tol=None if a["inner_rel_tol"] is None else float(a["inner_rel_tol"]),
            outer_rel_tol=None if a["outer_rel_tol"] is None else float(a["outer_rel_tol"]),
        )
        w = cfg["weights"]
        weights = ResilienceWeights(
            lambda_abs=float(w["lambda_abs"]),
            lambda_ada=float(w["lambda_ada"]),
            lambda_rec=float(w["lambda_rec"]),
            t0_tolerable_s=float(w["t0_tolerable_s"]),
        )
        sc = cfg["scenario"]
        costs = SyntheticCosts(
            beamforming_s=float(sc["synthetic_costs"]["beamforming_s"]),
            phase_s=float(sc["synthetic_costs"]["phase_s"]),
            adaption_s=float(sc["synthetic_costs"]["adaption_s"]),
        )
        scenario = Scenario(
            config=config,
            mode=str(sc["mode"]),
            settings=settings,
            outage_time_s=float(sc["outage_time_s"]),
            weights=weights,
            replications=int(sc["replications"]),
            time_model=str(sc["time_model"]),
            synthetic_costs=costs,
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return scenario, cfg["sweeps"]


def normalized_config(cfg: dict, scenario: Scenario) -> dict:
    """Canonical, fully-resolved echo of the configuration (linear units,
    vectors expanded); re-parsing it reproduces the same scenario."""
    out = copy.deepcopy(cfg)
    c = scenario.config
    out["system"]["max_power_w_per_ap"] = [float(x) for x in c.max_power_w_per_ap]
    out["system"]["qos_rate_bps"] = [float(x) for x in c.qos_rate_bps]
    out["system"]["noise_power_w"] = float(c.noise_power_w)
    out["system"]["bandwidth_hz"] = float(c.bandwidth_hz)
    return out


def _apply_overrides(cfg: dict, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg["system"]["rng_seed"] = int(args.seed)
    if getattr(args, "mode", None) is not None:
        cfg["scenario"]["mode"] = args.mode.replace("-", "_")
    if getattr(args, "time_model", None) is not None:
        cfg["scenario"]["time_model"] = {"wall": "wall", "synthetic": "synthetic"}[args.time_model]


def _echo_config(cfg_norm: dict, out_dir: Path | None) -> None:
    text = yaml.safe_dump(cfg_norm, sort_keys=True, default_flow_style=False)
    sys.stdout.write("# effective configuration (normalized)\n")
    sys.stdout.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config_normalized.yaml").write_text(text)


def _print_summary(result) -> None:
    agg = result.aggregate()
    print(f"mode={result.scenario.mode} replications={agg['n_replications']} "
          f"included={agg['n_included']} excluded={agg['n_excluded']}")
    if agg["n_included"] == 0:
        print("all replications failed")
        return
    print(f"adaption gap : pre-outage mean={agg['mean_pre_outage_gap']:.4f} "
          f"post-outage final={agg['mean_final_gap']:.4f} best={agg['mean_best_gap']:.4f}")
    parts = []
    for name in ("time_sensitive", "quality_sensitive", "quality_time_sensitive", "configured"):
        parts.append(f"{name}={agg[f'mean_best_r_{name}']:.4f}")
    print("best r       : " + " ".join(parts))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    scenario, _ = build_objects(cfg)
    out_dir = Path(args.out) if args.out else None
    _echo_config(normalized_config(cfg, scenario), out_dir)
    result = run_scenario(scenario)
    if out_dir is not None:
        save_experiment(result, out_dir)
        print(f"result written to {out_dir}")
    _print_summary(result)
    return EXIT_ALL_FAILED if len(result.included) == 0 else EXIT_OK


def cmd_sweep_weights(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    scenario, sweeps = build_objects(cfg)
    grid = [(float(l), 1.0 - float(l)) for l in sweeps["lambda_ada_grid"]]
    out_dir = Path(args.out) if args.out else None
    _echo_config(normalized_config(cfg, scenario), out_dir)
    result = sweep_weights(scenario, grid)
    if out_dir is not None:
        save_weight_sweep(result, out_dir)
        print(f"result written to {out_dir}")
    for row in result.rows:
        print(f"lambda_ada={row['lambda_ada']:.3f} lambda_rec={row['lambda_rec']:.3f} "
              f"mean_best_r={row['mean_best_r']:.4f} (n={row['n_included']})")
    return EXIT_ALL_FAILED if len(result.experiment.included) == 0 else EXIT_OK


def cmd_sweep_elements(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    scenario, sweeps = build_objects(cfg)
    counts = [int(m) for m in sweeps["element_counts"]]
    out_dir = Path(args.out) if args.out else None
    _echo_config(normalized_config(cfg, scenario), out_dir)
    result = sweep_elements(scenario, counts)
    if out_dir is not None:
        save_element_sweep(result, out_dir)
        print(f"result written to {out_dir}")
    for row in result.rows:
        print(f"M={row['n_elements']:4d} {row['setup']:24s} "
              f"mean_best_r={row['mean_best_r']:.4f} (n={row['n_included']})")
    any_included = any(row["n_included"] > 0 for row in result.rows)
    return EXIT_OK if any_included else EXIT_ALL_FAILED


def _fmt17(x) -> str:
    return format(float(x), ".17g")


def cmd_trace_plotdata(args) -> int:
    result_dir = Path(args.result_dir)
    meta_path = result_dir / "meta.json"
    if not meta_path.exists():
        print(f"error: {meta_path} not found", file=sys.stderr)
        return EXIT_CONFIG
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: cannot parse {meta_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else result_dir / "plotdata"
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = meta.get("kind", "run")
    render = not args.no_figures

    if kind in ("run", "sweep-weights"):
        status = _plotdata_traces(result_dir, meta, out_dir, render)
        if status != EXIT_OK:
            return status
    if kind == "sweep-weights":
        return _plotdata_weight_rows(result_dir, out_dir, render)
    if kind == "sweep-elements":
        return _plotdata_element_rows(result_dir, out_dir, render)
    return EXIT_OK


def _plotdata_traces(result_dir: Path, meta: dict, out_dir: Path, render: bool) -> int:
    _, loaded = load_experiment(result_dir)
    qos = np.asarray(meta["scenario"]["system"]["qos_rate_bps"], dtype=float)
    rows = []
    n_corrupt = 0
    n_with_file = 0
    for entry, trace in loaded:
        if not entry.get("trace_file"):
            continue
        n_with_file += 1
        if trace is None:
            print(f"warning: skipping corrupt trace {entry['trace_file']}", file=sys.stderr)
            n_corrupt += 1
            continue
        for sample in trace.samples:
            rows.append(
                {
                    "replication": entry["index"],
                    "time_ms": sample.time_s * 1000.0,
                    "psi": sample.gap,
                    "r_ada": float(np.mean(sample.rates / qos)),
                    "label": sample.label,
                }
            )
    if n_with_file > 0 and n_corrupt == n_with_file:
        print("error: all traces corrupt", file=sys.stderr)
        return EXIT_ALL_FAILED
    with open(out_dir / "adaption_vs_time.csv", "w", newline="") as fh:
        fh.write("replication,time_ms,psi,r_ada,label\n")
        for r in rows:
            fh.write(
                f"{r['replication']},{_fmt17(r['time_ms'])},{_fmt17(r['psi'])},"
                f"{_fmt17(r['r_ada'])},{r['label']}\n"
            )
    if render and rows:
        from .plotting import plot_adaption_vs_time

        outage_ms = 1000.0 * float(meta["scenario"]["outage_time_s"])
        plot_adaption_vs_time(rows, outage_ms, out_dir / "adaption_vs_time.png")
    return EXIT_OK


def _plotdata_weight_rows(result_dir: Path, out_dir: Path, render: bool) -> int:
    src = result_dir / "sweep_weights.csv"
    if not src.exists():
        print(f"error: {src} not found", file=sys.stderr)
        return EXIT_CONFIG
    rows = _read_csv_dicts(src)
    with open(out_dir / "r_vs_lambda.csv", "w", newline="") as fh:
        fh.write("lambda_ada,lambda_rec,mean_best_r,std_best_r,mean_best_index\n")
        for r in rows:
            fh.write(
                f"{r['lambda_ada']},{r['lambda_rec']},{r['mean_best_r']},"
                f"{r['std_best_r']},{r['mean_best_index']}\n"
            )
    if render and rows:
        from .plotting import plot_resilience_vs_weights

        plot_resilience_vs_weights(
            [
                {
                    "lambda_ada": float(r["lambda_ada"]),
                    "mean_best_r": float(r["mean_best_r"]),
                    "std_best_r": float(r["std_best_r"]),
                }
                for r in rows
            ],
            out_dir / "r_vs_lambda.png",
        )
    return EXIT_OK


def _plotdata_element_rows(result_dir: Path, out_dir: Path, render: bool) -> int:
    src = result_dir / "sweep_elements.csv"
    if not src.exists():
        print(f"error: {src} not found", file=sys.stderr)
        return EXIT_CONFIG
    rows = _read_csv_dicts(src)
    with open(out_dir / "r_vs_elements.csv", "w", newline="") as fh:
        fh.write("n_elements,setup,lambda_ada,lambda_rec,mean_best_r,std_best_r\n")
        for r in rows:
            fh.write(
                f"{r['n_elements']},{r['setup']},{r['lambda_ada']},{r['lambda_rec']},"
                f"{r['mean_best_r']},{r['std_best_r']}\n"
            )
    if render and rows:
        from .plotting import plot_resilience_vs_elements

        plot_resilience_vs_elements(
            [
                {
                    "n_elements": int(r["n_elements"]),
                    "setup": r["setup"],
                    "mean_best_r": float(r["mean_best_r"]),
                }
                for r in rows
            ],
            out_dir / "r_vs_elements.png",
        )
    return EXIT_OK


def _read_csv_dicts(path: Path) -> list[dict]:
    import csv as _csv

    with open(path, newline="") as fh:
        return list(_csv.DictReader(fh))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ris-resilience",
        description="RIS-assisted cell-free MIMO downlink resilience simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def _common(p, with_out_default=False):
        p.add_argument("--config", help="YAML scenario configuration (defaults apply without it)")
        p.add_argument("--seed", type=int, help="override system.rng_seed")
        p.add_argument("--out", help="result output directory")
        p.add_argument("--time-model", choices=["wall", "synthetic"], dest="time_model")
        p.add_argument(
            "--mode", choices=["no-ris", "random-ris", "optimized-ris"], help="RIS operating mode"
        )

    _common(sub.add_parser("run", help="run one outage scenario"))
    _common(sub.add_parser("sweep-weights", help="score traces over a weight grid"))
    _common(sub.add_parser("sweep-elements", help="re-run over RIS sizes with paired seeds"))

    p_plot = sub.add_parser("trace-plotdata", help="emit tidy plot CSVs (and figures) from a result directory")
    p_plot.add_argument("result_dir", help="result directory produced by run/sweep commands")
    p_plot.add_argument("--out", help="output directory (default: <result>/plotdata)")
    p_plot.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep-weights":
            return cmd_sweep_weights(args)
        if args.command == "sweep-elements":
            return cmd_sweep_elements(args)
        if args.command == "trace-plotdata":
            return cmd_trace_plotdata(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    raise SystemExit(main())
