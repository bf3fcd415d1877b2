"""Pure evaluation of SINR, achievable rates, the network-wide adaption gap,
and the resilience score with its absorption / adaption / time-to-recovery
components. Everything here is side-effect free and reentrant."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .system_model import ChannelState, SystemConfig, effective_channels

__all__ = [
    "UNIT_MODULUS_TOL",
    "DesignPoint",
    "ResilienceWeights",
    "TraceSample",
    "ResilienceTrace",
    "sinr",
    "sinr_all",
    "achievable_rate",
    "adaption_gap",
    "resilience_components",
    "best_resilience",
    "trace_to_csv",
    "trace_from_csv",
]

# Penalty methods reach the unit-modulus manifold only approximately.
UNIT_MODULUS_TOL = 1e-2

_SLACK_DUST = 1e-9


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DesignPoint:
    """One joint design iterate: beamformers (NL x K, column k serves user
    k), complex reflection vector, allocated rates (bits/s), and SINR slack
    values."""

    beamformers: np.ndarray  # (NL, K) complex
    phases: np.ndarray  # (M,) complex
    rates: np.ndarray  # (K,) float
    slacks: np.ndarray  # (K,) float
    unit_modulus_enforced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beamformers", _frozen(self.beamformers, complex))
        object.__setattr__(self, "phases", _frozen(self.phases, complex))
        object.__setattr__(self, "rates", _frozen(self.rates, float))
        object.__setattr__(self, "slacks", _frozen(self.slacks, float))
        if self.beamformers.ndim != 2:
            raise ValueError("beamformers must be an (NL, K) matrix")
        k = self.beamformers.shape[1]
        if self.rates.shape != (k,) or self.slacks.shape != (k,):
            raise ValueError("rates and slacks must have length K")
        if np.any(self.slacks < -_SLACK_DUST):
            raise ValueError("slacks must be nonnegative")
        if np.any(self.slacks < 0):
            cleaned = np.maximum(self.slacks, 0.0)
            object.__setattr__(self, "slacks", _frozen(cleaned, float))
        if self.unit_modulus_enforced and self.phases.size:
            worst = np.max(np.abs(np.abs(self.phases) - 1.0))
            if worst > UNIT_MODULUS_TOL:
                raise ValueError(
                    f"unit_modulus_enforced point violates |v_m|=1 by {worst:.3g}"
                )

    def matches(self, config: SystemConfig) -> bool:
        return (
            self.beamformers.shape == (config.total_antennas, config.n_users)
            and self.phases.shape == (config.n_ris_elements,)
        )


@dataclass(frozen=True)
class ResilienceWeights:
    """Operator weighting of absorption, adaption, and time-to-recovery,
    plus the tolerable degradation time in seconds."""

    lambda_abs: float
    lambda_ada: float
    lambda_rec: float
    t0_tolerable_s: float

    def __post_init__(self):
        lams = (self.lambda_abs, self.lambda_ada, self.lambda_rec)
        if any(l < 0 for l in lams):
            raise ValueError("weights must be nonnegative")
        if abs(sum(lams) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if self.t0_tolerable_s < 0:
            raise ValueError("t0_tolerable_s must be >= 0")


@dataclass(frozen=True)
class TraceSample:
    """One recovery-timeline point: absolute time, allocated per-user rates,
    the adaption gap at that point, and a mechanism/iteration tag."""

    time_s: float
    rates: np.ndarray  # (K,)
    gap: float
    label: str

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates, float))


@dataclass(frozen=True)
class ResilienceTrace:
    """Timestamped recovery timeline anchored at the outage time."""

    outage_time_s: float
    samples: tuple
    pre_outage_rates: np.ndarray  # (K,)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "pre_outage_rates", _frozen(self.pre_outage_rates, float))
        times = [s.time_s for s in self.samples]
        if times and times[0] < self.outage_time_s:
            raise ValueError("first sample must not precede the outage time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")


def sinr_all(channels: ChannelState, point: DesignPoint, noise_power_w: float) -> np.ndarray:
    """Per-user SINR under the given beamformers and reflection vector."""
    eff = effective_channels(channels, point.phases)  # (K, NL)
    cross = eff.conj() @ point.beamformers  # (K, K): [k, i] = e_k^H w_i
    power = np.abs(cross) ** 2
    signal = np.diag(power).copy()
    interference = power.sum(axis=1) - signal
    return signal / (interference + noise_power_w)


def sinr(channels: ChannelState, point: DesignPoint, user: int, noise_power_w: float) -> float:
    """SINR of one user: |e_k^H w_k|^2 / (sum_{i != k} |e_k^H w_i|^2 + noise)."""
    return float(sinr_all(channels, point, noise_power_w)[user])


def achievable_rate(
    channels: ChannelState, point: DesignPoint, user: int, bandwidth_hz: float, noise_power_w: float
) -> float:
    """Shannon rate B log2(1 + SINR_k) in bits/s."""
    return float(bandwidth_hz * np.log2(1.0 + sinr(channels, point, user, noise_power_w)))


def adaption_gap(rates: np.ndarray, qos: np.ndarray) -> float:
    """Network-wide adaption gap: sum of absolute relative QoS deviations."""
    rates = np.asarray(rates, dtype=float)
    qos = np.asarray(qos, dtype=float)
    if np.any(qos <= 0):
        raise ValueError("qos rates must be positive")
    return float(np.sum(np.abs(rates / qos - 1.0)))


def resilience_components(
    trace: ResilienceTrace,
    recovery_index: int,
    qos: np.ndarray,
    weights: ResilienceWeights,
) -> tuple[float, float, float, float]:
    """Absorption, adaption, time-to-recovery, and their weighted combination
    when the sample at `recovery_index` is taken as the recovery point."""
    qos = np.asarray(qos, dtype=float)
    sample = trace.samples[recovery_index]
    dt = sample.time_s - trace.outage_time_s
    if dt < 0:
        raise ValueError("recovery time precedes the outage time")
    r_abs = float(np.mean(trace.pre_outage_rates / qos))
    r_ada = float(np.mean(sample.rates / qos))
    t0 = weights.t0_tolerable_s
    r_rec = 1.0 if dt <= t0 else t0 / dt
    r = weights.lambda_abs * r_abs + weights.lambda_ada * r_ada + weights.lambda_rec * r_rec
    return r_abs, r_ada, r_rec, r


def best_resilience(
    trace: ResilienceTrace, qos: np.ndarray, weights: ResilienceWeights
) -> tuple[float, int]:
    """Score every sample as the recovery point and return the best score and
    its index (earliest sample wins ties)."""
    if not trace.samples:
        raise ValueError("trace has no samples")
    best_r, best_idx = -np.inf, 0
    for idx in range(len(trace.samples)):
        _, _, _, r = resilience_components(trace, idx, qos, weights)
        if r > best_r:
            best_r, best_idx = r, idx
    return best_r, best_idx


# ---------------------------------------------------------------------------
# Trace CSV: header row `time_s,psi,r_ada,label,r_1..r_K`, floats with 17
# significant digits. Outage time and pre-outage rates live in the result
# metadata, not in the CSV.
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trace_to_csv(trace: ResilienceTrace, qos: np.ndarray, fh=None) -> str | None:
    qos = np.asarray(qos, dtype=float)
    buf = fh if fh is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    k = len(qos)
    writer.writerow(["time_s", "psi", "r_ada", "label"] + [f"r_{i + 1}" for i in range(k)])
    for s in trace.samples:
        r_ada = float(np.mean(s.rates / qos))
        writer.writerow([_fmt(s.time_s), _fmt(s.gap), _fmt(r_ada), s.label] + [_fmt(r) for r in s.rates])
    if fh is None:
        return buf.getvalue()
    return None


def trace_from_csv(text_or_fh, outage_time_s: float, pre_outage_rates) -> ResilienceTrace:
    fh = io.StringIO(text_or_fh) if isinstance(text_or_fh, str) else text_or_fh
    reader = csv.reader(fh)
    header = next(reader)
    if header[:4] != ["time_s", "psi", "r_ada", "label"]:
        raise ValueError("unrecognized trace CSV header")
    samples = []
    for row in reader:
        if not row:
            continue
        time_s, psi, _r_ada, label = row[0], row[1], row[2], row[3]
        rates = np.array([float(x) for x in row[4:]])
        samples.append(TraceSample(float(time_s), rates, float(psi), label))
    return ResilienceTrace(outage_time_s, tuple(samples), np.asarray(pre_outage_rates, dtype=float))
