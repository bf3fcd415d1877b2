"""Successive convex approximation of the joint rate / beamforming / phase
design, and the resilience-aware alternating loop that drives it.

The non-convex SINR constraints are handled in slack form: a per-user slack
q bounds the SINR from below (`q <= SINR_k`), written as

    sum_{i != k} |e_k^H w_i|^2 + sigma^2 - |e_k^H w_k|^2 / q_k <= 0,

whose fractional term is replaced by its first-order Taylor lower bound at
the current iterate, giving a convex constraint that is tight at the
linearization point. The same treatment applies to the phase design after
scalarizing beamformers into the channels. Unit-modulus reflection entries
are pushed onto the unit circle by a linearized concave penalty plus
|v_m| <= 1 ball constraints.

Programs are built with noise-normalized channels (divided by the noise
standard deviation), so their SINR constraints equal the natural-unit
expressions divided by the noise power; this keeps the solver well scaled.
Rate variables inside programs are per-hertz (bits/s/Hz); design points
carry bits/s.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import conic
from .conic import AffineExpr, ConicProgram, LinearIneq, LogEpigraph, NormBall, QuadIneq, VarBlock
from .metrics import UNIT_MODULUS_TOL, DesignPoint, adaption_gap, sinr_all
from .system_model import ChannelState, SystemConfig, effective_channels
from .timing import WallClock

__all__ = [
    "SINR_SLACK_FLOOR",
    "ScaSettings",
    "IterateEvent",
    "build_beamforming_program",
    "build_phase_program",
    "extract_beamforming_point",
    "extract_phase_point",
    "rate_adaption",
    "initial_design_point",
    "alternating_optimize",
    "certify_design_point",
    "exact_sinr_residual",
    "linearized_sinr_residual",
    "exact_phase_residual",
    "linearized_phase_residual",
    "phase_penalty",
]

# Slack linearization floor: keeps the Taylor expansion defined for starved
# users without affecting healthy ones.
SINR_SLACK_FLOOR = 1e-9

_BEAMFORMING = "beamforming"
_PHASE = "phase"


@dataclass(frozen=True)
class ScaSettings:
    """Knobs of the alternating loop.

    inner_budget_w / inner_budget_v: fixed number of successive solves per
    subproblem visit. gap_threshold: stop once the adaption gap falls below
    it (checked after each budget). The unit-modulus penalty uses
    continuation: it starts at penalty_weight (None resolves to 1e-4 * K)
    and is multiplied by penalty_growth on every phase visit up to
    penalty_cap (None resolves to 100 * K); a large weight from the start
    would freeze the reflection phases, since the surrogate's curvature
    then dominates the objective gradient. inner_rel_tol / outer_rel_tol:
    optional relative-decrease early exits inside a budget / across rounds,
    for convergence-style schedules. phase_enabled=False restricts the loop
    to beamforming only.
    """

    inner_budget_w: int = 1
    inner_budget_v: int = 1
    gap_threshold: float = 1e-3
    penalty_weight: float | None = None
    first_subproblem: str = _BEAMFORMING
    max_outer_rounds: int = 12
    emit_intermediate: bool = True
    phase_enabled: bool = True
    inner_rel_tol: float | None = None
    outer_rel_tol: float | None = None
    max_penalty_restarts: int = 4
    penalty_growth: float = 2.0
    penalty_cap: float | None = None

    def __post_init__(self):
        if self.inner_budget_w < 1 or self.inner_budget_v < 1:
            raise ValueError("inner budgets must be >= 1")
        if self.gap_threshold < 0:
            raise ValueError("gap_threshold must be >= 0")
        if self.penalty_weight is not None and self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be positive")
        if self.penalty_growth < 1.0:
            raise ValueError("penalty_growth must be >= 1")
        if self.penalty_cap is not None and self.penalty_weight is not None:
            if self.penalty_cap < self.penalty_weight:
                raise ValueError("penalty_cap must be >= penalty_weight")
        if self.first_subproblem not in (_BEAMFORMING, _PHASE):
            raise ValueError("first_subproblem must be 'beamforming' or 'phase'")
        if self.max_outer_rounds < 1:
            raise ValueError("max_outer_rounds must be >= 1")
        if not self.phase_enabled and self.first_subproblem == _PHASE:
            raise ValueError("first_subproblem='phase' requires phase_enabled")


@dataclass(frozen=True)
class IterateEvent:
    """One inner solve: snapshot, its adaption gap, and timing."""

    outer_round: int
    inner_step: int
    subproblem: str  # 'w' or 'v'
    point: DesignPoint
    gap: float
    wall_time_s: float
    solve_status: str
    solve_time_s: float
    solver_iterations: int
    penalty_weight: float | None = None


# ---------------------------------------------------------------------------
# Program builders
# ---------------------------------------------------------------------------


def _gap_rate_blocks(config: SystemConfig) -> tuple[list[VarBlock], list]:
    """Shared (rate, snr, gap) blocks and their constraints.

    rate is per-hertz; gap_k epigraphs |B * rate_k / qos_k - 1|.
    """
    k = config.n_users
    scale = config.bandwidth_hz / config.qos_rate_bps  # (K,)
    blocks = [VarBlock("rate", k), VarBlock("snr", k), VarBlock("gap", k)]
    eye = np.eye(k)
    cons = [
        LinearIneq(
            AffineExpr({"rate": np.diag(scale), "gap": -eye}, const=-np.ones(k)), name="gap_hi"
        ),
        LinearIneq(
            AffineExpr({"rate": -np.diag(scale), "gap": -eye}, const=np.ones(k)), name="gap_lo"
        ),
        LinearIneq(AffineExpr({"snr": -eye}, const=np.zeros(k)), name="snr_nonneg"),
    ]
    for i in range(k):
        sel = np.zeros((1, k))
        sel[0, i] = 1.0
        cons.append(
            LogEpigraph(AffineExpr({"rate": sel}), AffineExpr({"snr": sel}), name=f"rate[{i}]")
        )
    return blocks, cons


def _select(dim: int, idx: int) -> np.ndarray:
    row = np.zeros((1, dim))
    row[0, idx] = 1.0
    return row


def build_beamforming_program(
    channels: ChannelState, linearization_point: DesignPoint, config: SystemConfig
) -> ConicProgram:
    """Convex beamforming subproblem at the given linearization point.

    Variables: w (flattened NL*K, user-major blocks), rate, snr, gap.
    The reflection vector is fixed from the point. SINR constraints are in
    noise units: the stored left side equals the natural expression divided
    by the noise power.
    """
    nl, k = config.total_antennas, config.n_users
    l = config.antennas_per_ap
    sigma = np.sqrt(config.noise_power_w)
    eff = effective_channels(channels, linearization_point.phases) / sigma  # (K, NL)
    wt = linearization_point.beamformers
    qt = np.maximum(linearization_point.slacks, SINR_SLACK_FLOOR)

    blocks, cons = _gap_rate_blocks(config)
    blocks.insert(0, VarBlock("w", nl * k, complex=True))

    for n in range(config.n_aps):
        rows = np.zeros((k * l, nl * k))
        for i in range(k):
            for a in range(l):
                rows[i * l + a, i * nl + n * l + a] = 1.0
        cons.append(
            QuadIneq(
                AffineExpr({"w": rows}, const=np.zeros(k * l)),
                AffineExpr(const=-config.max_power_w_per_ap[n]),
                name=f"power[{n}]",
            )
        )

    for u in range(k):
        e = eff[u]
        if not np.any(np.abs(e) > 0):
            # No signal path whatsoever: the exact constraint collapses to q_u <= 0.
            cons.append(LinearIneq(AffineExpr({"snr": _select(k, u)}), name=f"sinr[{u}]"))
            continue
        others = [i for i in range(k) if i != u]
        squares = None
        if others:
            mat = np.zeros((len(others), nl * k), dtype=complex)
            for row, i in enumerate(others):
                mat[row, i * nl : (i + 1) * nl] = e.conj()
            squares = AffineExpr({"w": mat}, const=np.zeros(len(others)))
        s_tilde = e.conj() @ wt[:, u]
        s_pow = float(np.abs(s_tilde) ** 2)
        w_row = np.zeros((1, nl * k), dtype=complex)
        w_row[0, u * nl : (u + 1) * nl] = -(2.0 / qt[u]) * np.conj(s_tilde) * e.conj()
        linear = AffineExpr(
            {"snr": _select(k, u) * (s_pow / qt[u] ** 2), "w": w_row}, const=1.0
        )
        cons.append(QuadIneq(squares, linear, name=f"sinr[{u}]"))

    objective = AffineExpr({"gap": np.ones((1, k))})
    return ConicProgram(tuple(blocks), objective, tuple(cons), name="beamforming-step")


def _scalarized(channels: ChannelState, beamformers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Channels seen through fixed beamformers, natural units.

    Returns (h_sc, g_sc) with h_sc[k, i] = w_i^H h_k and
    g_sc[k, i, :] = w_i^H H diag(g_k), so the end-to-end coupling of user
    k's channel with beamformer i is h_sc[k, i] + g_sc[k, i, :] @ v.
    """
    direct = channels.effective_direct_aggregate()  # (NL, K)
    h_sc = (beamformers.conj().T @ direct).T  # (K users, K beams)
    wh = beamformers.conj().T @ channels.ap_to_ris_aggregate()  # (K beams, M)
    g_sc = wh[None, :, :] * channels.ris_to_user[:, None, :]  # (K users, K beams, M)
    return h_sc, g_sc


def build_phase_program(
    channels: ChannelState,
    linearization_point: DesignPoint,
    config: SystemConfig,
    penalty_weight: float,
) -> ConicProgram:
    """Convex reflection-design subproblem at the given linearization point.

    Beamformers are fixed from the point. The objective adds the linearized
    unit-modulus penalty C * sum_m (1 + |v~_m|^2 - 2 Re{v~_m^* v_m}), which
    is tight (and zero) on the unit circle, and |v_m| <= 1 keeps the
    relaxation bounded.
    """
    m, k = config.n_ris_elements, config.n_users
    if m == 0:
        raise ValueError("phase design needs at least one reflecting element")
    if penalty_weight < 0:
        raise ValueError("penalty_weight must be nonnegative")
    sigma = np.sqrt(config.noise_power_w)
    vt = linearization_point.phases
    qt = np.maximum(linearization_point.slacks, SINR_SLACK_FLOOR)
    h_sc, g_sc = _scalarized(channels, linearization_point.beamformers)
    h_sc = h_sc / sigma
    g_sc = g_sc / sigma

    blocks, cons = _gap_rate_blocks(config)
    blocks.insert(0, VarBlock("v", m, complex=True))

    for em in range(m):
        row = np.zeros((1, m), dtype=complex)
        row[0, em] = 1.0
        cons.append(NormBall(AffineExpr({"v": row}), 1.0, name=f"ball[{em}]"))

    for u in range(k):
        if not (np.any(np.abs(h_sc[u, u]) > 0) or np.any(np.abs(g_sc[u, u]) > 0)):
            cons.append(LinearIneq(AffineExpr({"snr": _select(k, u)}), name=f"sinr[{u}]"))
            continue
        others = [i for i in range(k) if i != u]
        squares = None
        if others:
            mat = np.array([g_sc[u, i] for i in others], dtype=complex)
            const = np.array([h_sc[u, i] for i in others], dtype=complex)
            squares = AffineExpr({"v": mat}, const=const)
        phi_tilde = h_sc[u, u] + g_sc[u, u] @ vt
        s_pow = float(np.abs(phi_tilde) ** 2)
        coef = -(2.0 / qt[u]) * np.conj(phi_tilde)
        linear = AffineExpr(
            {"snr": _select(k, u) * (s_pow / qt[u] ** 2), "v": (coef * g_sc[u, u])[None, :]},
            const=1.0 + coef * h_sc[u, u],
        )
        cons.append(QuadIneq(squares, linear, name=f"sinr[{u}]"))

    objective = AffineExpr(
        {"gap": np.ones((1, k)), "v": (-2.0 * penalty_weight * vt.conj())[None, :]},
        const=penalty_weight * float(np.sum(1.0 + np.abs(vt) ** 2)),
    )
    return ConicProgram(tuple(blocks), objective, tuple(cons), name="phase-step")


# ---------------------------------------------------------------------------
# Point extraction and closed-form rate adaption
# ---------------------------------------------------------------------------


def _clamped_point(
    channels: ChannelState,
    config: SystemConfig,
    beamformers: np.ndarray,
    phases: np.ndarray,
    rates: np.ndarray,
    slacks: np.ndarray,
) -> DesignPoint:
    """Snap solver dust: slacks to [0, SINR], rates to [0, capacity]."""
    point = DesignPoint(beamformers, phases, np.maximum(rates, 0.0), np.maximum(slacks, 0.0))
    gamma = sinr_all(channels, point, config.noise_power_w)
    capacity = config.bandwidth_hz * np.log2(1.0 + gamma)
    return replace(
        point,
        slacks=np.minimum(point.slacks, gamma),
        rates=np.minimum(point.rates, capacity),
    )


def extract_beamforming_point(
    report: conic.SolveReport,
    linearization_point: DesignPoint,
    channels: ChannelState,
    config: SystemConfig,
) -> DesignPoint:
    nl, k = config.total_antennas, config.n_users
    w = report.primal["w"].reshape(k, nl).T
    rates = config.bandwidth_hz * report.primal["rate"].real
    return _clamped_point(channels, config, w, linearization_point.phases, rates, report.primal["snr"].real)


def extract_phase_point(
    report: conic.SolveReport,
    linearization_point: DesignPoint,
    channels: ChannelState,
    config: SystemConfig,
) -> DesignPoint:
    rates = config.bandwidth_hz * report.primal["rate"].real
    return _clamped_point(
        channels,
        config,
        linearization_point.beamformers,
        report.primal["v"],
        rates,
        report.primal["snr"].real,
    )


def rate_adaption(channels: ChannelState, point: DesignPoint, config: SystemConfig) -> DesignPoint:
    """Closed-form optimal rate reallocation under fixed (w, v).

    With the design fixed, the best feasible choice is q_k = SINR_k and
    r_k = min(qos_k, B log2(1 + SINR_k)); no solver involved.
    """
    gamma = sinr_all(channels, point, config.noise_power_w)
    rates = np.minimum(config.qos_rate_bps, config.bandwidth_hz * np.log2(1.0 + gamma))
    return replace(point, rates=rates, slacks=gamma)


def initial_design_point(
    channels: ChannelState, config: SystemConfig, phases: np.ndarray
) -> DesignPoint:
    """Feasible cold start: per-AP maximum-ratio beamformers scaled to the
    power budget with equal per-user share, rates from rate adaption."""
    nl, k, l = config.total_antennas, config.n_users, config.antennas_per_ap
    phases = np.asarray(phases, dtype=complex)
    eff = effective_channels(channels, phases)  # (K, NL)
    w = np.zeros((nl, k), dtype=complex)
    for n in range(config.n_aps):
        share = np.sqrt(config.max_power_w_per_ap[n] / k)
        for u in range(k):
            block = eff[u, n * l : (n + 1) * l]
            norm = np.linalg.norm(block)
            if norm > 0:
                w[n * l : (n + 1) * l, u] = share * block / norm
    point = DesignPoint(w, phases, np.zeros(k), np.zeros(k))
    return rate_adaption(channels, point, config)


def _sanitize_linearization(
    channels: ChannelState, point: DesignPoint, config: SystemConfig
) -> DesignPoint:
    """Make the point a valid linearization anchor.

    Ensures q <= SINR (so the approximated constraint is feasible at the
    anchor) and nudges any beamformer that has become orthogonal to its
    user's channel (e.g. after a blockage wiped its aimed-at links), since
    a zero desired-signal power degenerates the Taylor bound.
    """
    eff = effective_channels(channels, point.phases)  # (K, NL)
    w = None
    p_min = float(np.min(config.max_power_w_per_ap))
    for u in range(config.n_users):
        e = eff[u]
        e_norm2 = float(np.vdot(e, e).real)
        if e_norm2 == 0.0:
            continue
        wu = point.beamformers[:, u]
        signal = float(np.abs(np.vdot(e, wu)) ** 2)
        scale = e_norm2 * max(float(np.vdot(wu, wu).real), p_min / config.n_users * 1e-6)
        if signal > 1e-12 * scale:
            continue
        if w is None:
            w = point.beamformers.copy()
        w[:, u] = wu + 1e-3 * np.sqrt(p_min / config.n_users) * e / np.sqrt(e_norm2)
    if w is not None:
        l = config.antennas_per_ap
        for n in range(config.n_aps):
            block = w[n * l : (n + 1) * l, :]
            used = float(np.sum(np.abs(block) ** 2))
            cap = config.max_power_w_per_ap[n]
            if used > cap:
                block *= np.sqrt(cap / used)
        point = replace(point, beamformers=w)
    gamma = sinr_all(channels, point, config.noise_power_w)
    return replace(point, slacks=np.minimum(point.slacks, gamma))


# ---------------------------------------------------------------------------
# Constraint residual evaluators (natural units), used for tightness and
# certification checks.
# ---------------------------------------------------------------------------


def exact_sinr_residual(
    channels: ChannelState, point: DesignPoint, user: int, noise_power_w: float
) -> float:
    """Left side of the exact slack-form SINR constraint (<= 0 iff q <= SINR)."""
    e = effective_channels(channels, point.phases)[user]
    cross = np.abs(e.conj() @ point.beamformers) ** 2
    interference = float(cross.sum() - cross[user])
    q = point.slacks[user]
    if q <= 0:
        raise ValueError("exact residual needs a positive slack")
    return interference + noise_power_w - float(cross[user]) / q


def linearized_sinr_residual(
    channels: ChannelState,
    point: DesignPoint,
    linearization_point: DesignPoint,
    user: int,
    noise_power_w: float,
) -> float:
    """Left side of the Taylor-approximated SINR constraint, evaluated at
    `point`'s (w, q) with the reflection vector fixed from the anchor."""
    e = effective_channels(channels, linearization_point.phases)[user]
    cross = np.abs(e.conj() @ point.beamformers) ** 2
    interference = float(cross.sum() - cross[user])
    qt = max(linearization_point.slacks[user], SINR_SLACK_FLOOR)
    s_tilde = e.conj() @ linearization_point.beamformers[:, user]
    s_cur = e.conj() @ point.beamformers[:, user]
    lin = float(np.abs(s_tilde) ** 2) / qt**2 * point.slacks[user]
    lin -= 2.0 / qt * float(np.real(np.conj(s_tilde) * s_cur))
    return interference + noise_power_w + lin


def exact_phase_residual(
    channels: ChannelState, point: DesignPoint, user: int, noise_power_w: float
) -> float:
    """Exact slack-form SINR residual written in scalarized channels."""
    h_sc, g_sc = _scalarized(channels, point.beamformers)
    coupled = h_sc[user] + g_sc[user] @ point.phases  # (K,)
    power = np.abs(coupled) ** 2
    interference = float(power.sum() - power[user])
    q = point.slacks[user]
    if q <= 0:
        raise ValueError("exact residual needs a positive slack")
    return interference + noise_power_w - float(power[user]) / q


def linearized_phase_residual(
    channels: ChannelState,
    point: DesignPoint,
    linearization_point: DesignPoint,
    user: int,
    noise_power_w: float,
) -> float:
    """Taylor-approximated phase-side residual at `point`'s (v, q), with
    beamformers fixed from the anchor."""
    h_sc, g_sc = _scalarized(channels, linearization_point.beamformers)
    coupled = h_sc[user] + g_sc[user] @ point.phases
    power = np.abs(coupled) ** 2
    interference = float(power.sum() - power[user])
    qt = max(linearization_point.slacks[user], SINR_SLACK_FLOOR)
    phi_tilde = h_sc[user, user] + g_sc[user, user] @ linearization_point.phases
    phi_cur = h_sc[user, user] + g_sc[user, user] @ point.phases
    lin = float(np.abs(phi_tilde) ** 2) / qt**2 * point.slacks[user]
    lin -= 2.0 / qt * float(np.real(np.conj(phi_tilde) * phi_cur))
    return interference + noise_power_w + lin


def phase_penalty(phases: np.ndarray, penalty_weight: float) -> float:
    """Exact unit-modulus penalty C * sum_m (1 - |v_m|^2)."""
    return float(penalty_weight * np.sum(1.0 - np.abs(phases) ** 2))


# ---------------------------------------------------------------------------
# Alternating loop
# ---------------------------------------------------------------------------


def alternating_optimize(
    channels: ChannelState,
    initial: DesignPoint,
    settings: ScaSettings,
    config: SystemConfig,
    clock=None,
    solver: str | None = None,
) -> list[IterateEvent]:
    """Run the resilience-aware alternating loop from a feasible point.

    Each subproblem visit performs its fixed budget of successive solves,
    re-anchoring the approximation at every accepted iterate. After a
    budget, the loop stops if the adaption gap fell below the threshold,
    otherwise it hands the shared (rate, slack) block to the other
    subproblem. Solver failures keep the current anchor; three consecutive
    failures abort with the partial event list. If the reflection vector
    ends off the unit circle, extra phase visits at doubled penalty weights
    polish it onto the circle (bounded number of times).
    """
    clock = clock if clock is not None else WallClock()
    qos = config.qos_rate_bps
    base_penalty = (
        settings.penalty_weight if settings.penalty_weight is not None else 1e-4 * config.n_users
    )
    penalty_cap = (
        settings.penalty_cap if settings.penalty_cap is not None else 100.0 * config.n_users
    )
    penalty_cap = max(penalty_cap, base_penalty)
    phase_on = settings.phase_enabled and config.n_ris_elements > 0
    if settings.first_subproblem == _PHASE and not phase_on:
        raise ValueError("cannot start with the phase subproblem when it is disabled")

    point = _sanitize_linearization(channels, initial, config)
    events: list[IterateEvent] = []
    state = {"point": point, "failures": 0}

    def run_budget(phase_counter: int, tag: str, budget: int, penalty: float) -> bool:
        """One subproblem visit; returns False when the failure cap hit."""
        prev_obj = None
        pending = None
        for step in range(1, budget + 1):
            if tag == "w":
                program = build_beamforming_program(channels, state["point"], config)
            else:
                program = build_phase_program(channels, state["point"], config, penalty)
            report = conic.solve(program, solver=solver)
            now = clock.charge(tag, report.solve_time_s)
            weight = penalty if tag == "v" else None
            if report.status != "optimal":
                state["failures"] += 1
                events.append(
                    IterateEvent(
                        phase_counter,
                        step,
                        tag,
                        state["point"],
                        adaption_gap(state["point"].rates, qos),
                        now,
                        report.status,
                        report.solve_time_s,
                        report.iterations,
                        weight,
                    )
                )
                if state["failures"] >= 3:
                    return False
                continue
            state["failures"] = 0
            if tag == "w":
                state["point"] = extract_beamforming_point(report, state["point"], channels, config)
            else:
                state["point"] = extract_phase_point(report, state["point"], channels, config)
            gap = adaption_gap(state["point"].rates, qos)
            event = IterateEvent(
                phase_counter,
                step,
                tag,
                state["point"],
                gap,
                now,
                report.status,
                report.solve_time_s,
                report.iterations,
                weight,
            )
            if settings.emit_intermediate:
                events.append(event)
                pending = None
            else:
                pending = event
            obj = gap + (phase_penalty(state["point"].phases, penalty) if tag == "v" else 0.0)
            if (
                settings.inner_rel_tol is not None
                and prev_obj is not None
                and prev_obj - obj <= settings.inner_rel_tol * max(abs(prev_obj), 1e-12)
            ):
                break
            prev_obj = obj
        if pending is not None:
            events.append(pending)
        return True

    sub = settings.first_subproblem
    rounds = 0
    v_visits = 0
    phase_counter = 0
    gap_history: list[float] = []
    while rounds < settings.max_outer_rounds:
        rounds += 1
        phase_counter += 1
        tag = "w" if sub == _BEAMFORMING else "v"
        if tag == "v":
            penalty = min(base_penalty * settings.penalty_growth**v_visits, penalty_cap)
            v_visits += 1
        else:
            penalty = 0.0
        budget = settings.inner_budget_w if tag == "w" else settings.inner_budget_v
        if not run_budget(phase_counter, tag, budget, penalty):
            return events

        round_gap = adaption_gap(state["point"].rates, qos)
        gap_history.append(round_gap)
        if round_gap < settings.gap_threshold:
            break
        if settings.outer_rel_tol is not None:
            window = 2 if phase_on else 1
            if len(gap_history) > window:
                drop = gap_history[-1 - window] - gap_history[-1]
                if drop <= settings.outer_rel_tol * max(gap_history[-1 - window], 1e-12):
                    break
        if phase_on:
            sub = _PHASE if sub == _BEAMFORMING else _BEAMFORMING

    # Polish: if the loop stopped with the reflection off the unit circle
    # (e.g. the gap threshold hit before the penalty continuation caught
    # up), dedicated phase visits at escalating weights push it back on.
    polish = 0
    while phase_on and point_modulus(state["point"]) > UNIT_MODULUS_TOL:
        if polish >= settings.max_penalty_restarts:
            break
        phase_counter += 1
        penalty = penalty_cap * 2.0**polish
        if not run_budget(phase_counter, "v", settings.inner_budget_v, penalty):
            return events
        polish += 1

    if phase_on and point_modulus(state["point"]) <= UNIT_MODULUS_TOL:
        state["point"] = replace(state["point"], unit_modulus_enforced=True)
        if events:
            events[-1] = replace(events[-1], point=state["point"])
    return events


def point_modulus(point: DesignPoint) -> float:
    """Worst deviation of the reflection entries from the unit circle."""
    if point.phases.size == 0:
        return 0.0
    return float(np.max(np.abs(np.abs(point.phases) - 1.0)))


def certify_design_point(
    channels: ChannelState, point: DesignPoint, config: SystemConfig
) -> dict[str, float]:
    """Constraint slacks of a design point, recomputed from scratch.

    Returns the worst per-AP power excess (W), the worst rate excess over
    B log2(1 + SINR) relative to the capacity, the worst slack excess over
    the recomputed SINR, and the worst unit-modulus deviation.
    """
    l = config.antennas_per_ap
    power_excess = -np.inf
    for n in range(config.n_aps):
        used = float(np.sum(np.abs(point.beamformers[n * l : (n + 1) * l, :]) ** 2))
        power_excess = max(power_excess, used - config.max_power_w_per_ap[n])
    gamma = sinr_all(channels, point, config.noise_power_w)
    capacity = config.bandwidth_hz * np.log2(1.0 + gamma)
    rate_excess_rel = float(np.max((point.rates - capacity) / np.maximum(capacity, 1e-30)))
    slack_excess = float(np.max(point.slacks - gamma))
    modulus = float(np.max(np.abs(np.abs(point.phases) - 1.0))) if point.phases.size else 0.0
    return {
        "power_excess_w": power_excess,
        "rate_excess_rel": rate_excess_rel,
        "slack_excess": slack_excess,
        "modulus_deviation": modulus,
    }
