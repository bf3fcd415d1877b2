"""SINR/rate evaluation, adaption gap, resilience scoring, trace CSV."""

import io

import numpy as np
import pytest

from conftest import random_channels, unit_config
from ris_resilience.metrics import (
    DesignPoint,
    ResilienceTrace,
    ResilienceWeights,
    TraceSample,
    achievable_rate,
    adaption_gap,
    best_resilience,
    resilience_components,
    sinr,
    sinr_all,
    trace_from_csv,
    trace_to_csv,
)
from ris_resilience.system_model import ChannelState


def scalar_channels(h: complex) -> ChannelState:
    return ChannelState(
        direct=np.array([[[h]]], dtype=complex),
        ap_to_ris=np.zeros((1, 1, 0), dtype=complex),
        ris_to_user=np.zeros((1, 0), dtype=complex),
        blockage_mask=np.zeros((1, 1), dtype=bool),
    )


def scalar_point(w: complex) -> DesignPoint:
    return DesignPoint(
        beamformers=np.array([[w]], dtype=complex),
        phases=np.zeros(0, dtype=complex),
        rates=np.zeros(1),
        slacks=np.zeros(1),
    )


class TestSinr:
    def test_single_user_no_interference(self):
        # |2|^2 / 1 = 4
        assert sinr(scalar_channels(1.0), scalar_point(2.0), 0, 1.0) == pytest.approx(4.0)

    def test_zero_beamformer(self):
        assert sinr(scalar_channels(1.0), scalar_point(0.0), 0, 1.0) == 0.0

    def test_matches_straight_line_evaluation(self):
        # Independent oracle: literal loop-based evaluation of the SINR
        # definition, no shared helpers. N=1, L=2, K=2, M=2.
        rng = np.random.default_rng(123)
        cn = lambda *s: (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
        chans = ChannelState(
            direct=cn(1, 2, 2),
            ap_to_ris=0.4 * cn(1, 2, 2),
            ris_to_user=0.4 * cn(2, 2),
            blockage_mask=np.zeros((1, 2), dtype=bool),
        )
        w = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        point = DesignPoint(w, v, np.zeros(2), np.zeros(2))
        sigma2 = 1.0

        got = sinr_all(chans, point, sigma2)
        for k in range(2):
            h_k = np.concatenate([chans.direct[n, k] for n in range(1)])
            big_h = np.concatenate([chans.ap_to_ris[n] for n in range(1)], axis=0)
            g_k = chans.ris_to_user[k]
            e_k = h_k + big_h @ np.diag(v) @ g_k
            num = abs(np.vdot(e_k, w[:, k])) ** 2
            den = sigma2
            for i in range(2):
                if i != k:
                    den += abs(np.vdot(e_k, w[:, i])) ** 2
            assert abs(got[k] - num / den) < 1e-12

    def test_common_phase_rotation_invariance(self):
        rng = np.random.default_rng(5)
        cfg = unit_config()
        chans = random_channels(cfg, rng)
        nl, k = cfg.total_antennas, cfg.n_users
        w = (rng.standard_normal((nl, k)) + 1j * rng.standard_normal((nl, k)))
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, cfg.n_ris_elements))
        point = DesignPoint(w, v, np.zeros(k), np.zeros(k))
        rotated = DesignPoint(np.exp(1j * 0.7) * w, v, np.zeros(k), np.zeros(k))
        assert np.allclose(
            sinr_all(chans, point, 1.0), sinr_all(chans, rotated, 1.0), atol=1e-12, rtol=1e-12
        )


class TestRates:
    def test_unit_cases(self):
        assert achievable_rate(scalar_channels(1.0), scalar_point(1.0), 0, 1.0, 1.0) == pytest.approx(1.0)

    def test_log2_scaling(self):
        # SINR 3 at B = 1e7: 1e7 * log2(4) = 2e7
        chans = scalar_channels(1.0)
        point = scalar_point(np.sqrt(3.0))
        assert achievable_rate(chans, point, 0, 1e7, 1.0) == pytest.approx(2e7)

    def test_total_blockage_zero_rate(self):
        chans = scalar_channels(1.0)
        blocked = ChannelState(
            chans.direct, chans.ap_to_ris, chans.ris_to_user, np.ones((1, 1), dtype=bool)
        )
        assert achievable_rate(blocked, scalar_point(2.0), 0, 1e7, 1.0) == 0.0


class TestAdaptionGap:
    def test_exact_match_is_zero(self):
        qos = np.array([1e6, 2e6])
        assert adaption_gap(qos.copy(), qos) == 0.0

    def test_all_zero_rates(self):
        qos = np.full(5, 2.0)
        assert adaption_gap(np.zeros(5), qos) == 5.0

    def test_hand_computed_mixture(self):
        # |0.5 - 1| + 0 + |1.5 - 1| = 1.0 at a 12 Mbps target
        qos = np.full(3, 12e6)
        rates = np.array([6e6, 12e6, 18e6])
        assert adaption_gap(rates, qos) == pytest.approx(1.0)

    def test_rejects_nonpositive_qos(self):
        with pytest.raises(ValueError):
            adaption_gap(np.ones(2), np.array([1.0, 0.0]))


def make_trace(t0, times, radas, qos_value=1.0, k=2, pre=None):
    samples = tuple(
        TraceSample(t, np.full(k, ra * qos_value), 0.0, "x") for t, ra in zip(times, radas)
    )
    pre = np.full(k, qos_value) if pre is None else pre
    return ResilienceTrace(t0, samples, pre)


class TestResilienceComponents:
    def test_instant_recovery_saturates(self):
        trace = make_trace(1.0, [1.0], [0.7])
        w = ResilienceWeights(0.0, 0.5, 0.5, 0.0)
        _, _, r_rec, _ = resilience_components(trace, 0, np.ones(2), w)
        assert r_rec == 1.0

    def test_recovery_ratio(self):
        # T0 = 1 s, recovery after 2 s: T0 / dt = 0.5
        trace = make_trace(0.0, [2.0], [1.0])
        w = ResilienceWeights(0.0, 0.5, 0.5, 1.0)
        _, _, r_rec, _ = resilience_components(trace, 0, np.ones(2), w)
        assert r_rec == pytest.approx(0.5)

    def test_weighted_combination(self):
        # lambda = (0, 0.5, 0.5), r_ada = 0.8, fast recovery: r = 0.9
        trace = make_trace(0.0, [0.5], [0.8])
        w = ResilienceWeights(0.0, 0.5, 0.5, 1.0)
        r_abs, r_ada, r_rec, r = resilience_components(trace, 0, np.ones(2), w)
        assert r_ada == pytest.approx(0.8)
        assert r_rec == 1.0
        assert r == pytest.approx(0.9)

    def test_absorption_uses_pre_outage_rates(self):
        trace = make_trace(0.0, [0.5], [0.8], pre=np.array([0.5, 1.0]))
        w = ResilienceWeights(1.0, 0.0, 0.0, 1.0)
        r_abs, _, _, r = resilience_components(trace, 0, np.ones(2), w)
        assert r_abs == pytest.approx(0.75)
        assert r == pytest.approx(0.75)

    def test_trace_rejects_sample_before_outage(self):
        with pytest.raises(ValueError):
            make_trace(1.0, [0.5], [1.0])

    def test_trace_rejects_non_increasing_times(self):
        with pytest.raises(ValueError):
            make_trace(0.0, [0.5, 0.5], [1.0, 1.0])


class TestBestResilience:
    def test_single_sample(self):
        trace = make_trace(0.0, [1.0], [0.5])
        w = ResilienceWeights(0.0, 0.5, 0.5, 0.0)
        r, idx = best_resilience(trace, np.ones(2), w)
        assert idx == 0

    def test_no_time_weight_picks_max_adaption(self):
        trace = make_trace(0.0, [1.0, 2.0, 3.0], [0.5, 0.9, 0.7])
        w = ResilienceWeights(0.0, 1.0, 0.0, 0.0)
        r, idx = best_resilience(trace, np.ones(2), w)
        assert idx == 1
        assert r == pytest.approx(0.9)

    def test_time_dominated_picks_fast_sample(self):
        # fast/poor vs slow/good under lambda_rec >> lambda_ada:
        # fast: 0.1*0.5 + 0.9*1.0 = 0.95 ; slow: 0.1*1.0 + 0.9*(0.1/5) = 0.118
        trace = make_trace(0.0, [0.1, 5.0], [0.5, 1.0])
        w = ResilienceWeights(0.0, 0.1, 0.9, 0.1)
        r, idx = best_resilience(trace, np.ones(2), w)
        assert idx == 0
        assert r == pytest.approx(0.95)

    def test_appending_sample_never_decreases_best(self):
        rng = np.random.default_rng(0)
        w = ResilienceWeights(0.0, 0.6, 0.4, 0.05)
        times = np.cumsum(rng.uniform(0.01, 0.2, 8))
        radas = rng.uniform(0, 1, 8)
        prev = -np.inf
        for n in range(1, 9):
            trace = make_trace(0.0, times[:n], radas[:n])
            r, _ = best_resilience(trace, np.ones(2), w)
            assert r >= prev - 1e-15
            prev = r

    def test_time_rescale_invariant_without_time_weight(self):
        w = ResilienceWeights(0.0, 1.0, 0.0, 0.01)
        times = [0.1, 0.5, 2.0]
        radas = [0.2, 0.9, 0.4]
        r1, i1 = best_resilience(make_trace(0.0, times, radas), np.ones(2), w)
        r2, i2 = best_resilience(
            make_trace(0.0, [t * 37.0 for t in times], radas), np.ones(2), w
        )
        assert i1 == i2
        assert r1 == pytest.approx(r2)

    def test_recovery_component_bounded(self):
        rng = np.random.default_rng(1)
        w = ResilienceWeights(0.0, 0.0, 1.0, 0.05)
        for _ in range(50):
            t = float(rng.uniform(0, 3.0))
            trace = make_trace(0.0, [t + 1e-9], [rng.uniform(0, 1)])
            _, _, r_rec, _ = resilience_components(trace, 0, np.ones(2), w)
            assert 0.0 <= r_rec <= 1.0


class TestWeightsValidation:
    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            ResilienceWeights(0.2, 0.2, 0.2, 0.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ResilienceWeights(-0.5, 1.0, 0.5, 0.0)


class TestDesignPointValidation:
    def test_slack_dust_is_clipped(self):
        p = DesignPoint(np.zeros((2, 1), complex), np.zeros(0, complex), np.zeros(1), np.array([-1e-12]))
        assert p.slacks[0] == 0.0

    def test_large_negative_slack_rejected(self):
        with pytest.raises(ValueError):
            DesignPoint(np.zeros((2, 1), complex), np.zeros(0, complex), np.zeros(1), np.array([-1e-3]))

    def test_unit_modulus_label_enforced(self):
        with pytest.raises(ValueError):
            DesignPoint(
                np.zeros((2, 1), complex),
                np.array([0.5 + 0j]),
                np.zeros(1),
                np.zeros(1),
                unit_modulus_enforced=True,
            )


class TestTraceCsv:
    def test_round_trip(self):
        qos = np.array([1e6, 2e6])
        trace = ResilienceTrace(
            1.0,
            (
                TraceSample(1.0, np.array([0.5e6, 1.7e6]), 0.65, "adaption"),
                TraceSample(1.025, np.array([1e6, 2e6]), 0.0, "w"),
            ),
            np.array([1e6, 2e6]),
        )
        text = trace_to_csv(trace, qos)
        back = trace_from_csv(text, 1.0, np.array([1e6, 2e6]))
        assert len(back.samples) == 2
        for a, b in zip(trace.samples, back.samples):
            assert a.time_s == b.time_s
            assert a.gap == b.gap
            assert a.label == b.label
            assert np.array_equal(a.rates, b.rates)

    def test_header_schema(self):
        qos = np.array([1.0, 1.0, 1.0])
        trace = make_trace(0.0, [0.5], [1.0], k=3)
        text = trace_to_csv(trace, qos)
        header = text.splitlines()[0]
        assert header == "time_s,psi,r_ada,label,r_1,r_2,r_3"

    def test_seventeen_significant_digits(self):
        qos = np.array([3.0])
        trace = ResilienceTrace(
            0.0, (TraceSample(1.0 / 3.0, np.array([1.0 / 3.0]), 0.0, "x"),), np.array([3.0])
        )
        text = trace_to_csv(trace, qos)
        assert "0.33333333333333331" in text

    def test_rejects_bad_header(self):
        with pytest.raises(ValueError):
            trace_from_csv(io.StringIO("a,b,c\n"), 0.0, np.ones(1))
