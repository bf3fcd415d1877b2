"""Shared builders for unit-scale optimizer instances and desk-scale
physical scenarios."""

import numpy as np
import pytest

from ris_resilience import ChannelState, PathlossConfig, ScaSettings, SystemConfig
from ris_resilience.metrics import ResilienceWeights


def unit_config(n_aps=2, antennas_per_ap=2, n_users=3, n_ris_elements=4, power=10.0,
                qos=2.0, bandwidth=1.0, noise=1.0, seed=0):
    """Dimensionless config for optimizer math tests (unit noise, O(1) gains)."""
    return SystemConfig(
        n_aps=n_aps,
        antennas_per_ap=antennas_per_ap,
        n_users=n_users,
        n_ris_elements=n_ris_elements,
        bandwidth_hz=bandwidth,
        noise_power_w=noise,
        max_power_w_per_ap=np.full(n_aps, float(power)),
        qos_rate_bps=np.full(n_users, float(qos)),
        wavelength_m=0.1,
        ris_element_spacing_m=0.025,
        area_half_m=250.0,
        shadowing_std_db=0.0,
        blockage_prob=0.12,
        rng_seed=seed,
    )


def random_channels(config, rng, ris_scale=0.4):
    """Synthetic unit-scale fading for a given config (no pathloss model)."""
    n, l, k, m = config.n_aps, config.antennas_per_ap, config.n_users, config.n_ris_elements
    cn = lambda *shape: (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelState(
        direct=cn(n, k, l),
        ap_to_ris=ris_scale * cn(n, l, m),
        ris_to_user=ris_scale * cn(k, m),
        blockage_mask=np.zeros((n, k), dtype=bool),
    )


def desk_config(seed, n_ris_elements=16, power_w=1.0, blockage_prob=0.12):
    """Physically parameterized desk-scale network used by the Monte Carlo
    direction checks; all chosen values are recorded in run metadata."""
    return SystemConfig(
        n_aps=2,
        antennas_per_ap=4,
        n_users=4,
        n_ris_elements=n_ris_elements,
        bandwidth_hz=1e7,
        noise_power_w=1e-13,
        max_power_w_per_ap=np.full(2, float(power_w)),
        qos_rate_bps=np.full(4, 12e6),
        wavelength_m=0.1,
        ris_element_spacing_m=0.025,
        area_half_m=250.0,
        shadowing_std_db=8.0,
        blockage_prob=blockage_prob,
        rng_seed=seed,
        pathloss=PathlossConfig(direct_exponent=3.8, ris_ref_gain=6.25e-4),
    )


@pytest.fixture
def quick_settings():
    return ScaSettings(max_outer_rounds=6, gap_threshold=1e-3)


@pytest.fixture
def balanced_weights():
    return ResilienceWeights(0.0, 0.5, 0.5, 0.05)
