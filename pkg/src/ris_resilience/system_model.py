"""Scenario configuration, geometry, and random channel generation for a
RIS-assisted cell-free MIMO downlink.

Conventions used throughout the package:
  * N access points (APs) with L antennas each serve K single-antenna users.
  * The RIS is a planar array of M passive elements.
  * Aggregate direct channel of user k stacks the per-AP blocks in AP index
    order, giving an NL vector (rows [n*L, (n+1)*L) belong to AP n).
  * All powers are in watts, rates in bits/s, distances in meters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PathlossConfig",
    "SystemConfig",
    "Topology",
    "ChannelState",
    "ChannelStreams",
    "generate_topology",
    "generate_channels",
    "draw_blockage_mask",
    "apply_blockage",
    "ris_correlation_matrix",
    "effective_channels",
    "save_channel_state",
    "load_channel_state",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PathlossConfig:
    """Far-field power-law attenuation for each channel segment.

    Each segment uses gain(d) = ref_gain * (d / ref_distance_m)**(-exponent),
    a linear power ratio. `None` reference gains resolve to aperture-based
    defaults that depend on the carrier wavelength / element spacing:
    (wavelength / 4 pi)^2 for direct links and spacing^2 / (4 pi) for each
    RIS segment. Distances below min_distance_m are clamped (and counted).
    """

    direct_exponent: float = 3.5
    direct_ref_gain: float | None = None
    ris_exponent: float = 2.0
    ris_ref_gain: float | None = None
    ref_distance_m: float = 1.0
    min_distance_m: float = 1.0

    def __post_init__(self):
        if self.ref_distance_m <= 0 or self.min_distance_m <= 0:
            raise ValueError("reference and minimum distances must be positive")
        for g in (self.direct_ref_gain, self.ris_ref_gain):
            if g is not None and g <= 0:
                raise ValueError("reference gains must be positive")

    def resolved_direct_ref_gain(self, wavelength_m: float) -> float:
        if self.direct_ref_gain is not None:
            return self.direct_ref_gain
        return (wavelength_m / (4.0 * np.pi)) ** 2

    def resolved_ris_ref_gain(self, element_spacing_m: float) -> float:
        if self.ris_ref_gain is not None:
            return self.ris_ref_gain
        return element_spacing_m**2 / (4.0 * np.pi)

    def describe(self, wavelength_m: float, element_spacing_m: float) -> dict:
        """Resolved values for run metadata."""
        return {
            "direct_exponent": self.direct_exponent,
            "direct_ref_gain": self.resolved_direct_ref_gain(wavelength_m),
            "ris_exponent": self.ris_exponent,
            "ris_ref_gain": self.resolved_ris_ref_gain(element_spacing_m),
            "ref_distance_m": self.ref_distance_m,
            "min_distance_m": self.min_distance_m,
        }


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants for one simulated network."""

    n_aps: int
    antennas_per_ap: int
    n_users: int
    n_ris_elements: int
    bandwidth_hz: float
    noise_power_w: float
    max_power_w_per_ap: np.ndarray  # (N,)
    qos_rate_bps: np.ndarray  # (K,)
    wavelength_m: float
    ris_element_spacing_m: float
    area_half_m: float
    shadowing_std_db: float
    blockage_prob: float
    rng_seed: int
    pathloss: PathlossConfig = field(default_factory=PathlossConfig)

    def __post_init__(self):
        for name in ("n_aps", "antennas_per_ap", "n_users"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_ris_elements < 0:
            raise ValueError("n_ris_elements must be >= 0")
        for name in ("bandwidth_hz", "noise_power_w", "wavelength_m", "ris_element_spacing_m", "area_half_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be >= 0")
        if not 0.0 <= self.blockage_prob <= 1.0:
            raise ValueError("blockage_prob must lie in [0, 1]")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        p = np.atleast_1d(np.asarray(self.max_power_w_per_ap, dtype=float))
        if p.size == 1:
            p = np.full(self.n_aps, float(p[0]))
        if p.shape != (self.n_aps,) or np.any(p <= 0):
            raise ValueError("max_power_w_per_ap must be positive with length n_aps")
        q = np.atleast_1d(np.asarray(self.qos_rate_bps, dtype=float))
        if q.size == 1:
            q = np.full(self.n_users, float(q[0]))
        if q.shape != (self.n_users,) or np.any(q <= 0):
            raise ValueError("qos_rate_bps must be positive with length n_users")
        object.__setattr__(self, "max_power_w_per_ap", _readonly(p))
        object.__setattr__(self, "qos_rate_bps", _readonly(q))

    @property
    def total_antennas(self) -> int:
        return self.n_aps * self.antennas_per_ap


@dataclass(frozen=True)
class Topology:
    """Node placement: 2-D AP/user positions (z=0 plane) plus the 3-D RIS
    element grid used for the spatial correlation model."""

    ap_positions: np.ndarray  # (N, 2)
    user_positions: np.ndarray  # (K, 2)
    ris_position: np.ndarray  # (2,)
    ris_element_positions: np.ndarray  # (M, 3)

    def __post_init__(self):
        for name in ("ap_positions", "user_positions", "ris_position", "ris_element_positions"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))


def generate_topology(config: SystemConfig, rng: np.random.Generator) -> Topology:
    """Draw AP and user positions i.i.d. uniform over the operation square;
    the RIS sits at the center with its element grid centered on it."""
    half = config.area_half_m
    ap_positions = rng.uniform(-half, half, size=(config.n_aps, 2))
    user_positions = rng.uniform(-half, half, size=(config.n_users, 2))
    ris_position = np.zeros(2)
    elements = _element_grid(config.n_ris_elements, config.ris_element_spacing_m, ris_position)
    return Topology(ap_positions, user_positions, ris_position, elements)


def _element_grid(m: int, spacing: float, center_xy: np.ndarray) -> np.ndarray:
    """Uniform sqrt(M) x sqrt(M) planar grid in the x-z plane, centered on
    (center_xy, z=0). The square layout requires a perfect-square count."""
    if m == 0:
        return np.zeros((0, 3))
    g = int(round(np.sqrt(m)))
    if g * g != m:
        raise ValueError("the square grid layout needs a perfect-square element count")
    offsets = (np.arange(g) - (g - 1) / 2.0) * spacing
    xx, zz = np.meshgrid(offsets, offsets, indexing="ij")
    pos = np.zeros((m, 3))
    pos[:, 0] = center_xy[0] + xx.ravel()
    pos[:, 1] = center_xy[1]
    pos[:, 2] = zz.ravel()
    return pos


def ris_correlation_matrix(element_positions: np.ndarray, wavelength_m: float) -> np.ndarray:
    """Isotropic-scattering spatial correlation sinc(2 d / wavelength) over
    the 3-D element positions (unit diagonal)."""
    if element_positions.shape[0] == 0:
        return np.zeros((0, 0))
    diff = element_positions[:, None, :] - element_positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    return np.sinc(2.0 * dist / wavelength_m)


def _psd_factor(r: np.ndarray) -> np.ndarray:
    """Factor F with F @ F.T == R for a (possibly singular) PSD matrix."""
    if r.shape[0] == 0:
        return r
    vals, vecs = np.linalg.eigh(r)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)[None, :]


@dataclass(frozen=True)
class ChannelStreams:
    """Independent random streams for the three channel segments, so that
    redrawing one segment (e.g. after resizing the RIS) leaves the others
    untouched."""

    direct: np.random.Generator
    ap_to_ris: np.random.Generator
    ris_to_user: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "ChannelStreams":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = ss.spawn(3)
        return cls(*(np.random.default_rng(c) for c in children))


@dataclass(frozen=True)
class ChannelState:
    """One quasi-static fading realization.

    `direct` always stores the unblocked coefficients; the blockage mask is
    applied on read (see `effective_direct_aggregate`), so masks can be
    lifted without regeneration. RIS-side channels are never masked.
    """

    direct: np.ndarray  # (N, K, L) complex
    ap_to_ris: np.ndarray  # (N, L, M) complex
    ris_to_user: np.ndarray  # (K, M) complex
    blockage_mask: np.ndarray  # (N, K) bool
    n_clamped_distances: int = 0

    def __post_init__(self):
        object.__setattr__(self, "direct", _readonly(np.asarray(self.direct, dtype=complex)))
        object.__setattr__(self, "ap_to_ris", _readonly(np.asarray(self.ap_to_ris, dtype=complex)))
        object.__setattr__(self, "ris_to_user", _readonly(np.asarray(self.ris_to_user, dtype=complex)))
        object.__setattr__(self, "blockage_mask", _readonly(np.asarray(self.blockage_mask, dtype=bool)))
        n, k, l = self.direct.shape
        if self.blockage_mask.shape != (n, k):
            raise ValueError("blockage_mask must have shape (n_aps, n_users)")
        if self.ap_to_ris.shape[:2] != (n, l):
            raise ValueError("ap_to_ris must have shape (n_aps, antennas_per_ap, M)")
        if self.ris_to_user.shape != (k, self.ap_to_ris.shape[2]):
            raise ValueError("ris_to_user must have shape (n_users, M)")

    @property
    def n_aps(self) -> int:
        return self.direct.shape[0]

    @property
    def n_users(self) -> int:
        return self.direct.shape[1]

    @property
    def antennas_per_ap(self) -> int:
        return self.direct.shape[2]

    @property
    def n_ris_elements(self) -> int:
        return self.ris_to_user.shape[1]

    def effective_direct_aggregate(self) -> np.ndarray:
        """Blockage-masked aggregate direct channels, shape (NL, K)."""
        masked = np.where(self.blockage_mask[:, :, None], 0.0, self.direct)
        n, k, l = masked.shape
        return masked.transpose(0, 2, 1).reshape(n * l, k)

    def ap_to_ris_aggregate(self) -> np.ndarray:
        """Aggregate AP-to-RIS channel, shape (NL, M)."""
        n, l, m = self.ap_to_ris.shape
        return self.ap_to_ris.reshape(n * l, m)


def effective_channels(channels: ChannelState, phases: np.ndarray) -> np.ndarray:
    """Per-user end-to-end channels h_k + H diag(g_k) v, shape (K, NL).

    `phases` is the complex reflection vector v (one entry per element).
    """
    direct = channels.effective_direct_aggregate()  # (NL, K)
    if channels.n_ris_elements == 0:
        return direct.T.copy()
    h_ris = channels.ap_to_ris_aggregate()  # (NL, M)
    reflected = h_ris @ (channels.ris_to_user * np.asarray(phases)[None, :]).T  # (NL, K)
    return (direct + reflected).T


def generate_channels(
    config: SystemConfig, topology: Topology, streams: ChannelStreams
) -> ChannelState:
    """Draw one fading realization.

    Direct links are i.i.d. Rayleigh per antenna scaled by power-law
    pathloss times log-normal shadowing. RIS-side links carry the sinc
    spatial correlation of the element grid on the element axis and
    power-law attenuation per segment (no shadowing). Large-scale gains use
    the RIS center position for every element (far-field assumption).
    """
    n, l, k, m = config.n_aps, config.antennas_per_ap, config.n_users, config.n_ris_elements
    pl = config.pathloss
    beta0_dir = pl.resolved_direct_ref_gain(config.wavelength_m)
    beta0_ris = pl.resolved_ris_ref_gain(config.ris_element_spacing_m)

    d_direct = np.linalg.norm(
        topology.ap_positions[:, None, :] - topology.user_positions[None, :, :], axis=-1
    )
    d_ap_ris = np.linalg.norm(topology.ap_positions - topology.ris_position[None, :], axis=-1)
    d_ris_user = np.linalg.norm(topology.user_positions - topology.ris_position[None, :], axis=-1)

    clamped = int(np.sum(d_direct < pl.min_distance_m))
    clamped += int(np.sum(d_ap_ris < pl.min_distance_m)) + int(np.sum(d_ris_user < pl.min_distance_m))
    d_direct = np.maximum(d_direct, pl.min_distance_m)
    d_ap_ris = np.maximum(d_ap_ris, pl.min_distance_m)
    d_ris_user = np.maximum(d_ris_user, pl.min_distance_m)

    gain_direct = beta0_dir * (d_direct / pl.ref_distance_m) ** (-pl.direct_exponent)
    shadow_db = config.shadowing_std_db * streams.direct.standard_normal((n, k))
    gain_direct = gain_direct * 10.0 ** (shadow_db / 10.0)

    fading = streams.direct.standard_normal((n, k, l)) + 1j * streams.direct.standard_normal((n, k, l))
    direct = np.sqrt(gain_direct[:, :, None] / 2.0) * fading

    corr_factor = _psd_factor(ris_correlation_matrix(topology.ris_element_positions, config.wavelength_m))

    gain_ap_ris = beta0_ris * (d_ap_ris / pl.ref_distance_m) ** (-pl.ris_exponent)
    ap_to_ris = np.zeros((n, l, m), dtype=complex)
    for i in range(n):
        z = streams.ap_to_ris.standard_normal((l, m)) + 1j * streams.ap_to_ris.standard_normal((l, m))
        ap_to_ris[i] = np.sqrt(gain_ap_ris[i] / 2.0) * (z @ corr_factor.T)

    gain_ris_user = beta0_ris * (d_ris_user / pl.ref_distance_m) ** (-pl.ris_exponent)
    ris_to_user = np.zeros((k, m), dtype=complex)
    for j in range(k):
        z = streams.ris_to_user.standard_normal(m) + 1j * streams.ris_to_user.standard_normal(m)
        ris_to_user[j] = np.sqrt(gain_ris_user[j] / 2.0) * (corr_factor @ z)

    mask = np.zeros((n, k), dtype=bool)
    return ChannelState(direct, ap_to_ris, ris_to_user, mask, n_clamped_distances=clamped)


def draw_blockage_mask(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(blockage_prob) per (AP, user) direct link."""
    return rng.random((config.n_aps, config.n_users)) < config.blockage_prob


def apply_blockage(channels: ChannelState, mask: np.ndarray) -> ChannelState:
    """Return a state whose masked direct blocks read as zero vectors.

    The unblocked coefficients stay stored, so applying a lighter mask later
    restores them. RIS-side channels are untouched.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (channels.n_aps, channels.n_users):
        raise ValueError("mask must have shape (n_aps, n_users)")
    return replace(channels, blockage_mask=mask)


# ---------------------------------------------------------------------------
# Serialization: JSON header line + raw float64 payload. Complex arrays are
# stored as interleaved re/im 64-bit floats in row-major (C) order; the
# blockage mask as uint8. This layout is the stability contract for golden
# traces.
# ---------------------------------------------------------------------------

_MAGIC = "ris-channel-state-v1"


def save_channel_state(channels: ChannelState, path, seed=None) -> None:
    header = {
        "format": _MAGIC,
        "n_aps": channels.n_aps,
        "n_users": channels.n_users,
        "antennas_per_ap": channels.antennas_per_ap,
        "n_ris_elements": channels.n_ris_elements,
        "n_clamped_distances": channels.n_clamped_distances,
        "seed": seed,
        "layout": "complex128 as interleaved re/im float64, row-major; mask uint8",
        "arrays": ["direct", "ap_to_ris", "ris_to_user", "blockage_mask"],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in ("direct", "ap_to_ris", "ris_to_user"):
            arr = np.ascontiguousarray(getattr(channels, name), dtype=np.complex128)
            fh.write(arr.view(np.float64).tobytes())
        fh.write(np.ascontiguousarray(channels.blockage_mask, dtype=np.uint8).tobytes())


def load_channel_state(path) -> ChannelState:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _MAGIC:
            raise ValueError(f"unrecognized channel dump format in {path}")
        n = header["n_aps"]
        k = header["n_users"]
        l = header["antennas_per_ap"]
        m = header["n_ris_elements"]
        payload = fh.read()

    def take(count, offset):
        flat = np.frombuffer(payload, dtype=np.float64, count=2 * count, offset=offset)
        return flat.view(np.complex128), offset + 16 * count

    offset = 0
    direct, offset = take(n * k * l, offset)
    ap_to_ris, offset = take(n * l * m, offset)
    ris_to_user, offset = take(k * m, offset)
    mask = np.frombuffer(payload, dtype=np.uint8, count=n * k, offset=offset).astype(bool)
    return ChannelState(
        direct.reshape(n, k, l),
        ap_to_ris.reshape(n, l, m),
        ris_to_user.reshape(k, m),
        mask.reshape(n, k),
        n_clamped_distances=header.get("n_clamped_distances", 0),
    )
