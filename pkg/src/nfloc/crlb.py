"""Cramer-Rao lower bounds for joint angle/range estimation on the grouped array.

The model per group is a rank-one signal covariance plus white noise,
R_l = sigma_s^2 a_l a_l^H + sigma_v^2 I, block-diagonal across groups after
analog combining. The closed forms below factor every per-group Fisher entry
as (dphi_i)(dphi_j) * mu2_xi where phi_l is the per-group sine parameter and
mu2_xi collects the covariance-trace part.

Note on the trace factor: a near-miss variant of the Xi_l bracket (an extra
1/d^2 prefactor, a G where G^2 belongs, and a regrouped cross term) looks
plausible but disagrees with the defining trace by four orders of magnitude.
The form implemented here matches the exact trace and a finite-difference
Fisher matrix to ~1e-9 relative; the near-miss variant is kept in the test
suite as a documented mismatch so the discrepancy stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .array_model import ArrayConfig, EmitterPosition


class SingularFim(Exception):
    """Aggregated Fisher matrix is (numerically) singular; no finite bound."""


@dataclass(frozen=True)
class FimComponents:
    """Per-group Fisher entries (per snapshot) and their 2x2 aggregate."""
    f_theta_theta: np.ndarray   # (L,)
    f_rr: np.ndarray            # (L,)
    f_theta_r: np.ndarray       # (L,)
    fim: np.ndarray             # (2, 2) summed over groups

    def __post_init__(self):
        for name in ("f_theta_theta", "f_rr", "f_theta_r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite Fisher component {name}")


@dataclass(frozen=True)
class CrlbReport:
    crlb_theta: float           # rad^2
    crlb_r: float               # m^2
    snapshots: int
    components: FimComponents


def phi_and_derivatives(cfg: ArrayConfig, l: int, pos: EmitterPosition
                        ) -> tuple[float, float, float]:
    """Per-group sine parameter phi_l and its theta/range partials.

    phi_l = (r sin(theta) - dd_l) / rho with rho^2 = r^2 - 2 dd_l r sin(theta)
    + dd_l^2; the partials are exact closed forms (no differencing).
    """
    dd = cfg.delta_d(l)
    theta, r = pos.theta, pos.range_m
    st, ct = np.sin(theta), np.cos(theta)
    rho = np.sqrt(r * r - 2.0 * dd * r * st + dd * dd)
    phi = (r * st - dd) / rho
    dphi_dtheta = (r ** 3 * ct - dd * r * r * st * ct) / rho ** 3
    dphi_dr = dd * r * ct * ct / rho ** 3
    return float(phi), float(dphi_dtheta), float(dphi_dr)


def gamma_eta(cfg: ArrayConfig, phi_l: float) -> tuple[complex, complex]:
    """In-group sums Gamma = sum e^{+j u m phi} and eta = sum m e^{-j u m phi}.

    u = 2 pi d / lambda, m = 0..Ms-1. Direct summation: the geometric-ratio
    closed form is 0/0 at phi = 0 and is only used as a cross-check in tests.
    """
    if abs(phi_l) > 1.0 + 1e-12:
        raise ValueError(f"|phi_l| must be <= 1, got {phi_l}")
    u = 2.0 * np.pi * cfg.d / cfg.wavelength
    m = np.arange(cfg.Ms)
    e = np.exp(1j * u * m * phi_l)
    return complex(e.sum()), complex((m * e.conj()).sum())


def xi(cfg: ArrayConfig, phi_l: float, gamma_snr: float) -> float:
    """Trace factor Xi_l of the per-group Fisher entries (real, <= 0).

    Xi_l = -(2 gamma^2 / (Ms (Ms + gamma G |Gamma|^2)^2)) * [
              Ms^2 (Ms + gamma G |Gamma|^2) |Gamma|^4 G^2 (G^2 - 1) / 12
              + Ms G^2 |Gamma|^2 |eta|^2 - Ms G^2 Re((Gamma eta)^2) ]
    The bracket is >= 0 (its last two terms equal 2 Ms G^2 Im(Gamma eta)^2),
    so mu^2 Xi_l >= 0 with mu^2 = -(2 pi d / lambda)^2.
    """
    if not (np.isfinite(gamma_snr) and gamma_snr > 0):
        raise ValueError(f"gamma_snr must be positive and finite, got {gamma_snr}")
    G, Ms = cfg.G, cfg.Ms
    Gam, eta = gamma_eta(cfg, phi_l)
    ag2 = abs(Gam) ** 2
    denom = Ms + gamma_snr * G * ag2
    bracket = (Ms * Ms * denom * ag2 * ag2 * G * G * (G * G - 1) / 12.0
               + Ms * G * G * ag2 * abs(eta) ** 2
               - Ms * G * G * ((Gam * eta) ** 2).real)
    return float(-(2.0 * gamma_snr ** 2 / (Ms * denom ** 2)) * bracket)


def mu2_xi(cfg: ArrayConfig, phi_l: float, gamma_snr: float) -> float:
    """The nonnegative product mu^2 * Xi_l used by every Fisher entry."""
    u = 2.0 * np.pi * cfg.d / cfg.wavelength
    v = -(u * u) * xi(cfg, phi_l, gamma_snr)
    return max(v, 0.0)   # clip roundoff at phi where the bracket vanishes


def fim_closed_form(cfg: ArrayConfig, pos: EmitterPosition,
                    gamma_snr: float) -> FimComponents:
    """Per-snapshot Fisher components, closed form, summed over groups."""
    L = cfg.L
    ftt = np.empty(L)
    frr = np.empty(L)
    ftr = np.empty(L)
    for l in range(1, L + 1):
        phi, dpt, dpr = phi_and_derivatives(cfg, l, pos)
        m2x = mu2_xi(cfg, phi, gamma_snr)
        ftt[l - 1] = dpt * dpt * m2x
        frr[l - 1] = dpr * dpr * m2x
        ftr[l - 1] = dpt * dpr * m2x
    fim = np.array([[ftt.sum(), ftr.sum()], [ftr.sum(), frr.sum()]])
    return FimComponents(f_theta_theta=ftt, f_rr=frr, f_theta_r=ftr, fim=fim)


def _group_cov(cfg: ArrayConfig, l: int, theta: float, r: float,
               sigma_s2: float, sigma_v2: float) -> np.ndarray:
    pos = EmitterPosition(theta=theta, range_m=r)
    phi, _, _ = phi_and_derivatives(cfg, l, pos)
    u = 2.0 * np.pi * cfg.d / cfg.wavelength
    Gam, _ = gamma_eta(cfg, phi)
    g = np.arange(cfg.G)
    a = np.exp(1j * u * cfg.Ms * g * phi) * Gam / np.sqrt(cfg.Ms)
    return sigma_s2 * np.outer(a, a.conj()) + sigma_v2 * np.eye(cfg.G)


def fim_numeric_oracle(cfg: ArrayConfig, pos: EmitterPosition,
                       gamma_snr: float) -> np.ndarray:
    """Per-snapshot FIM by central differences on the group covariances.

    F_ij = sum_l tr{R_l^-1 (dR_l/db_i) R_l^-1 (dR_l/db_j)} with b = (theta, r),
    sigma_s^2 = gamma and sigma_v^2 = 1. Steps are 1e-7 relative; if halving
    the step moves the result by more than 1e-6 relative, the Richardson
    combination of the two is returned instead.
    """
    if not (np.isfinite(gamma_snr) and gamma_snr > 0):
        raise ValueError("noise-free covariance is singular; gamma_snr must be finite")

    def fim_at(h_scale: float) -> np.ndarray:
        ht = 1e-7 * max(1.0, abs(pos.theta)) * h_scale
        hr = 1e-7 * max(1.0, abs(pos.range_m)) * h_scale
        F = np.zeros((2, 2))
        for l in range(1, cfg.L + 1):
            R = _group_cov(cfg, l, pos.theta, pos.range_m, gamma_snr, 1.0)
            Rinv = np.linalg.inv(R)
            dRt = (_group_cov(cfg, l, pos.theta + ht, pos.range_m, gamma_snr, 1.0)
                   - _group_cov(cfg, l, pos.theta - ht, pos.range_m, gamma_snr, 1.0)) / (2 * ht)
            dRr = (_group_cov(cfg, l, pos.theta, pos.range_m + hr, gamma_snr, 1.0)
                   - _group_cov(cfg, l, pos.theta, pos.range_m - hr, gamma_snr, 1.0)) / (2 * hr)
            for i, Di in enumerate((dRt, dRr)):
                for j, Dj in enumerate((dRt, dRr)):
                    F[i, j] += np.trace(Rinv @ Di @ Rinv @ Dj).real
        return F

    F1 = fim_at(1.0)
    F2 = fim_at(0.5)
    scale = max(np.abs(F1).max(), 1e-300)
    if np.abs(F1 - F2).max() / scale > 1e-6:
        return (4.0 * F2 - F1) / 3.0
    return F2


def crlb(cfg: ArrayConfig, pos: EmitterPosition, gamma_snr: float,
         T: int) -> CrlbReport:
    """Joint-estimation bounds: diagonal of the inverse aggregated FIM over T.

    CRLB_theta = sum F_rr / (T [sum F_tt sum F_rr - (sum F_tr)^2]); range
    analogous. Raises SingularFim when the denominator vanishes (always at
    L = 1: every per-group block satisfies F_tr^2 = F_tt F_rr exactly, so a
    single group carries no joint information).
    """
    if T < 1:
        raise ValueError(f"need T >= 1 snapshots, got {T}")
    comps = fim_closed_form(cfg, pos, gamma_snr)
    stt = comps.f_theta_theta.sum()
    srr = comps.f_rr.sum()
    str_ = comps.f_theta_r.sum()
    det = stt * srr - str_ * str_
    if det <= 1e-30:
        raise SingularFim(f"FIM determinant {det:.3e} (L={cfg.L})")
    return CrlbReport(crlb_theta=float(srr / (T * det)),
                      crlb_r=float(stt / (T * det)),
                      snapshots=T, components=comps)


class Remark1Result(NamedTuple):
    rows: list[tuple[int, float, float]]   # (G, crlb_theta, crlb_r)
    theta_nonincreasing: bool
    r_nonincreasing: bool


def remark1_check(cfg: ArrayConfig, g_values: Sequence[int],
                  pos: EmitterPosition, gamma_snr: float) -> Remark1Result:
    """Bound-vs-group-size sweep with fixed M, Ms, K = cfg.K.

    Every G must divide K with K/G >= 2 groups left over. Returns the
    (G, CRLB_theta, CRLB_r) sequence at T = 1 and whether both bounds are
    non-increasing in G.
    """
    rows = []
    for G in sorted(g_values):
        if cfg.K % G != 0 or cfg.K // G < 2:
            raise ValueError(f"G={G} does not split K={cfg.K} into >= 2 groups")
        family_cfg = ArrayConfig(M=cfg.M, Ms=cfg.Ms, K=cfg.K, L=cfg.K // G, G=G,
                                 d=cfg.d, wavelength=cfg.wavelength,
                                 carrier_freq=cfg.carrier_freq)
        rep = crlb(family_cfg, pos, gamma_snr, T=1)
        rows.append((G, rep.crlb_theta, rep.crlb_r))
    theta_ok = all(rows[i + 1][1] <= rows[i][1] * (1 + 1e-12) for i in range(len(rows) - 1))
    r_ok = all(rows[i + 1][2] <= rows[i][2] * (1 + 1e-12) for i in range(len(rows) - 1))
    return Remark1Result(rows=rows, theta_nonincreasing=theta_ok, r_nonincreasing=r_ok)
