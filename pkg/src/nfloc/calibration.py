"""Pairwise geometric calibration of per-group directions to the array reference.

Two groups seeing the same emitter from offset reference points form a
triangle; intersecting their rays recovers the global (theta, r). Applied to
every group pair and every ambiguity coefficient this yields the candidate
position set Omega: N = C(L,2) positions per coefficient. Only the true
coefficient's positions coincide; false-coefficient positions scatter, which
is what the disambiguation stage exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import ArrayConfig
from .subspace import AmbiguousAngleSet


class DegeneratePair(Exception):
    """Raised when two group rays are parallel and cannot be intersected."""


@dataclass(frozen=True)
class CandidatePosition:
    """One calibrated (theta, r) candidate with its provenance.

    range_hat may be negative or non-finite for false-coefficient candidates;
    such entries carry valid=False but stay in the set so every coefficient
    cluster keeps exactly N entries.
    """

    theta_hat: float
    range_hat: float
    pair: tuple[int, int]
    coeff: int
    valid: bool

    def __post_init__(self) -> None:
        if not self.pair[0] < self.pair[1]:
            raise ValueError(f"pair indices must be strictly ordered, got {self.pair}")
        if self.coeff < 0:
            raise ValueError(f"coefficient must be nonnegative, got {self.coeff}")


@dataclass(frozen=True)
class CandidatePositionSet:
    """All N*Ms calibrated candidates, ordered by (coefficient, pair)."""

    entries: tuple[CandidatePosition, ...]
    Ms: int
    n_pairs: int

    def __post_init__(self) -> None:
        if len(self.entries) != self.Ms * self.n_pairs:
            raise ValueError(f"expected {self.Ms * self.n_pairs} entries, got {len(self.entries)}")
        for i in range(self.Ms):
            if sum(1 for e in self.entries if e.coeff == i) != self.n_pairs:
                raise ValueError(f"coefficient {i} does not have exactly {self.n_pairs} entries")

    def cluster(self, coeff: int) -> tuple[CandidatePosition, ...]:
        """The N candidates sharing one ambiguity coefficient, in pair order."""
        return tuple(e for e in self.entries if e.coeff == coeff)


def calibrate_pair(theta_l1: float, theta_l2: float, l1: int, l2: int,
                   cfg: ArrayConfig) -> tuple[float, float]:
    """Intersect the rays of groups l1 < l2 and map back to the array reference.

    Returns (theta_hat, range_hat). The angle is computed in the
    tan-free form atan2(dd_l2*sin(t1)*cos(t2) - dd_l1*sin(t2)*cos(t1),
    dd_12*cos(t1)*cos(t2)) so directions near +-pi/2 cannot overflow; for
    l1 = 1 the expression collapses to theta_l1 exactly and is returned as
    such. range_hat can come out negative or infinite for geometrically
    inconsistent (false-alias) inputs; callers flag rather than reject.

    Raises
    ------
    DegeneratePair
        If |sin(theta_l1 - theta_l2)| < 1e-12 (parallel rays).
    """
    if not 1 <= l1 < l2 <= cfg.L:
        raise ValueError(f"need 1 <= l1 < l2 <= L, got ({l1}, {l2}) with L={cfg.L}")
    dd1, dd2 = cfg.delta_d(l1), cfg.delta_d(l2)
    dd12 = dd2 - dd1
    s_diff = np.sin(theta_l1 - theta_l2)
    if abs(s_diff) < 1e-12:
        raise DegeneratePair(f"parallel rays for pair ({l1}, {l2}): sin diff {s_diff:.3e}")
    r_l2 = dd12 * np.cos(theta_l1) / s_diff
    if dd1 == 0.0:
        theta_hat = float(theta_l1)
    else:
        theta_hat = float(np.arctan2(
            dd2 * np.sin(theta_l1) * np.cos(theta_l2) - dd1 * np.sin(theta_l2) * np.cos(theta_l1),
            dd12 * np.cos(theta_l1) * np.cos(theta_l2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        range_hat = float(r_l2 * np.cos(theta_l2) / np.cos(theta_hat))
    return theta_hat, range_hat


def build_candidate_set(sets: list[AmbiguousAngleSet], cfg: ArrayConfig) -> CandidatePositionSet:
    """Calibrate every group pair for every coefficient into the set Omega.

    sets[l-1] must be group l's candidate set; angles sharing a coefficient
    index are calibrated together, so labels must already be consistent
    across groups (see align_ambiguity_labels). Degenerate pairs become
    flagged-invalid entries with a +inf range sentinel instead of being
    dropped, keeping every cluster at exactly N entries.
    """
    if len(sets) != cfg.L:
        raise ValueError(f"need {cfg.L} ambiguous sets, got {len(sets)}")
    entries = []
    for i in range(cfg.Ms):
        for l1 in range(1, cfg.L + 1):
            for l2 in range(l1 + 1, cfg.L + 1):
                t1 = float(sets[l1 - 1].angles[i])
                t2 = float(sets[l2 - 1].angles[i])
                try:
                    theta_hat, range_hat = calibrate_pair(t1, t2, l1, l2, cfg)
                    valid = bool(np.isfinite(range_hat) and range_hat > 0.0
                                 and np.isfinite(theta_hat))
                except DegeneratePair:
                    theta_hat, range_hat, valid = float("nan"), float("inf"), False
                entries.append(CandidatePosition(theta_hat=theta_hat, range_hat=range_hat,
                                                 pair=(l1, l2), coeff=i, valid=valid))
    return CandidatePositionSet(entries=tuple(entries), Ms=cfg.Ms,
                                n_pairs=cfg.L * (cfg.L - 1) // 2)


def asd_angle_sets(sets: list[AmbiguousAngleSet], cfg: ArrayConfig) -> np.ndarray:
    """First-group calibrated angle collection, shape (L, Ms).

    Row 0 holds group 1's own candidates; row l-1 holds the pair-(1, l)
    calibrated angles theta_hat_{1,l,i}. Because the l1 = 1 calibration
    returns theta_l1 exactly, the rows are identical by construction; the
    collection is still built through calibrate_pair so the downstream
    scatter test exercises the same code path it sees with noisy angles.
    """
    if len(sets) != cfg.L:
        raise ValueError(f"need {cfg.L} ambiguous sets, got {len(sets)}")
    out = np.empty((cfg.L, cfg.Ms))
    out[0] = sets[0].angles
    for l in range(2, cfg.L + 1):
        for i in range(cfg.Ms):
            t1 = float(sets[0].angles[i])
            t2 = float(sets[l - 1].angles[i])
            try:
                theta_hat, _ = calibrate_pair(t1, t2, 1, l, cfg)
            except DegeneratePair:
                theta_hat = t1
            out[l - 1, i] = theta_hat
    return out


def _circular_sine_distance(a: np.ndarray, b: float) -> np.ndarray:
    """Distance on the sine axis folded modulo 2 (the alias period)."""
    return np.abs(np.mod(a - b + 1.0, 2.0) - 1.0)


def align_ambiguity_labels(sets: list[AmbiguousAngleSet]) -> list[AmbiguousAngleSet]:
    """Relabel groups 2..L so coefficient indices agree with group 1's branches.

    Each group enumerates its aliases relative to its own wrapped electrical
    phase, so the branch holding the true direction can get a different index
    in different groups whenever pi*Ms*sin(theta_l) straddles a 2*pi boundary
    between groups. Group directions differ by far less than the 2/Ms alias
    spacing, so matching each group's candidates to group 1's nearest
    circular sine restores a common labeling. Non-bijective matchings (only
    possible for knife-edge ties) fall back to the original labels.
    """
    ref = sets[0]
    aligned = [ref]
    for s in sets[1:]:
        perm = np.array([int(np.argmin(_circular_sine_distance(s.sines, u)))
                         for u in ref.sines])
        if sorted(perm.tolist()) != list(range(len(perm))):
            aligned.append(s)
            continue
        aligned.append(s.relabeled(perm))
    return aligned
