"""Single-trial localization pipeline: snapshots in, position estimate out."""

from __future__ import annotations

from dataclasses import dataclass

from .array_model import ArrayConfig, GroupSnapshots
from .calibration import align_ambiguity_labels, asd_angle_sets, build_candidate_set
from .disambiguation import msdc, rsd_asd_dbscan
from .subspace import AmbiguousAngleSet, group_doa

METHODS = ("msdc", "rsd-asd-dbscan", "regnet")


@dataclass(frozen=True)
class LocalizeResult:
    theta_hat: float      # radians
    range_hat: float      # meters
    coeff: int            # ambiguity coefficient the method settled on
    method: str


def ambiguous_sets(snaps: GroupSnapshots, cfg: ArrayConfig) -> list[AmbiguousAngleSet]:
    """Per-group subspace DOA with cross-group coefficient labels aligned."""
    sets = [group_doa(snaps.group(l), cfg, l) for l in range(1, cfg.L + 1)]
    return align_ambiguity_labels(sets)


def locate(snaps: GroupSnapshots, cfg: ArrayConfig, method: str = "msdc",
           model=None) -> LocalizeResult:
    """Run one method end to end on one batch of group snapshots.

    model is the (MlnnParams, PerceptronParams) pair and is only consulted by
    the regnet method.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    sets = ambiguous_sets(snaps, cfg)

    if method == "regnet":
        if model is None:
            raise ValueError("regnet method needs a trained model")
        from .regnet import regnet_infer, regnet_range
        per_group, theta_hat = regnet_infer(model[0], model[1], sets)
        range_hat = regnet_range(theta_hat, per_group, cfg)
        # the implicit coefficient choice: whichever group-1 candidate the
        # fused angle landed closest to
        coeff = int(min(range(sets[0].Ms),
                        key=lambda i: abs(sets[0].angles[i] - theta_hat)))
        return LocalizeResult(theta_hat, range_hat, coeff, method)

    omega = build_candidate_set(sets, cfg)
    if method == "msdc":
        est = msdc(omega)
        return LocalizeResult(est.theta_hat, est.range_hat, est.coeff, method)
    asd = asd_angle_sets(sets, cfg)
    est = rsd_asd_dbscan(omega, asd, cfg)
    return LocalizeResult(est.theta_hat, est.range_hat, est.coeff, method)
