"""Ambiguity resolution: pick the candidate cluster that is actually the emitter.

Two selectors over the calibrated candidate set. MSDC scores each coefficient
cluster by its summed pairwise squared scatter and takes the tightest one.
RSD-ASD-DBSCAN maps candidate ranges onto a spiral (the polarized scatter
diagram), density-clusters them, and shrinks the neighborhood radius until the
densest cluster has exactly N members.
"""

from __future__ import annotations

from itertools import combinations
from typing import NamedTuple

import numpy as np

from .array_model import ArrayConfig, fresnel_interval
from .calibration import CandidatePosition, CandidatePositionSet

# scatter contribution of any pair touching an invalid candidate; large but
# finite so NaN/inf never propagate into the argmin
INVALID_PAIR_PENALTY = 1.0e6


class ConvergenceFailure(Exception):
    """Raised when no size-N candidate cluster can be isolated."""


class MsdcEstimate(NamedTuple):
    coeff: int
    theta_hat: float
    range_hat: float


class RsdEstimate(NamedTuple):
    theta_hat: float
    range_hat: float
    coeff: int


def polarize(x: float) -> np.ndarray:
    """Spiral embedding (x*cos x, x*sin x); preserves magnitude |x| exactly."""
    if not np.isfinite(x):
        raise ValueError(f"polarize needs a finite input, got {x}")
    return np.array([x * np.cos(x), x * np.sin(x)])


def _pair_scatter(e1: CandidatePosition, e2: CandidatePosition) -> float:
    if not (e1.valid and e2.valid):
        return INVALID_PAIR_PENALTY
    dt = np.degrees(e1.theta_hat - e2.theta_hat)
    dr = e1.range_hat - e2.range_hat
    return float(dt * dt + dr * dr)


def cluster_scatter(entries: tuple[CandidatePosition, ...]) -> float:
    """Summed pairwise squared distance, angle in degrees and range in meters."""
    return sum(_pair_scatter(a, b) for a, b in combinations(entries, 2))


def msdc(omega: CandidatePositionSet) -> MsdcEstimate:
    """Minimum sample distance clustering over the candidate set.

    Selects the coefficient with the smallest cluster scatter (ties toward
    the smaller index) and returns the mean angle/range of that cluster's
    valid entries. If the winning cluster has no valid entry at all (only
    possible when the penalty terms dominate everything) the best cluster
    that does have one is used instead.
    """
    scatters = np.array([cluster_scatter(omega.cluster(i)) for i in range(omega.Ms)])
    order = np.argsort(scatters, kind="stable")  # stable sort keeps smaller i on ties
    for coeff in order:
        valid = [e for e in omega.cluster(int(coeff)) if e.valid]
        if valid:
            theta = float(np.mean([e.theta_hat for e in valid]))
            rng = float(np.mean([e.range_hat for e in valid]))
            return MsdcEstimate(coeff=int(coeff), theta_hat=theta, range_hat=rng)
    raise ConvergenceFailure("no coefficient cluster contains a valid candidate")


def asd_prefilter(asd: np.ndarray, kappa: float = 9.0) -> np.ndarray:
    """Coefficients surviving the angle-scatter screen.

    asd is the (L, Ms) first-group calibrated angle collection. For each
    coefficient i the score is s_i = sum over l >= 2 of the squared planar
    distance between polarize(asd[l-1, i]) and polarize(asd[0, i]).
    Coefficients with s_i > kappa * (min_j s_j + 1e-12) are eliminated; the
    argmin always survives. Returns the sorted surviving indices.
    """
    L, Ms = asd.shape
    s = np.empty(Ms)
    for i in range(Ms):
        ref = polarize(float(asd[0, i]))
        s[i] = sum(float(np.sum((polarize(float(asd[l, i])) - ref) ** 2))
                   for l in range(1, L))
    cutoff = kappa * (s.min() + 1e-12)
    survivors = np.flatnonzero(s <= cutoff)
    argmin = int(np.argmin(s))
    if argmin not in survivors:
        survivors = np.sort(np.append(survivors, argmin))
    return survivors


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering with squared-distance radius eps.

    A core point has at least min_pts points (itself included) within squared
    Euclidean distance <= eps; clusters are the maximal density-connected
    sets; unreachable points get label -1. Seeds are scanned in index order
    and expansion appends neighbor lists in index order, so the labeling is
    deterministic for a fixed input order.
    """
    pts = np.asarray(points, dtype=float)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    n = pts.shape[0]
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    neighbors = [np.flatnonzero(d2[i] <= eps) for i in range(n)]

    labels = np.full(n, -1, dtype=int)
    visited = np.zeros(n, dtype=bool)
    cid = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if neighbors[i].size < min_pts:
            continue  # noise for now; may still be claimed as a border point
        labels[i] = cid
        seeds = list(neighbors[i])
        k = 0
        while k < len(seeds):
            j = seeds[k]
            k += 1
            if labels[j] == -1:
                labels[j] = cid
            if not visited[j]:
                visited[j] = True
                if neighbors[j].size >= min_pts:
                    seeds.extend(neighbors[j])
        cid += 1
    return labels


def _densest_cluster(labels: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Member indices of the most concentrated cluster.

    Concentration is the mean pairwise squared distance (smaller is denser).
    Cardinality alone is the wrong yardstick here: two loose false families
    that overlap in range can merge into one big sparse blob that outnumbers
    the tight true cluster. Ties go to the larger cluster, then the smaller
    label, keeping the selection deterministic.
    """
    ids = np.unique(labels[labels >= 0])
    if ids.size == 0:
        return np.empty(0, dtype=int)
    best_id, best_key = None, None
    for c in ids:
        rows = np.flatnonzero(labels == c)
        sub = pts[rows]
        diff = sub[:, None, :] - sub[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        npairs = rows.size * (rows.size - 1)
        mean_d2 = float(d2.sum() / npairs) if npairs else 0.0
        key = (mean_d2, -rows.size, int(c))
        if best_key is None or key < best_key:
            best_id, best_key = int(c), key
    return np.flatnonzero(labels == best_id)


def _min_scatter_subset(pts: np.ndarray, size: int) -> np.ndarray:
    """Indices of the size-n subset with minimal pairwise squared scatter.

    Exact enumeration while the subset count stays small; beyond that a
    deterministic greedy peel (drop the point with the largest distance sum)
    gives a near-optimal subset without the combinatorial blowup.
    """
    n = pts.shape[0]
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    from math import comb
    if comb(n, size) <= 200_000:
        best, best_idx = np.inf, None
        for subset in combinations(range(n), size):
            s = d2[np.ix_(subset, subset)].sum() / 2.0
            if s < best:
                best, best_idx = s, subset
        return np.array(best_idx)
    keep = list(range(n))
    while len(keep) > size:
        sub = d2[np.ix_(keep, keep)]
        keep.pop(int(np.argmax(sub.sum(axis=1))))
    return np.array(keep)


def rsd_asd_dbscan(omega: CandidatePositionSet, asd: np.ndarray, cfg: ArrayConfig, *,
                   kappa: float = 9.0, eta: float = 0.9, max_iter: int = 50,
                   trace: list | None = None) -> RsdEstimate:
    """Range-scatter density clustering with adaptive radius shrinkage.

    The valid candidates of the coefficients surviving asd_prefilter are
    embedded on a spiral whose phase advances one full turn across the upper
    Fresnel bound of the array; the point magnitude stays the raw range in
    meters. Tying the phase to the observable region keeps the embedding
    wrap-free there, so planar distance grows monotonically with range
    separation and the coefficient cluster that is tightest in range is also
    the densest set in the plane. (A phase of one radian per meter would
    alias ranges 2*pi meters apart onto near-coincident points; at moderate
    SNR the per-pair range scatter is of that order, which would smear the
    true cluster around the whole ring while pulling false candidates
    together.)

    The starting radius eps_0 is the smallest of the per-coefficient maximal
    intra-cluster squared distances, so the tightest coefficient cluster is
    guaranteed to be density-connected at the first pass. MinPts is fixed at
    N (the per-coefficient cluster cardinality). Each pass keeps the most
    concentrated cluster, not the biggest one: false families of different
    coefficients can straddle the same range band and chain into one blob
    that out-counts the true cluster while being far looser. While the kept
    cluster holds more than N points it is re-clustered with eps shrunk by
    eta; a shrink that overshoots below N is rolled back and eta is softened
    to (1+eta)/2. If the first pass finds no cluster of N points at all, eps
    doubles instead (the mirror rule). After max_iter iterations the
    minimum-scatter size-N subset of the last cluster is taken.

    The terminal cluster then votes a coefficient by majority (ties toward
    the smaller index) and the estimate averages the angle and range of that
    coefficient's valid candidates. Averaging the terminal points directly
    would be fragile: a noisy true candidate can land range-adjacent to a
    candidate of another coefficient, and such an interloper agrees in range
    while carrying an angle tens of degrees away, which would poison the
    angle mean. When the terminal cluster is the pure true family the two
    averages coincide.

    Raises
    ------
    ConvergenceFailure
        If fewer than N valid candidate points exist in the surviving
        coefficients (nothing to cluster down to).
    """
    N = omega.n_pairs
    survivors = asd_prefilter(asd, kappa)
    entries = [e for i in survivors for e in omega.cluster(int(i)) if e.valid]
    if len(entries) < N:
        raise ConvergenceFailure(
            f"only {len(entries)} valid candidates across surviving coefficients, need {N}")
    beta = 2.0 * np.pi / fresnel_interval(cfg).r_max
    rng_vals = np.array([e.range_hat for e in entries])
    pts = rng_vals[:, None] * np.stack(
        [np.cos(beta * rng_vals), np.sin(beta * rng_vals)], axis=1)

    # eps_0: tightest per-coefficient spread among clusters with >= 2 valid points
    eps0 = np.inf
    for i in survivors:
        rows = [k for k, e in enumerate(entries) if e.coeff == i]
        if len(rows) < 2:
            continue
        diff = pts[rows][:, None, :] - pts[rows][None, :, :]
        eps0 = min(eps0, float(np.einsum("ijk,ijk->ij", diff, diff).max()))
    tiny = float(np.finfo(float).tiny)
    eps = tiny if not np.isfinite(eps0) else max(eps0, tiny)

    members = _densest_cluster(dbscan(pts, eps, N), pts)
    if trace is not None:
        trace.append((eps, members.size))
    iters = 0
    while members.size < N and iters < max_iter:
        # unspecified-by-construction corner: nothing reached N, so widen
        eps *= 2.0
        members = _densest_cluster(dbscan(pts, eps, N), pts)
        iters += 1
        if trace is not None:
            trace.append((eps, members.size))
    if members.size < N:
        raise ConvergenceFailure("no density-connected cluster reaches N points")

    while members.size > N and iters < max_iter:
        prev_eps = eps
        eps = eta * eps
        sub = _densest_cluster(dbscan(pts[members], eps, N), pts[members])
        iters += 1
        if sub.size < N:
            eps = prev_eps        # overshoot: roll back and soften the shrink
            eta = (1.0 + eta) / 2.0
        else:
            members = members[sub]
        if trace is not None:
            trace.append((eps, members.size))

    if members.size > N:
        members = members[_min_scatter_subset(pts[members], N)]

    coeffs, counts = np.unique([entries[k].coeff for k in members], return_counts=True)
    coeff = int(coeffs[np.flatnonzero(counts == counts.max())[0]])
    fam = [k for k, e in enumerate(entries) if e.coeff == coeff]
    ranges = np.hypot(pts[fam][:, 0], pts[fam][:, 1])
    theta_hat = float(np.mean([entries[k].theta_hat for k in fam]))
    return RsdEstimate(theta_hat=theta_hat, range_hat=float(np.mean(ranges)), coeff=coeff)
