"""Per-group covariance, noise subspace, Root-MUSIC, and ambiguity enumeration.

A group's RF-chain outputs form a virtual far-field ULA with element spacing
Ms*d, so its electrical phase is psi = -(2*pi/lambda)*Ms*d*sin(theta_l) under
the synthesis sign convention (phase decreasing along the array). Root-MUSIC
recovers psi only modulo 2*pi; with d = lambda/2 this folds the sine axis
Ms-fold, producing exactly Ms candidate angles per group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_model import ArrayConfig, EmitterPosition


@dataclass(frozen=True)
class AmbiguousAngleSet:
    """The Ms candidate directions of one group, indexed by ambiguity coefficient.

    angles[i] and sines[i] belong to coefficient i in 0..Ms-1. Exactly one
    entry is the group's true direction; the others are aliases offset by
    multiples of 2/Ms on the sine axis.
    """

    group: int
    angles: np.ndarray  # shape (Ms,), radians, angles[i] for coefficient i
    sines: np.ndarray   # shape (Ms,), sin(angles), kept for exact-spacing checks

    def __post_init__(self) -> None:
        if self.angles.shape != self.sines.shape or self.angles.ndim != 1:
            raise ValueError("angles and sines must be matching 1-d arrays")

    @property
    def Ms(self) -> int:
        return len(self.angles)

    def relabeled(self, perm: np.ndarray) -> "AmbiguousAngleSet":
        """New set whose coefficient i holds the old entry perm[i]."""
        return AmbiguousAngleSet(group=self.group, angles=self.angles[perm],
                                 sines=self.sines[perm])


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    return float(np.angle(np.exp(1j * x)))


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """Finite-sample covariance (1/T) Y Y^H, numerically symmetrized.

    Parameters
    ----------
    Y : complex array, shape (G, T)
        Snapshot matrix of one group.

    Returns
    -------
    R : complex array, shape (G, G), Hermitian positive semidefinite.
    """
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise ValueError(f"snapshot matrix must be G x T with T >= 1, got shape {Y.shape}")
    R = Y @ Y.conj().T / Y.shape[1]
    return (R + R.conj().T) / 2.0


def noise_subspace(R: np.ndarray, sources: int = 1) -> np.ndarray:
    """Orthonormal basis of the noise subspace of a Hermitian covariance.

    Parameters
    ----------
    R : complex Hermitian array, shape (G, G)
    sources : int
        Signal subspace dimension; must be < G.

    Returns
    -------
    U_N : complex array, shape (G, G - sources)
        Eigenvectors of the G - sources smallest eigenvalues.
    """
    R = np.asarray(R)
    G = R.shape[0]
    if not 0 < sources < G:
        raise ValueError(f"sources={sources} must be in 1..G-1 with G={G}")
    scale = max(1.0, float(np.abs(R).max()))
    if np.abs(R - R.conj().T).max() > 1e-8 * scale:
        raise ValueError("covariance is not Hermitian within tolerance")
    _, vecs = np.linalg.eigh(R)  # ascending eigenvalues
    return vecs[:, : G - sources]


def root_music_arg(U_N: np.ndarray) -> float:
    """Electrical phase recovered from the Root-MUSIC polynomial.

    Builds sum_{g1,g2} C[g1,g2] z^(g2-g1) with C = U_N U_N^H, multiplies by
    z^(G-1) to clear negative powers, and roots the resulting degree-2(G-1)
    polynomial via the companion matrix. Of each conjugate-reciprocal root
    pair the inside root is selected: largest |z| <= 1, ties by smaller
    argument. Returns arg(z) in (-pi, pi] for the steering convention
    a_g = exp(+j*g*psi).

    The signal root of an exact covariance is a double root pinned to the
    unit circle, where companion-matrix accuracy degrades to ~sqrt(eps); the
    selected argument is therefore polished by Newton steps on the
    circle-restricted spectrum a(psi)^H C a(psi), which restores full
    precision and leaves noisy estimates essentially unchanged.

    Raises
    ------
    ValueError
        If every root collapses to the origin (degenerate C).
    """
    U_N = np.asarray(U_N)
    G = U_N.shape[0]
    if G < 2:
        raise ValueError("need at least 2 virtual elements")
    C = U_N @ U_N.conj().T
    # coefficient of z^(k + G - 1) is the sum of C's k-th diagonal
    coeffs = np.array([np.trace(C, offset=k) for k in range(G - 1, -G, -1)])
    roots = np.roots(coeffs)
    if roots.size == 0:
        raise ValueError("degenerate noise-subspace polynomial (no roots)")
    mags = np.abs(roots)
    inside = roots[mags <= 1.0 + 1e-9]
    if inside.size == 0 or np.abs(inside).max() < 1e-12:
        raise ValueError("degenerate noise-subspace polynomial (roots at origin)")
    best = np.abs(inside).max()
    near_best = inside[np.abs(inside) >= best - 1e-12]
    z = near_best[np.argmin(np.angle(near_best))]

    # Newton polish of psi on f(psi) = sum_k c_k e^{j k psi} (real for
    # Hermitian C); guarded so a flat or concave spectrum keeps the raw root
    ks = np.arange(-(G - 1), G)
    c = np.array([np.trace(C, offset=int(k)) for k in ks])
    psi = float(np.angle(z))
    for _ in range(8):
        e = np.exp(1j * ks * psi)
        d1 = float(np.sum(1j * ks * c * e).real)
        d2 = float(np.sum(-(ks * ks) * c * e).real)
        if not np.isfinite(d1) or not np.isfinite(d2) or d2 <= 0.0:
            break
        step = d1 / d2
        if abs(step) > 0.1:
            break
        psi -= step
        if abs(step) < 1e-15:
            break
    return wrap_angle(psi)


def ambiguous_set(arg_z: float, cfg: ArrayConfig, group: int = 1) -> AmbiguousAngleSet:
    """Enumerate the Ms aliased candidate directions for one electrical phase.

    Candidate sines are u_i = (arg_z + 2*pi*i)/(pi*Ms) for i = 0..Ms-1,
    wrapped modulo 2 into [-1, 1); consecutive candidates are spaced exactly
    2/Ms on the sine axis. Requires d = lambda/2, which makes the wrap tile
    [-1, 1) without gaps or overlaps.
    """
    if not np.isclose(cfg.d, cfg.wavelength / 2.0, rtol=1e-9, atol=0.0):
        raise ValueError("ambiguity enumeration requires d = lambda/2")
    i = np.arange(cfg.Ms)
    u = (arg_z + 2.0 * np.pi * i) / (np.pi * cfg.Ms)
    u = np.mod(u + 1.0, 2.0) - 1.0
    return AmbiguousAngleSet(group=group, angles=np.arcsin(u), sines=u)


def group_steering(cfg: ArrayConfig, theta: float) -> np.ndarray:
    """Virtual-ULA steering of one group at direction theta (synthesis convention).

    Entry g = exp(-j*(2*pi/lambda)*Ms*d*g*sin(theta)) for g = 0..G-1.
    """
    g = np.arange(cfg.G)
    return np.exp(-1j * (2.0 * np.pi / cfg.wavelength) * cfg.Ms * cfg.d * g * np.sin(theta))


def music_spectrum_oracle(U_N: np.ndarray, cfg: ArrayConfig, grid_step: float) -> float:
    """Grid-search MUSIC direction estimate; test oracle only, never in the pipeline.

    Scans theta over [-pi/2, pi/2] in grid_step increments and returns the
    argmax of 1 / ||U_N^H a_g(theta)||^2. The virtual-ULA spectrum is Ms-fold
    aliased in sin(theta), so the argmax lands on one of the Ms candidate
    branches; ties resolve to the first grid point.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    grid = np.arange(-np.pi / 2.0, np.pi / 2.0 + grid_step / 2.0, grid_step)
    g = np.arange(cfg.G)
    phase = -(2.0 * np.pi / cfg.wavelength) * cfg.Ms * cfg.d
    A = np.exp(1j * phase * np.outer(np.sin(grid), g))
    V = A.conj() @ np.asarray(U_N)
    denom = np.einsum("ij,ij->i", V, V.conj()).real
    return float(grid[np.argmin(denom)])


def group_doa(Y_l: np.ndarray, cfg: ArrayConfig, l: int) -> AmbiguousAngleSet:
    """Full per-group chain: covariance -> noise subspace -> Root-MUSIC -> aliases.

    The returned arg is negated before enumeration because the synthesized
    data carries phase -(2*pi/lambda)*Ms*d*g*sin(theta_l) while root_music_arg
    reports the +j*g*psi convention; the negation makes the candidate set
    contain the physical group direction.
    """
    R = sample_covariance(Y_l)
    U_N = noise_subspace(R, sources=1)
    arg = root_music_arg(U_N)
    return ambiguous_set(wrap_angle(-arg), cfg, group=l)


def true_coefficient(cfg: ArrayConfig, pos: EmitterPosition) -> int:
    """Ambiguity coefficient of the true direction, anchored to group 1.

    Group 1 sees the global direction exactly (its offset is zero), so the
    branch index follows from how far pi*Ms*sin(theta) sits from its wrapped
    representative: i_t = round((psi - wrap(psi)) / (2*pi)) mod Ms.
    """
    psi = (2.0 * np.pi / cfg.wavelength) * cfg.Ms * cfg.d * np.sin(pos.theta)
    k = round((psi - wrap_angle(psi)) / (2.0 * np.pi))
    return int(k % cfg.Ms)
