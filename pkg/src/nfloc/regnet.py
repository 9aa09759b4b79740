"""Regression-network angle estimator and its training pipeline.

An MLNN maps the full ambiguous-angle vector (L groups x Ms candidates) to the
L per-group true angles; a single linear perceptron fuses those into the final
angle; range then comes from pairwise triangulation of the per-group angles.
Everything runs on plain numpy with hand-written reverse-mode gradients so
training is bit-reproducible from a seed.

Input/target convention (fixed here because a fixed-width network needs one):
groups in index order, the Ms candidate angles of each group sorted ascending,
and all angles scaled by 2/pi into [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .array_model import (ArrayConfig, EmitterPosition, fresnel_interval,
                          group_true_angle, synthesize, BeamformerSetting)
from .subspace import AmbiguousAngleSet

ANGLE_SCALE = 2.0 / np.pi

MODEL_MAGIC = b"NFRN"
DATASET_MAGIC = b"NFDS"
FORMAT_VERSION = 1


class TrainingDiverged(Exception):
    """Loss went non-finite during optimization."""


class AllPairsDegenerate(Exception):
    """No group pair had enough angular separation to triangulate a range."""


@dataclass(frozen=True)
class MlnnParams:
    """Layered affine weights; hidden layers are followed by ReLU."""
    weights: tuple[np.ndarray, ...]   # layer h: (out_h, in_h)
    biases: tuple[np.ndarray, ...]    # layer h: (out_h,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases layer counts differ")
        for h, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {h}: weight {W.shape} vs bias {b.shape}")
            if h > 0 and W.shape[1] != self.weights[h - 1].shape[0]:
                raise ValueError(f"layer {h}: input dim {W.shape[1]} does not chain")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {h}: non-finite parameters")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)


@dataclass(frozen=True)
class PerceptronParams:
    weight: np.ndarray   # (L,)
    bias: float

    def __post_init__(self):
        if self.weight.ndim != 1:
            raise ValueError("perceptron weight must be a vector")
        if not (np.all(np.isfinite(self.weight)) and np.isfinite(self.bias)):
            raise ValueError("non-finite perceptron parameters")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    joint: bool = False   # default mirrors the two-stage description

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass(frozen=True)
class TrainingSample:
    input: np.ndarray          # (L*Ms,) scaled angles
    target_groups: np.ndarray  # (L,) scaled per-group true angles
    target_theta: float        # scaled global angle

    def __post_init__(self):
        if not (np.all(np.isfinite(self.input))
                and np.all(np.isfinite(self.target_groups))
                and np.isfinite(self.target_theta)):
            raise ValueError("non-finite training sample")


def mlnn_forward(p: MlnnParams, x: np.ndarray) -> np.ndarray:
    """Affine + ReLU through the hidden layers, affine only at the output."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dims[0],):
        raise ValueError(f"input shape {x.shape}, expected ({p.dims[0]},)")
    return _mlnn_batch(p, x[None, :])[0][-1][0]


def perceptron_forward(p: PerceptronParams, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape != p.weight.shape:
        raise ValueError(f"fusion input shape {v.shape}, expected {p.weight.shape}")
    return float(v @ p.weight + p.bias)


def _mlnn_batch(p: MlnnParams, X: np.ndarray):
    """Forward pass over a batch; returns (activations, preactivations)."""
    acts = [X]
    pres = []
    H = len(p.weights)
    for h, (W, b) in enumerate(zip(p.weights, p.biases)):
        Z = acts[-1] @ W.T + b
        pres.append(Z)
        acts.append(np.maximum(Z, 0.0) if h < H - 1 else Z)
    return acts, pres


def loss_and_gradients(p_mlnn: MlnnParams, p_perc: PerceptronParams,
                       X: np.ndarray, target_groups: np.ndarray,
                       target_theta: np.ndarray, mode: str = "joint"):
    """MSE losses and exact reverse-mode gradients.

    mode selects which MSE terms make up the loss: "head" is the per-group
    error alone, "fused" the final-angle error alone, "joint" their sum.
    Gradients are always the exact derivatives of the selected loss for every
    parameter; staged training simply ignores the ones it does not update.
    ReLU uses subgradient 0 at 0. Returns (loss, (dWs, dbs), (dw, db)).
    """
    if mode not in ("head", "fused", "joint"):
        raise ValueError(f"unknown mode {mode!r}")
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    acts, pres = _mlnn_batch(p_mlnn, X)
    Y = acts[-1]                      # (n, L)
    L_out = Y.shape[1]

    head_res = Y - target_groups
    head_loss = float(np.mean(head_res ** 2))
    fused = Y @ p_perc.weight + p_perc.bias
    fused_res = fused - target_theta
    fused_loss = float(np.mean(fused_res ** 2))

    dY = np.zeros_like(Y)
    dw = np.zeros_like(p_perc.weight)
    db = 0.0
    loss = 0.0
    if mode in ("head", "joint"):
        loss += head_loss
        dY += 2.0 * head_res / (n * L_out)
    if mode in ("fused", "joint"):
        loss += fused_loss
        dfused = 2.0 * fused_res / n
        dw = Y.T @ dfused
        db = float(dfused.sum())
        dY += dfused[:, None] * p_perc.weight[None, :]

    dWs = [np.zeros_like(W) for W in p_mlnn.weights]
    dbs = [np.zeros_like(b) for b in p_mlnn.biases]
    dZ = dY
    for h in range(len(p_mlnn.weights) - 1, -1, -1):
        dWs[h] = dZ.T @ acts[h]
        dbs[h] = dZ.sum(axis=0)
        if h > 0:
            dZ = (dZ @ p_mlnn.weights[h]) * (pres[h - 1] > 0.0)
    return loss, (dWs, dbs), (dw, db)


def _init_params(dims: Sequence[int], rng: np.random.Generator
                 ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray, float]:
    Ws, bs = [], []
    for h in range(len(dims) - 1):
        fan_in = dims[h]
        scale = np.sqrt(2.0 / fan_in) if h < len(dims) - 2 else np.sqrt(1.0 / fan_in)
        Ws.append(rng.standard_normal((dims[h + 1], fan_in)) * scale)
        bs.append(np.zeros(dims[h + 1]))
    L = dims[-1]
    w_p = rng.standard_normal(L) * np.sqrt(1.0 / L)
    return Ws, bs, w_p, 0.0


class _Adam:
    def __init__(self, shapes, lr, b1, b2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _stack(dataset: Sequence[TrainingSample]):
    X = np.array([s.input for s in dataset])
    Tg = np.array([s.target_groups for s in dataset])
    Tt = np.array([s.target_theta for s in dataset])
    return X, Tg, Tt


def train(dataset: Sequence[TrainingSample], cfg: TrainConfig,
          hidden: Sequence[int] = (12, 8),
          history: list | None = None) -> tuple[MlnnParams, PerceptronParams]:
    """Seeded Adam training; returns the lowest-validation-loss parameters.

    Default is two sequential stages of cfg.epochs each: the MLNN head on the
    per-group loss, then the fusion perceptron on the final-angle loss with
    the MLNN frozen. cfg.joint=True instead optimizes everything on the summed
    loss in one stage. A tenth of the data (seeded shuffle) is held out for
    validation. If history is a list, (stage, epoch, train_loss, val_loss)
    rows are appended per epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    X, Tg, Tt = _stack(dataset)
    n, in_dim = X.shape
    L = Tg.shape[1]
    dims = [in_dim, *hidden, L]

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = max(1, n // 10) if n > 1 else 0
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:          # single-sample corner: train == val
        tr_idx = val_idx
    Xv, Tgv, Ttv = X[val_idx], Tg[val_idx], Tt[val_idx]
    Ws, bs, w_p, b_p = _init_params(dims, rng)

    def val_loss(mode):
        if val_idx.size == 0:
            return np.inf
        mp = MlnnParams(weights=tuple(Ws), biases=tuple(bs))
        pp = PerceptronParams(weight=w_p.copy(), bias=b_p)
        loss, _, _ = loss_and_gradients(mp, pp, Xv, Tgv, Ttv, mode=mode)
        return loss

    def run_stage(stage: str, mode: str, mlnn_live: bool, perc_live: bool):
        nonlocal Ws, bs, w_p, b_p
        shapes = ([W.shape for W in Ws] + [b.shape for b in bs]) if mlnn_live else []
        if perc_live:
            shapes += [w_p.shape, ()]
        opt = _Adam(shapes, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        best = (np.inf, None)
        nW = len(Ws)
        for epoch in range(cfg.epochs):
            order = rng.permutation(tr_idx.size)
            ep_loss, n_batches = 0.0, 0
            for start in range(0, tr_idx.size, cfg.batch_size):
                idx = tr_idx[order[start:start + cfg.batch_size]]
                mp = MlnnParams(weights=tuple(Ws), biases=tuple(bs))
                pp = PerceptronParams(weight=w_p.copy(), bias=b_p)
                loss, (dWs, dbs), (dw, db) = loss_and_gradients(
                    mp, pp, X[idx], Tg[idx], Tt[idx], mode=mode)
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"{stage} stage, epoch {epoch}: loss={loss}")
                params, grads = [], []
                if mlnn_live:
                    params += Ws + bs
                    grads += dWs + dbs
                if perc_live:
                    bp_box = np.array(b_p)
                    params += [w_p, bp_box]
                    grads += [dw, np.array(db)]
                opt.step(params, grads)
                if perc_live:
                    b_p = float(bp_box)
                ep_loss += loss
                n_batches += 1
            vl = val_loss(mode)
            if history is not None:
                history.append((stage, epoch, ep_loss / n_batches, vl))
            if vl < best[0]:
                best = (vl, ([W.copy() for W in Ws], [b.copy() for b in bs],
                             w_p.copy(), b_p))
        if best[1] is not None:
            Ws[:], bs[:] = best[1][0], best[1][1]
            w_p, b_p = best[1][2], best[1][3]

    if cfg.joint:
        run_stage("joint", "joint", mlnn_live=True, perc_live=True)
    else:
        run_stage("head", "head", mlnn_live=True, perc_live=False)
        run_stage("fused", "fused", mlnn_live=False, perc_live=True)
    return (MlnnParams(weights=tuple(Ws), biases=tuple(bs)),
            PerceptronParams(weight=w_p, bias=b_p))


def input_vector(sets: Sequence[AmbiguousAngleSet]) -> np.ndarray:
    """Scaled network input from the per-group ambiguous sets."""
    return np.concatenate([np.sort(np.asarray(s.angles)) for s in sets]) * ANGLE_SCALE


def regnet_infer(p_mlnn: MlnnParams, p_perc: PerceptronParams,
                 sets: Sequence[AmbiguousAngleSet]) -> tuple[np.ndarray, float]:
    """Per-group angle estimates and the fused final angle, both in radians."""
    x = input_vector(sets)
    if x.shape[0] != p_mlnn.dims[0]:
        raise ValueError(
            f"model expects {p_mlnn.dims[0]} inputs, got {x.shape[0]} "
            f"(L={len(sets)}, Ms={sets[0].Ms})")
    v = mlnn_forward(p_mlnn, x)
    theta_scaled = perceptron_forward(p_perc, v)
    return v / ANGLE_SCALE, float(theta_scaled / ANGLE_SCALE)


def regnet_range(theta_hat: float, per_group_angles: np.ndarray,
                 cfg: ArrayConfig) -> float:
    """Range by triangulating every non-degenerate group pair and averaging.

    r_hat(l1,l2) = dd(l1,l2) cos(t_l1) cos(t_l2) / (cos(theta_hat) sin(t_l1 - t_l2));
    pairs with |sin(t_l1 - t_l2)| < 1e-12 or a non-finite quotient are skipped.
    """
    t = np.asarray(per_group_angles, dtype=float)
    if t.shape != (cfg.L,):
        raise ValueError(f"need {cfg.L} per-group angles, got shape {t.shape}")
    ct_hat = np.cos(theta_hat)
    vals = []
    for l1 in range(1, cfg.L + 1):
        for l2 in range(l1 + 1, cfg.L + 1):
            s = np.sin(t[l1 - 1] - t[l2 - 1])
            if abs(s) < 1e-12:
                continue
            r = (cfg.delta_d_pair(l1, l2) * np.cos(t[l1 - 1]) * np.cos(t[l2 - 1])
                 / (ct_hat * s))
            if np.isfinite(r):
                vals.append(r)
    if not vals:
        raise AllPairsDegenerate("no usable group pair for range recovery")
    return float(np.mean(vals))


def generate_dataset(cfg: ArrayConfig, theta_grid: np.ndarray,
                     snr_list: Sequence[float], trials_per_point: int,
                     seed: int, snapshots: int = 100) -> list[TrainingSample]:
    """Synthesize-and-estimate training corpus.

    For each (theta, snr, trial) a range is drawn uniformly from the Fresnel
    interval, snapshots are synthesized, and the per-group subspace DOA output
    becomes the input vector; labels are the geometric per-group true angles
    and theta itself. Per-sample RNG streams are derived from
    (seed, theta index, snr index, trial), so the corpus is reproducible and
    order-independent.
    """
    from .localize import ambiguous_sets

    fresnel = fresnel_interval(cfg)
    bf = BeamformerSetting.zeros(cfg)
    samples: list[TrainingSample] = []
    for gi, theta in enumerate(np.asarray(theta_grid, dtype=float)):
        if not -np.pi / 2 <= theta <= np.pi / 2:
            raise ValueError(f"grid angle {theta} outside [-pi/2, pi/2]")
        for si, snr in enumerate(snr_list):
            for trial in range(trials_per_point):
                ss = np.random.SeedSequence(entropy=(seed, gi, si, trial))
                rng = np.random.default_rng(ss)
                r = rng.uniform(fresnel.r_min, fresnel.r_max)
                pos = EmitterPosition(theta=float(theta), range_m=float(r))
                snaps = synthesize(cfg, pos, bf, snr, snapshots, rng)
                sets = ambiguous_sets(snaps, cfg)
                targets = np.array([group_true_angle(cfg, l, pos)
                                    for l in range(1, cfg.L + 1)])
                samples.append(TrainingSample(
                    input=input_vector(sets),
                    target_groups=targets * ANGLE_SCALE,
                    target_theta=float(theta) * ANGLE_SCALE))
    return samples


# ---------------------------------------------------------------- persistence

def save_model(path, p_mlnn: MlnnParams, p_perc: PerceptronParams) -> None:
    """Versioned little-endian binary dump; round-trips bitwise."""
    dims = p_mlnn.dims
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        for W, b in zip(p_mlnn.weights, p_mlnn.biases):
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(p_perc.weight, dtype="<f8").tobytes())
        f.write(struct.pack("<d", p_perc.bias))


def load_model(path) -> tuple[MlnnParams, PerceptronParams]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"not a model file (magic {magic!r})")
        version, n_dims = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        dims = struct.unpack(f"<{n_dims}I", f.read(4 * n_dims))
        Ws, bs = [], []
        for h in range(n_dims - 1):
            out_d, in_d = dims[h + 1], dims[h]
            Ws.append(np.frombuffer(f.read(8 * out_d * in_d), dtype="<f8")
                      .reshape(out_d, in_d).copy())
            bs.append(np.frombuffer(f.read(8 * out_d), dtype="<f8").copy())
        L = dims[-1]
        w_p = np.frombuffer(f.read(8 * L), dtype="<f8").copy()
        (b_p,) = struct.unpack("<d", f.read(8))
        trailing = f.read(1)
    if trailing:
        raise ValueError("trailing bytes after model payload")
    return (MlnnParams(weights=tuple(Ws), biases=tuple(bs)),
            PerceptronParams(weight=w_p, bias=b_p))


def save_dataset(path, dataset: Sequence[TrainingSample]) -> None:
    X, Tg, Tt = _stack(dataset)
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<IIII", FORMAT_VERSION, X.shape[0], X.shape[1], Tg.shape[1]))
        for i in range(X.shape[0]):
            f.write(np.ascontiguousarray(X[i], dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(Tg[i], dtype="<f8").tobytes())
            f.write(struct.pack("<d", Tt[i]))


def load_dataset(path) -> list[TrainingSample]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != DATASET_MAGIC:
            raise ValueError(f"not a dataset file (magic {magic!r})")
        version, n, in_dim, L = struct.unpack("<IIII", f.read(16))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format version {version}")
        out = []
        for _ in range(n):
            x = np.frombuffer(f.read(8 * in_dim), dtype="<f8").copy()
            tg = np.frombuffer(f.read(8 * L), dtype="<f8").copy()
            (tt,) = struct.unpack("<d", f.read(8))
            out.append(TrainingSample(input=x, target_groups=tg, target_theta=tt))
        if f.read(1):
            raise ValueError("trailing bytes after dataset payload")
    return out
