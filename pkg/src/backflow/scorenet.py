"""Regression network for the backward drift.

A single fully connected network learns the per-transition backward drift
target ``(x[k] - x[k+1]) / dt`` as a function of the successor state and the
step index, for all steps at once.  The state is standardised, the step is
mapped to physical time and embedded with fixed sine/cosine features, and
the network output is de-standardised back to physical drift units.

Training is plain minibatch Adam on the mean squared error in standardised
target units, with exact hand-written backpropagation (no autodiff
dependency -- the gradient is checked against finite differences in the
test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import DomainError, ModelDivergenceError
from .forward import TimeGrid, TrajectoryBatch

EMBED_BASE = 10000.0


def _silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _silu_grad_from_sigmoid(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    # s * (1 + x * (1 - s)), built in place to avoid temporaries
    out = 1.0 - s
    out *= x
    out += 1.0
    out *= s
    return out


@dataclass(frozen=True)
class TimeEmbeddingSpec:
    """Fixed sine/cosine features of physical time.

    ``frequencies`` is a geometric sequence; layout is [sin block | cos
    block].  The default grid scaling puts the fastest period at a few time
    steps and the slowest far beyond the horizon, so embeddings of distinct
    grid steps are pairwise distinct.
    """

    dim: int
    frequencies: np.ndarray

    def __post_init__(self):
        if self.dim % 2 != 0 or self.dim < 2:
            raise DomainError(f"embedding dim must be a positive even integer, got {self.dim}")
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if freqs.shape != (self.dim // 2,) or np.any(freqs <= 0):
            raise DomainError("frequencies must be dim/2 positive scalars")
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def for_grid(cls, grid: TimeGrid, dim: int = 32) -> "TimeEmbeddingSpec":
        j = np.arange(dim // 2)
        freqs = EMBED_BASE ** (-2.0 * j / dim) / grid.dt
        return cls(dim=dim, frequencies=freqs)

    def embed(self, t) -> np.ndarray:
        """Embed physical times; shape (..., dim)."""
        phase = np.multiply.outer(np.asarray(t, dtype=np.float64), self.frequencies)
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


def time_embed(spec: TimeEmbeddingSpec, k: int, grid: TimeGrid) -> np.ndarray:
    """Embedding of transition index k (valid range 0 .. n_points - 2)."""
    if not 0 <= k <= grid.n_points - 2:
        raise DomainError(f"transition index {k} out of range for grid of {grid.n_points} points")
    return spec.embed(k * grid.dt)


@dataclass(frozen=True)
class NormStats:
    """Standardisation statistics, computed on the training split only."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def identity(cls) -> "NormStats":
        one = np.ones(2)
        zero = np.zeros(2)
        return cls(x_mean=zero, x_std=one, y_mean=zero.copy(), y_std=one.copy())

    @classmethod
    def from_pairs(cls, pairs: "PairSet") -> "NormStats":
        def _std(arr):
            s = arr.std(axis=0)
            return np.where(s > 0, s, 1.0)  # constant columns degrade to identity scale

        return cls(
            x_mean=pairs.x.mean(axis=0),
            x_std=_std(pairs.x),
            y_mean=pairs.y.mean(axis=0),
            y_std=_std(pairs.y),
        )


class TrainingPair(NamedTuple):
    x_next: np.ndarray
    k: int
    target: np.ndarray


@dataclass
class PairSet:
    """Flat regression dataset: successor states, step indices, drift targets."""

    x: np.ndarray  # (M, 2) successor states x[k+1]
    k: np.ndarray  # (M,) transition indices
    y: np.ndarray  # (M, 2) targets (x[k] - x[k+1]) / dt
    dt: float
    n_points: int

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> TrainingPair:
        return TrainingPair(self.x[i], int(self.k[i]), self.y[i])

    def take(self, idx) -> "PairSet":
        return PairSet(self.x[idx], self.k[idx], self.y[idx], self.dt, self.n_points)


def build_training_pairs(batch: TrajectoryBatch) -> PairSet:
    """One pair per transition per trajectory: N * (L - 1) rows."""
    states = batch.states
    if states.shape[0] == 0:
        raise DomainError("cannot build pairs from an empty batch")
    n, L, _ = states.shape
    dt = batch.grid.dt
    x_next = states[:, 1:, :].reshape(-1, 2)
    targets = ((states[:, :-1, :] - states[:, 1:, :]) / dt).reshape(-1, 2)
    k = np.tile(np.arange(L - 1, dtype=np.int64), n)
    return PairSet(x=x_next, k=k, y=targets, dt=dt, n_points=L)


@dataclass(frozen=True)
class Architecture:
    """Network shape; the defaults are the ones used everywhere in the project."""

    state_width: int = 64
    hidden_width: int = 128
    n_hidden: int = 3
    embed_dim: int = 32
    activation: str = "silu"


@dataclass
class ScoreModel:
    """MLP drift regressor bound to a specific time grid.

    ``weights[i]`` has shape (fan_in, fan_out); layer 0 encodes the
    standardised state, the embedding is concatenated after it, and the last
    layer is linear with two outputs (one per component).
    """

    weights: list
    biases: list
    activation: str
    embed: TimeEmbeddingSpec
    norm: NormStats
    n_points: int
    dt: float

    def layer_dims(self) -> list:
        return [w.shape for w in self.weights]

    def _check_k(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0) or np.any(k > self.n_points - 2):
            raise DomainError(
                f"transition index out of range 0..{self.n_points - 2}"
            )
        return k

    def _forward_raw(self, x: np.ndarray, k: np.ndarray, want_cache: bool = False):
        """Raw (standardised-unit) network output, optionally with caches."""
        xn = (x - self.norm.x_mean) / self.norm.x_std
        emb = self.embed.embed(k * self.dt)
        pre, sig, post = [], [], []
        a = xn @ self.weights[0]
        a += self.biases[0]
        s = _sigmoid(a)
        h = a * s
        pre.append(a)
        sig.append(s)
        post.append(h)
        state_width = h.shape[1]
        concat = np.empty((x.shape[0], state_width + emb.shape[-1]))
        concat[:, :state_width] = h
        concat[:, state_width:] = emb
        h = concat
        for w, b in zip(self.weights[1:-1], self.biases[1:-1]):
            a = h @ w
            a += b
            s = _sigmoid(a)
            h = a * s
            pre.append(a)
            sig.append(s)
            post.append(h)
        g = h @ self.weights[-1]
        g += self.biases[-1]
        if want_cache:
            return g, (xn, emb, concat, pre, sig, post)
        return g

    def drift(self, states, k) -> np.ndarray:
        """Physical-unit drift prediction for a batch of states at step(s) k."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        k = self._check_k(k)
        g = self._forward_raw(states, k)
        out = g * self.norm.y_std + self.norm.y_mean
        if not np.all(np.isfinite(out)):
            raise ModelDivergenceError("network produced a non-finite drift value")
        return out


def net_forward(model: ScoreModel, x_next, k: int) -> np.ndarray:
    """Single-state physical-unit prediction."""
    return model.drift(np.asarray(x_next, dtype=np.float64)[None, :], k)[0]


def init_model(
    grid: TimeGrid,
    norm: NormStats,
    seed: int,
    arch: Architecture = Architecture(),
) -> ScoreModel:
    """Uniform fan-in initialisation, deterministic in the seed."""
    if arch.activation != "silu":
        raise DomainError(f"unsupported activation {arch.activation!r}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5EED)))
    dims = [(2, arch.state_width), (arch.state_width + arch.embed_dim, arch.hidden_width)]
    dims += [(arch.hidden_width, arch.hidden_width)] * (arch.n_hidden - 1)
    dims += [(arch.hidden_width, 2)]
    weights, biases = [], []
    for fan_in, fan_out in dims:
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ScoreModel(
        weights=weights,
        biases=biases,
        activation=arch.activation,
        embed=TimeEmbeddingSpec.for_grid(grid, arch.embed_dim),
        norm=norm,
        n_points=grid.n_points,
        dt=grid.dt,
    )


@dataclass
class ModelGrads:
    weights: list
    biases: list


def _batch_loss_grads(model: ScoreModel, x, k, y) -> tuple[float, ModelGrads]:
    """Loss and exact parameter gradient on one minibatch."""
    m = x.shape[0]
    g, (xn, emb, concat, pre, sig, post) = model._forward_raw(x, k, want_cache=True)
    resid = g - (y - model.norm.y_mean) / model.norm.y_std
    value = float(np.mean(np.sum(resid * resid, axis=1)))

    d_out = (2.0 / m) * resid
    n_layers = len(model.weights)
    dW = [None] * n_layers
    db = [None] * n_layers

    # output layer
    h_last = post[-1] if n_layers > 2 else concat
    dW[-1] = h_last.T @ d_out
    db[-1] = d_out.sum(axis=0)
    dh = d_out @ model.weights[-1].T

    # hidden stack (indices n_layers-2 .. 1); layer 1 consumes the concat input
    for i in range(n_layers - 2, 0, -1):
        da = _silu_grad_from_sigmoid(pre[i], sig[i])
        da *= dh
        inp = concat if i == 1 else post[i - 1]
        dW[i] = inp.T @ da
        db[i] = da.sum(axis=0)
        dh = da @ model.weights[i].T

    # state encoder: only the first state_width columns of the concat carry back
    state_width = model.weights[0].shape[1]
    da = _silu_grad_from_sigmoid(pre[0], sig[0])
    da *= dh[:, :state_width]
    dW[0] = xn.T @ da
    db[0] = da.sum(axis=0)
    return value, ModelGrads(weights=dW, biases=db)


def loss(model: ScoreModel, pairs: PairSet, chunk: int = 65536) -> float:
    """Mean squared prediction error in standardised target units.

    Equals the plain mean squared Euclidean distance between predicted and
    target drifts whenever the model's normalisation is the identity.
    Non-negative, and zero exactly at a perfect fit.
    """
    if len(pairs) == 0:
        raise DomainError("loss requires a non-empty pair set")
    total = 0.0
    for start in range(0, len(pairs), chunk):
        sl = slice(start, min(start + chunk, len(pairs)))
        g = model._forward_raw(pairs.x[sl], pairs.k[sl])
        resid = g - (pairs.y[sl] - model.norm.y_mean) / model.norm.y_std
        total += float(np.sum(resid * resid))
    return total / len(pairs)


def loss_gradient(model: ScoreModel, pairs: PairSet) -> ModelGrads:
    """Exact gradient of `loss` restricted to the given pairs."""
    if len(pairs) == 0:
        raise DomainError("gradient requires a non-empty pair set")
    _, grads = _batch_loss_grads(model, pairs.x, pairs.k, pairs.y)
    return grads


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1024
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise DomainError("Adam betas must lie in (0, 1)")


@dataclass
class AdamState:
    step: int
    m_w: list
    v_w: list
    m_b: list
    v_b: list

    @classmethod
    def for_model(cls, model: ScoreModel) -> "AdamState":
        return cls(
            step=0,
            m_w=[np.zeros_like(w) for w in model.weights],
            v_w=[np.zeros_like(w) for w in model.weights],
            m_b=[np.zeros_like(b) for b in model.biases],
            v_b=[np.zeros_like(b) for b in model.biases],
        )


def adam_step(
    state: AdamState, model: ScoreModel, grads: ModelGrads, cfg: TrainConfig
) -> tuple[ScoreModel, AdamState]:
    """One bias-corrected Adam update; returns fresh model and state."""
    t = state.step + 1
    corr1 = 1.0 - cfg.beta1**t
    corr2 = 1.0 - cfg.beta2**t

    def upd(theta, g, m, v):
        m2 = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v2 = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        theta2 = theta - cfg.learning_rate * (m2 / corr1) / (np.sqrt(v2 / corr2) + cfg.eps)
        return theta2, m2, v2

    new_w, new_mw, new_vw = [], [], []
    for w, g, m, v in zip(model.weights, grads.weights, state.m_w, state.v_w):
        w2, m2, v2 = upd(w, g, m, v)
        new_w.append(w2)
        new_mw.append(m2)
        new_vw.append(v2)
    new_b, new_mb, new_vb = [], [], []
    for b, g, m, v in zip(model.biases, grads.biases, state.m_b, state.v_b):
        b2, m2, v2 = upd(b, g, m, v)
        new_b.append(b2)
        new_mb.append(m2)
        new_vb.append(v2)
    new_model = replace(model, weights=new_w, biases=new_b)
    new_state = AdamState(step=t, m_w=new_mw, v_w=new_vw, m_b=new_mb, v_b=new_vb)
    return new_model, new_state


@dataclass
class TrainingReport:
    epochs_run: int
    best_epoch: int
    best_val_loss: float | None
    train_losses: list
    val_losses: list
    stopped_early: bool


def train(
    pairs_train: PairSet,
    pairs_val: PairSet,
    cfg: TrainConfig,
    model: ScoreModel,
) -> tuple[ScoreModel, TrainingReport]:
    """Minibatch Adam with deterministic shuffling and best-validation selection."""
    if len(pairs_train) == 0 or len(pairs_val) == 0:
        raise DomainError("training requires non-empty train and validation pairs")
    if cfg.max_epochs == 0:
        return model, TrainingReport(0, 0, None, [], [], stopped_early=False)

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5450)))
    opt = AdamState.for_model(model)
    best_model = model
    best_val = math.inf
    best_epoch = 0
    train_losses: list[float] = []
    val_losses: list[float] = []
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(pairs_train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = _batch_loss_grads(
                model, pairs_train.x[idx], pairs_train.k[idx], pairs_train.y[idx]
            )
            model, opt = adam_step(opt, model, grads, cfg)
            epoch_loss += value
            n_batches += 1
        train_loss = epoch_loss / n_batches
        val_loss = loss(model, pairs_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise ModelDivergenceError(
                f"loss became non-finite at epoch {epoch} (train={train_loss}, val={val_loss})"
            )
        train_losses.append(train_loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_model = replace(
                model,
                weights=[w.copy() for w in model.weights],
                biases=[b.copy() for b in model.biases],
            )
        if epoch - best_epoch >= cfg.patience:
            stopped_early = True
            break

    report = TrainingReport(
        epochs_run=len(train_losses),
        best_epoch=best_epoch,
        best_val_loss=best_val,
        train_losses=train_losses,
        val_losses=val_losses,
        stopped_early=stopped_early,
    )
    return best_model, report
