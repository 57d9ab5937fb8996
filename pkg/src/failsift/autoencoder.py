"""Fully-connected symmetric autoencoder trained with minibatch SGD.

Pure numpy, double precision, single threaded, bit-reproducible per
seed. Training has two phases: each encoder/decoder layer pair is first
pretrained greedily as a denoising autoencoder (input dropout corrupts
the batch, the clean batch is the target), then the whole stack is
fine-tuned end to end. Hidden layers are rectified, the bottleneck and
the reconstruction output are linear.

Inputs are standardized column-wise (zero mean, scaled by the maximum
absolute deviation, constant columns to zero) with the scaler stored on
the model. Bounded scaling rather than unit variance: count features
fire rarely in some columns, and dividing those by their tiny standard
deviation turns single events into huge outliers that dominate the
squared loss and wreck the embedding geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidDims, NonFiniteLoss

MODEL_FORMAT_VERSION = 1
HISTORY_EVERY = 100  # steps per recorded loss block


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str  # "relu" | "linear"

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]


def _glorot(n_in: int, n_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def forward_layers(layers: Sequence[DenseLayer], X: np.ndarray):
    """Forward pass; returns (output, caches) for backprop."""
    caches = []
    out = X
    for layer in layers:
        z = out @ layer.weight.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        caches.append((out, z))
        out = a
    return out, caches


def backward_layers(layers: Sequence[DenseLayer], caches, d_out: np.ndarray):
    """Backprop d_loss/d_output; returns (per-layer (dW, db), d_input)."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore
    grad = d_out
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        x_in, z = caches[idx]
        dz = grad * (z > 0.0) if layer.activation == "relu" else grad
        grads[idx] = (dz.T @ x_in, dz.sum(axis=0))
        grad = dz @ layer.weight
    return grads, grad


class SgdMomentum:
    """Classic momentum: v = mu*v - lr*g; p += v. Buffers per parameter."""

    def __init__(self, params: Sequence[np.ndarray], momentum: float, weight_decay: float = 0.0):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray], lr: float) -> None:
        for p, g, v in zip(self.params, grads, self.velocity):
            if self.weight_decay:
                g = g + self.weight_decay * p
            v *= self.momentum
            v -= lr * g
            p += v


@dataclass(frozen=True)
class SgdConfig:
    """Optimizer settings. Defaults follow the full-scale recipe; see
    desk_sgd_config() for the fast preset used by tests and the CLI."""

    learning_rate: float = 0.1
    momentum: float = 0.9
    lr_drop_every: int = 20000  # divide the rate by 10 this often
    weight_decay: float = 0.0
    batch_size: int = 256
    pretrain_steps: int = 100000
    finetune_steps: int = 100000
    dropout: float = 0.2  # input corruption during pretraining only
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr_drop_every < 1:
            raise ValueError("lr_drop_every must be >= 1")

    def rate_at(self, step: int) -> float:
        return self.learning_rate / (10 ** (step // self.lr_drop_every))


def desk_sgd_config(**overrides) -> SgdConfig:
    """Desk-scale preset: same optimizer, 5000-step phases."""
    base = SgdConfig(pretrain_steps=5000, finetune_steps=5000)
    return replace(base, **overrides)


@dataclass
class Autoencoder:
    """Symmetric encoder/decoder stack with its input scaler."""

    encoder: list[DenseLayer]
    decoder: list[DenseLayer]
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.encoder[0].weight.shape[1],) + tuple(
            layer.weight.shape[0] for layer in self.encoder
        )

    @property
    def bottleneck(self) -> int:
        return self.encoder[-1].weight.shape[0]

    def all_params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.encoder + self.decoder:
            out.extend(layer.params)
        return out

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.input_mean is None:
            return X
        return (X - self.input_mean) / self.input_scale

    def encode(self, X: np.ndarray) -> np.ndarray:
        """Forward pass through the encoder only."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.dims[0]:
            raise DimensionMismatch(
                f"expected {self.dims[0]} input features, got {X.shape[1]}"
            )
        out, _ = forward_layers(self.encoder, self.standardize(X))
        return out[0] if single else out

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        """Encode then decode (output stays in standardized space)."""
        X = np.asarray(X, dtype=np.float64)
        out, _ = forward_layers(self.encoder + self.decoder, self.standardize(X))
        return out

    def save(self, path: str | Path) -> None:
        arrays = {
            "version": np.array([MODEL_FORMAT_VERSION]),
            "dims": np.array(self.dims),
            "mean": self.input_mean if self.input_mean is not None else np.array([]),
            "scale": self.input_scale if self.input_scale is not None else np.array([]),
        }
        for i, layer in enumerate(self.encoder):
            arrays[f"enc_w{i}"] = layer.weight
            arrays[f"enc_b{i}"] = layer.bias
        for i, layer in enumerate(self.decoder):
            arrays[f"dec_w{i}"] = layer.weight
            arrays[f"dec_b{i}"] = layer.bias
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Autoencoder":
        with np.load(path) as data:
            version = int(data["version"][0])
            if version != MODEL_FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {version}")
            dims = tuple(int(x) for x in data["dims"])
            depth = len(dims) - 1
            encoder = [
                DenseLayer(
                    weight=data[f"enc_w{i}"],
                    bias=data[f"enc_b{i}"],
                    activation="relu" if i < depth - 1 else "linear",
                )
                for i in range(depth)
            ]
            decoder = [
                DenseLayer(
                    weight=data[f"dec_w{i}"],
                    bias=data[f"dec_b{i}"],
                    activation="relu" if i < depth - 1 else "linear",
                )
                for i in range(depth)
            ]
            mean = data["mean"] if data["mean"].size else None
            scale = data["scale"] if data["scale"].size else None
        return cls(encoder=encoder, decoder=decoder, input_mean=mean, input_scale=scale)


def encoder_dims(d: int, m: int, depth: int) -> list[int]:
    """Geometric interpolation from d down to m over `depth` layers.

    dims[l] = round(d * (m/d)^(l/depth)), endpoints forced, strict
    decrease enforced by clamping.
    """
    if not 2 <= depth <= 4:
        raise InvalidDims(f"encoder depth must be in [2, 4], got {depth}")
    if not (d > m >= 1):
        raise InvalidDims(f"need input dim > bottleneck >= 1, got d={d}, m={m}")
    if d - m < depth:
        raise InvalidDims(
            f"no strictly decreasing {depth}-layer chain exists from {d} to {m}"
        )
    ratio = m / d
    dims = [int(np.floor(d * ratio ** (level / depth) + 0.5)) for level in range(depth + 1)]
    dims[0], dims[-1] = d, m
    for level in range(1, depth):
        upper = dims[level - 1] - 1
        lower = m + (depth - level)
        dims[level] = min(max(dims[level], lower), upper)
    return dims


def init_autoencoder(d: int, m: int, depth: int = 2, seed: int = 0) -> Autoencoder:
    """Fresh symmetric autoencoder, Glorot-uniform weights, zero biases."""
    dims = encoder_dims(d, m, depth)
    rng = np.random.default_rng(seed)
    encoder = [
        DenseLayer(
            weight=_glorot(dims[i], dims[i + 1], rng),
            bias=np.zeros(dims[i + 1]),
            activation="relu" if i < depth - 1 else "linear",
        )
        for i in range(depth)
    ]
    rev = dims[::-1]
    decoder = [
        DenseLayer(
            weight=_glorot(rev[i], rev[i + 1], rng),
            bias=np.zeros(rev[i + 1]),
            activation="relu" if i < depth - 1 else "linear",
        )
        for i in range(depth)
    ]
    return Autoencoder(encoder=encoder, decoder=decoder)


class _BatchSampler:
    """Shuffled-epoch minibatch index stream, deterministic per rng."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


@dataclass
class PhaseHistory:
    name: str
    records: list[tuple[int, float, float]] = field(default_factory=list)  # step, loss, lr


def _train_phase(
    layers: list[DenseLayer],
    data: np.ndarray,
    target_of_batch,
    cfg: SgdConfig,
    rng: np.random.Generator,
    steps: int,
    dropout: float,
    name: str,
) -> PhaseHistory:
    sampler = _BatchSampler(data.shape[0], cfg.batch_size, rng)
    params = [p for layer in layers for p in layer.params]
    opt = SgdMomentum(params, cfg.momentum, cfg.weight_decay)
    history = PhaseHistory(name=name)
    block_sum, block_n = 0.0, 0
    for step in range(steps):
        idx = sampler.next()
        batch = data[idx]
        target = target_of_batch(batch)
        if dropout > 0.0:
            mask = rng.random(batch.shape) >= dropout
            batch = batch * mask
        out, caches = forward_layers(layers, batch)
        diff = out - target
        with np.errstate(over="ignore"):
            loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise NonFiniteLoss(
                f"{name}: loss became non-finite at step {step} "
                "(check input scaling / learning rate)"
            )
        grads_by_layer, _ = backward_layers(layers, caches, 2.0 * diff / diff.size)
        flat = [g for pair in grads_by_layer for g in pair]
        opt.step(flat, cfg.rate_at(step))
        block_sum += loss
        block_n += 1
        if (step + 1) % HISTORY_EVERY == 0:
            history.records.append((step + 1, block_sum / block_n, cfg.rate_at(step)))
            block_sum, block_n = 0.0, 0
    if block_n:
        history.records.append((steps, block_sum / block_n, cfg.rate_at(steps - 1)))
    return history


def train_autoencoder(
    model: Autoencoder, X: np.ndarray, cfg: SgdConfig | None = None
) -> tuple[Autoencoder, list[PhaseHistory]]:
    """Greedy layer-wise pretraining, then end-to-end fine-tuning.

    Fits the column scaler on X (zero mean, max-absolute-deviation
    scale), stores it on the model, and trains in standardized space
    with mean-squared-error reconstruction loss. Loss history carries
    one (step, mean loss, lr) record per 100-step block of each phase.
    Returns the (mutated) model and the history.
    """
    cfg = cfg or SgdConfig()
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    spread = np.abs(X - mean).max(axis=0)
    # constant columns map to zero; the tolerance absorbs the rounding
    # jitter of the mean so bitwise-constant columns stay exactly zero
    constant = spread <= 1e-12 * (1.0 + np.abs(mean))
    mean = np.where(constant, X[0], mean)
    scale = np.where(constant, 1.0, spread)
    model.input_mean = mean
    model.input_scale = scale
    Xs = (X - mean) / scale

    rng = np.random.default_rng(cfg.seed)
    histories: list[PhaseHistory] = []
    depth = len(model.encoder)

    # Phase 1: denoising pretraining, one encoder/decoder pair at a time.
    # The pair reconstructs the previous layer's (clean) output from a
    # dropout-corrupted copy; trained decoders land at their mirrored
    # stack position.
    for level in range(depth):
        data, _ = forward_layers(model.encoder[:level], Xs)
        pair = [model.encoder[level], model.decoder[depth - 1 - level]]
        histories.append(
            _train_phase(
                pair,
                data,
                target_of_batch=lambda b: b,
                cfg=cfg,
                rng=rng,
                steps=cfg.pretrain_steps,
                dropout=cfg.dropout,
                name=f"pretrain:{level}",
            )
        )

    # Phase 2: end-to-end fine-tuning of the full stack, no corruption.
    histories.append(
        _train_phase(
            model.encoder + model.decoder,
            Xs,
            target_of_batch=lambda b: b,
            cfg=cfg,
            rng=rng,
            steps=cfg.finetune_steps,
            dropout=0.0,
            name="finetune",
        )
    )
    return model, histories


def gradient_check(
    model: Autoencoder,
    batch: np.ndarray,
    loss: str = "reconstruction",
    centroids: np.ndarray | None = None,
    alpha: float = 1.0,
    sample: int = 200,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative error of analytic gradients vs central differences.

    loss="reconstruction" checks every network parameter (subsampled
    down to `sample` entries). loss="dec_kl" checks the clustering loss
    gradients with respect to the embedded points and the centroids,
    holding the target distribution fixed.
    """
    batch = np.asarray(batch, dtype=np.float64)
    rng = np.random.default_rng(seed)

    if loss == "reconstruction":
        Xs = model.standardize(batch)
        layers = model.encoder + model.decoder

        def value() -> float:
            out, _ = forward_layers(layers, Xs)
            diff = out - Xs
            return float(np.mean(diff * diff))

        out, caches = forward_layers(layers, Xs)
        diff = out - Xs
        grads_by_layer, _ = backward_layers(layers, caches, 2.0 * diff / diff.size)
        params = [p for layer in layers for p in layer.params]
        analytic = [g for pair in grads_by_layer for g in pair]
        return _compare_grads(params, analytic, value, rng, sample, step)

    if loss == "dec_kl":
        from .dec import kl_gradients, kl_loss, soft_assign, target_distribution

        Z = np.array(model.encode(batch), dtype=np.float64)
        if centroids is None:
            k = min(3, Z.shape[0])
            centroids = Z[:k] + 0.25
        mu = np.array(centroids, dtype=np.float64)
        P = target_distribution(soft_assign(Z, mu, alpha))

        def value() -> float:
            return kl_loss(P, soft_assign(Z, mu, alpha))

        dZ, dmu = kl_gradients(Z, mu, P, alpha)
        return _compare_grads([Z, mu], [dZ, dmu], value, rng, sample, step)

    raise ValueError(f"unknown loss {loss!r}; expected 'reconstruction' or 'dec_kl'")


def _compare_grads(params, analytic, value, rng, sample, step) -> float:
    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    n_checked = min(sample, total) if total > sample else total
    chosen = rng.choice(total, size=n_checked, replace=False) if total > sample else np.arange(total)
    offsets = np.cumsum([0] + sizes)
    max_err = 0.0
    for flat_index in chosen:
        which = int(np.searchsorted(offsets, flat_index, side="right") - 1)
        local = int(flat_index - offsets[which])
        p = params[which].reshape(-1)
        original = p[local]
        p[local] = original + step
        up = value()
        p[local] = original - step
        down = value()
        p[local] = original
        numeric = (up - down) / (2.0 * step)
        a = float(analytic[which].reshape(-1)[local])
        err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-4)
        max_err = max(max_err, err)
    return max_err
