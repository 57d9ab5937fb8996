"""Joint embedding/centroid optimization for clustering.

After the autoencoder is pretrained, the encoder and a set of K
centroids in the embedded space are trained together: a Student's-t
kernel turns distances into soft assignments Q, a sharpened target P is
derived from Q (squared, optionally frequency-normalized, renormalized),
and SGD with momentum descends the KL divergence between P and Q
through both the encoder parameters and the centroids. The target is
refreshed every update_interval steps; training stops when the share of
points changing their hard label between refreshes drops below the
convergence threshold, or at the iteration cap (flagged, never silent).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .autoencoder import (
    Autoencoder,
    SgdConfig,
    SgdMomentum,
    _BatchSampler,
    backward_layers,
    forward_layers,
    init_autoencoder,
    train_autoencoder,
)
from .errors import (
    DegenerateCluster,
    NonFiniteLoss,
    ShapeMismatch,
    TooFewPoints,
)
from .kmedoids import k_medoids


def soft_assign(embeddings: np.ndarray, centroids: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Row-stochastic Student's-t similarities between points and centroids.

    q_ij = (1 + ||z_i - mu_j||^2 / alpha)^(-(alpha+1)/2), normalized per row.
    """
    Z = np.asarray(embeddings, dtype=np.float64)
    mu = np.asarray(centroids, dtype=np.float64)
    sq = cdist(Z, mu, metric="sqeuclidean")
    s = (1.0 + sq / alpha) ** (-(alpha + 1.0) / 2.0)
    return s / s.sum(axis=1, keepdims=True)


def target_distribution(q: np.ndarray, frequency_normalized: bool = True) -> np.ndarray:
    """Sharpened training target: p_ij proportional to q_ij^2 / f_j.

    f_j is the soft cluster frequency sum_i q_ij; dividing by it keeps
    large clusters from swallowing everything. frequency_normalized=False
    drops the f_j term (plain escort squaring).
    """
    q = np.asarray(q, dtype=np.float64)
    w = q * q
    if frequency_normalized:
        f = q.sum(axis=0)
        if np.min(f) < 1e-12:
            dead = int(np.argmin(f))
            raise DegenerateCluster(
                f"cluster {dead} holds ~zero soft mass; re-init with another seed"
            )
        w = w / f
    return w / w.sum(axis=1, keepdims=True)


def kl_loss(p: np.ndarray, q: np.ndarray) -> float:
    """Total KL divergence sum_ij p log(p/q), with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeMismatch(f"p and q must share a shape, got {p.shape} vs {q.shape}")
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_gradients(
    embeddings: np.ndarray, centroids: np.ndarray, target: np.ndarray, alpha: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of kl_loss(target, soft_assign(Z, mu)).

    d/dz_i =  (a+1)/a * sum_j (p-q) u (z_i - mu_j)
    d/dmu_j = -(a+1)/a * sum_i (p-q) u (z_i - mu_j)
    with u = 1 / (1 + ||z - mu||^2 / a). Target rows are held fixed.
    """
    Z = np.asarray(embeddings, dtype=np.float64)
    mu = np.asarray(centroids, dtype=np.float64)
    P = np.asarray(target, dtype=np.float64)
    Q = soft_assign(Z, mu, alpha)
    u = 1.0 / (1.0 + cdist(Z, mu, metric="sqeuclidean") / alpha)
    S = (P - Q) * u
    coef = (alpha + 1.0) / alpha
    dZ = coef * (S.sum(axis=1, keepdims=True) * Z - S @ mu)
    dmu = coef * (S.sum(axis=0)[:, None] * mu - S.T @ Z)
    return dZ, dmu


def row_entropies(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(m > 0.0, m * np.log(m), 0.0)
    return -terms.sum(axis=1)


@dataclass(frozen=True)
class DecConfig:
    """Settings for the KL optimization phase.

    Only the optimizer fields of `sgd` (rate, momentum, schedule, batch
    size, seed) matter here; the pretraining step counts belong to
    train_autoencoder.
    """

    n_clusters: int
    alpha: float = 1.0
    update_interval: int = 150
    convergence_threshold: float = 0.001
    reconstruction_weight: float = 0.0
    sgd: SgdConfig = SgdConfig()
    init_restarts: int = 30
    max_steps: int = 20000
    frequency_normalized_target: bool = True

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if not 0.0 < self.convergence_threshold < 1.0:
            raise ValueError("convergence_threshold must be in (0, 1)")
        if self.update_interval < 1:
            raise ValueError("update_interval must be >= 1")
        if self.reconstruction_weight < 0.0:
            raise ValueError("reconstruction_weight must be >= 0")


def init_centroids(embeddings: np.ndarray, cfg: DecConfig) -> np.ndarray:
    """Initial centroids: medoid points of the embedded data (L2)."""
    Z = np.asarray(embeddings, dtype=np.float64)
    if Z.shape[0] < cfg.n_clusters:
        raise TooFewPoints(f"{Z.shape[0]} points cannot seed {cfg.n_clusters} centroids")
    result = k_medoids(
        Z,
        n_clusters=cfg.n_clusters,
        metric="l2",
        restarts=cfg.init_restarts,
        seed=cfg.sgd.seed,
    )
    return Z[list(result.medoid_rows)].copy()


@dataclass
class DecRefresh:
    """One target-refresh record of the optimization history."""

    step: int
    kl_loss: float
    label_change_fraction: float | None  # None at the first refresh
    learning_rate: float
    max_entropy_gap: float  # max over rows of H(P_i) - H(Q_i); <= 0 means sharpened


@dataclass
class DecResult:
    model: Autoencoder
    centroids: np.ndarray
    labels: np.ndarray
    history: list[DecRefresh] = field(default_factory=list)
    converged: bool = False
    capped: bool = False
    steps_run: int = 0


def dec_fit(X: np.ndarray, model: Autoencoder, cfg: DecConfig) -> DecResult:
    """Optimize encoder and centroids against the sharpened target.

    The model must already be trained on X (its scaler is reused).
    Deterministic for a fixed (seed, X, cfg) on one thread.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < cfg.n_clusters:
        raise TooFewPoints(f"{n} points cannot form {cfg.n_clusters} clusters")
    Xs = model.standardize(X)
    encoder = model.encoder
    decoder = model.decoder
    lam = cfg.reconstruction_weight

    Z0, _ = forward_layers(encoder, Xs)
    mu = init_centroids(Z0, cfg)

    params: list[np.ndarray] = [p for layer in encoder for p in layer.params]
    params.append(mu)
    if lam > 0.0:
        params.extend(p for layer in decoder for p in layer.params)
    opt = SgdMomentum(params, cfg.sgd.momentum, cfg.sgd.weight_decay)
    rng = np.random.default_rng(cfg.sgd.seed)
    sampler = _BatchSampler(n, cfg.sgd.batch_size, rng)

    history: list[DecRefresh] = []
    prev_labels: np.ndarray | None = None
    labels: np.ndarray | None = None
    P: np.ndarray | None = None
    converged = False
    step = 0

    def refresh(at_step: int) -> tuple[np.ndarray, np.ndarray, float | None]:
        Zf, _ = forward_layers(encoder, Xs)
        Q = soft_assign(Zf, mu, cfg.alpha)
        if not np.all(np.isfinite(Q)):
            raise NonFiniteLoss(f"soft assignments became non-finite at step {at_step}")
        Pf = target_distribution(Q, cfg.frequency_normalized_target)
        hard = np.argmax(Q, axis=1)
        loss = kl_loss(Pf, Q)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"KL loss became non-finite at step {at_step}")
        change = None if prev_labels is None else float(np.mean(hard != prev_labels))
        gap = float(np.max(row_entropies(Pf) - row_entropies(Q)))
        history.append(DecRefresh(at_step, loss, change, cfg.sgd.rate_at(at_step), gap))
        return Pf, hard, change

    while step < cfg.max_steps:
        if step % cfg.update_interval == 0:
            P, labels, change = refresh(step)
            if change is not None and change < cfg.convergence_threshold:
                converged = True
                break
            prev_labels = labels

        idx = sampler.next()
        xb = Xs[idx]
        zb, caches = forward_layers(encoder, xb)
        assert P is not None
        dZ, dmu = kl_gradients(zb, mu, P[idx], cfg.alpha)
        scale = 1.0 / len(idx)
        dZ *= scale
        dmu *= scale
        grads: list[np.ndarray]
        if lam > 0.0:
            out, dcaches = forward_layers(decoder, zb)
            diff = out - xb
            dec_grads, d_z_recon = backward_layers(
                decoder, dcaches, (2.0 * lam / diff.size) * diff
            )
            dZ = dZ + d_z_recon
            enc_grads, _ = backward_layers(encoder, caches, dZ)
            grads = [g for pair in enc_grads for g in pair]
            grads.append(dmu)
            grads.extend(g for pair in dec_grads for g in pair)
        else:
            enc_grads, _ = backward_layers(encoder, caches, dZ)
            grads = [g for pair in enc_grads for g in pair]
            grads.append(dmu)
        opt.step(grads, cfg.sgd.rate_at(step))
        step += 1

    capped = not converged
    if capped:
        # terminal refresh so the report always states the final change
        P, labels, _ = refresh(step)

    assert labels is not None
    return DecResult(
        model=model,
        centroids=mu,
        labels=labels,
        history=history,
        converged=converged,
        capped=capped,
        steps_run=step,
    )


class DeepEmbeddedClustering(ClusterMixin, BaseEstimator):
    """End-to-end estimator: pretrain the autoencoder, then optimize
    encoder and centroids against the KL objective.

    Defaults use the desk-scale 5000-step training phases; set
    pretrain_steps/finetune_steps to 100000 for the full-scale recipe.
    Fitted attributes: labels_, cluster_centers_, model_ (autoencoder),
    history_ (refresh records), ae_history_, converged_, capped_.
    """

    def __init__(
        self,
        n_clusters: int = 6,
        bottleneck: int | None = None,
        encoder_depth: int = 2,
        alpha: float = 1.0,
        update_interval: int = 150,
        convergence_threshold: float = 0.001,
        reconstruction_weight: float = 0.0,
        frequency_normalized_target: bool = True,
        init_restarts: int = 30,
        max_steps: int = 20000,
        learning_rate: float = 0.1,
        momentum: float = 0.9,
        lr_drop_every: int = 20000,
        batch_size: int = 256,
        pretrain_steps: int = 5000,
        finetune_steps: int = 5000,
        dropout: float = 0.2,
        random_state: int = 0,
    ):
        self.n_clusters = n_clusters
        self.bottleneck = bottleneck
        self.encoder_depth = encoder_depth
        self.alpha = alpha
        self.update_interval = update_interval
        self.convergence_threshold = convergence_threshold
        self.reconstruction_weight = reconstruction_weight
        self.frequency_normalized_target = frequency_normalized_target
        self.init_restarts = init_restarts
        self.max_steps = max_steps
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.lr_drop_every = lr_drop_every
        self.batch_size = batch_size
        self.pretrain_steps = pretrain_steps
        self.finetune_steps = finetune_steps
        self.dropout = dropout
        self.random_state = random_state

    def _sgd_config(self) -> SgdConfig:
        return SgdConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            lr_drop_every=self.lr_drop_every,
            batch_size=self.batch_size,
            pretrain_steps=self.pretrain_steps,
            finetune_steps=self.finetune_steps,
            dropout=self.dropout,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        m = self.bottleneck if self.bottleneck is not None else self.n_clusters
        sgd = self._sgd_config()
        model = init_autoencoder(X.shape[1], m, depth=self.encoder_depth, seed=self.random_state)
        model, self.ae_history_ = train_autoencoder(model, X, sgd)
        cfg = DecConfig(
            n_clusters=self.n_clusters,
            alpha=self.alpha,
            update_interval=self.update_interval,
            convergence_threshold=self.convergence_threshold,
            reconstruction_weight=self.reconstruction_weight,
            sgd=sgd,
            init_restarts=self.init_restarts,
            max_steps=self.max_steps,
            frequency_normalized_target=self.frequency_normalized_target,
        )
        result = dec_fit(X, model, cfg)
        self.model_ = result.model
        self.cluster_centers_ = result.centroids
        self.labels_ = result.labels
        self.history_ = result.history
        self.converged_ = result.converged
        self.capped_ = result.capped
        self.result_ = result
        return self

    def transform(self, X) -> np.ndarray:
        """Embed X with the trained encoder."""
        self._check_fitted()
        return self.model_.encode(check_array(X, dtype=np.float64))

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        q = soft_assign(self.transform(X), self.cluster_centers_, self.alpha)
        return np.argmax(q, axis=1)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("DeepEmbeddedClustering is not fitted; call fit first")
