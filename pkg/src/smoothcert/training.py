"""Gaussian-augmented training with the ADRE regularizer and ADRE-PGD adversarial training.

Per example ``i`` with perturbations ``delta_ij`` (j < k), the loss is

    l_per  = mean_j CE(F(x_i + delta_ij), y_i)
    G_hat  = mean_j F(x_i + delta_ij)
    l_adre = CE(G_hat, argmax_{c != y_i} G_hat^c)
    loss   = l_per - lam * l_adre

and the batch objective is the mean over examples. One perturbation set per
example feeds both terms. The argmax is a constant under differentiation.
Gradients are exact backprop through the model.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .models import log_softmax
from .rng import stream

__all__ = [
    "LOG_CLAMP",
    "AdversarialConfig",
    "TrainConfig",
    "BatchLossReport",
    "EpochLog",
    "perturbed_ce_loss",
    "adre_loss",
    "runner_up_class",
    "loss_and_grad",
    "attack_objective_and_input_grad",
    "project_l2",
    "pgd_attack",
    "batch_gradient",
    "train",
]

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
_NEG_LOG_CLAMP = -math.log(LOG_CLAMP)


@dataclass(frozen=True)
class AdversarialConfig:
    steps: int
    epsilon: float
    step_size: Optional[float] = None
    # Ascend along the unit-l2 gradient direction (standard l2 PGD).
    normalize: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("attack needs at least one step")
        if not self.epsilon > 0.0:
            raise ValueError("attack radius must be positive")
        if self.step_size is not None and not self.step_size > 0.0:
            raise ValueError("attack step size must be positive")

    @property
    def alpha(self) -> float:
        return self.step_size if self.step_size is not None else 2.0 * self.epsilon / self.steps


@dataclass(frozen=True)
class TrainConfig:
    sigma: float
    lam: float = 0.0
    k: int = 1
    batch_size: int = 64
    epochs: int = 10
    lr: float = 0.1
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 0
    seed: int = 0
    adversarial: Optional[AdversarialConfig] = None
    single_perturbation_lper: bool = False

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if self.lam < 0.0:
            raise ValueError("lambda must be non-negative")
        if self.k < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("k and batch_size must be >= 1, epochs >= 0")
        if not self.lr > 0.0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.lr_decay_every < 0 or not self.lr_decay_factor > 0.0:
            raise ValueError("invalid learning-rate decay")

    def lr_at(self, epoch: int) -> float:
        if not self.lr_decay_every:
            return self.lr
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class BatchLossReport:
    l_per: float
    l_adre: float
    lam: float

    @property
    def total(self) -> float:
        return self.l_per - self.lam * self.l_adre


@dataclass
class EpochLog:
    epoch: int
    l_per: float
    l_adre: float
    total: float
    train_acc: float


def runner_up_class(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """argmax over c != y of each row of ``scores``; ties to the lowest index."""
    masked = np.array(scores, dtype=np.float64, copy=True)
    masked[np.arange(masked.shape[0]), y] = -np.inf
    return np.argmax(masked, axis=1)


def _forward(model, X: np.ndarray, noise: np.ndarray):
    B, k, d = noise.shape
    Z = (X[:, None, :] + noise).reshape(B * k, d)
    logits, cache = model.forward(Z)
    logp = log_softmax(logits).reshape(B, k, -1)
    return np.exp(logp), logp, cache


def _neg_log_g_grad(P: np.ndarray, G: np.ndarray, c: np.ndarray) -> np.ndarray:
    """d(-log G^c)/d logits for G = mean_j softmax(logits_j); shape (B, k, C)."""
    B, k, C = P.shape
    rows = np.arange(B)
    gc = G[rows, c]
    live = gc >= LOG_CLAMP
    pc = P[rows, :, c]                                 # (B, k)
    onehot = np.zeros((B, 1, C))
    onehot[rows, 0, c] = 1.0
    scale = np.where(live, 1.0 / np.where(live, gc, 1.0), 0.0) / k
    return -(scale[:, None, None] * pc[:, :, None]) * (onehot - P)


def _neg_log_g(G: np.ndarray, c: np.ndarray) -> np.ndarray:
    return -np.log(np.maximum(G[np.arange(G.shape[0]), c], LOG_CLAMP))


def perturbed_ce_loss(model, x, y: int, noise) -> float:
    """Mean cross-entropy of the base classifier over ``x + noise[j]``."""
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    _, logp, _ = _forward(model, np.asarray(x, dtype=np.float64)[None, :], noise[None])
    return float(np.minimum(-logp[0, :, y], _NEG_LOG_CLAMP).mean())


def adre_loss(model, x, y: int, noise) -> float:
    """Cross-entropy of the plug-in smoothed score against the best wrong class."""
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    P, _, _ = _forward(model, np.asarray(x, dtype=np.float64)[None, :], noise[None])
    G = P.mean(axis=1)
    yy = np.array([y])
    return float(_neg_log_g(G, runner_up_class(G, yy))[0])


def loss_and_grad(model, X: np.ndarray, y: np.ndarray, noise: np.ndarray, lam: float,
                  lper_index: Optional[np.ndarray] = None, need_input_grad: bool = False):
    """Batch objective mean(l_per - lam * l_adre) and its parameter gradients.

    ``noise`` has shape (B, k, d). With ``lper_index`` given, l_per for example
    i uses only perturbation ``lper_index[i]`` while G_hat still uses all k.
    Returns ``(report, grads, dX)``; ``dX`` is None unless requested.
    """
    B, k, _ = noise.shape
    P, logp, cache = _forward(model, X, noise)
    rows = np.arange(B)
    nll = -logp[rows, :, y]                            # (B, k)
    live = nll < _NEG_LOG_CLAMP
    weight = np.full((B, k), 1.0 / k)
    if lper_index is not None:
        weight = np.zeros((B, k))
        weight[rows, lper_index] = 1.0
    l_per = (weight * np.minimum(nll, _NEG_LOG_CLAMP)).sum(axis=1)

    G = P.mean(axis=1)
    y_hat = runner_up_class(G, y)
    l_adre = _neg_log_g(G, y_hat)

    onehot_y = np.zeros_like(P)
    onehot_y[rows, :, y] = 1.0
    d_per = (weight * live)[:, :, None] * (P - onehot_y)
    dlogits = (d_per - lam * _neg_log_g_grad(P, G, y_hat)) / B

    grads, dZ = model.backward(cache, dlogits.reshape(B * k, -1))
    dX = dZ.reshape(B, k, -1).sum(axis=1) if need_input_grad else None
    report = BatchLossReport(float(l_per.mean()), float(l_adre.mean()), lam)
    return report, grads, dX


def attack_objective_and_input_grad(model, X: np.ndarray, y: np.ndarray, noise: np.ndarray,
                                    lam: float):
    """Per-example CE(G_hat, y) - lam * CE(G_hat, runner-up) and its input gradient."""
    B, k, _ = noise.shape
    P, _, cache = _forward(model, X, noise)
    G = P.mean(axis=1)
    y_hat = runner_up_class(G, y)
    obj = _neg_log_g(G, y) - lam * _neg_log_g(G, y_hat)
    dlogits = _neg_log_g_grad(P, G, y) - lam * _neg_log_g_grad(P, G, y_hat)
    _, dZ = model.backward(cache, dlogits.reshape(B * k, -1))
    return obj, dZ.reshape(B, k, -1).sum(axis=1)


def project_l2(X: np.ndarray, X0: np.ndarray, eps: float) -> np.ndarray:
    """Radial projection of each row of X onto the l2 ball of radius eps around X0."""
    delta = X - X0
    norms = np.linalg.norm(delta, axis=1)
    outside = norms > eps
    if np.any(outside):
        delta[outside] *= (eps / norms[outside])[:, None]
    return X0 + delta


def pgd_attack(model, X0: np.ndarray, y: np.ndarray, noise: np.ndarray, lam: float,
               adv: AdversarialConfig,
               on_step: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None) -> np.ndarray:
    """``adv.steps`` projected ascent steps on the attack objective.

    The same ``noise`` is reused at every iteration. ``on_step(t, X_t, X0)``
    is called after each projection.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    X = X0.copy()
    for t in range(adv.steps):
        _, g = attack_objective_and_input_grad(model, X, y, noise, lam)
        if adv.normalize:
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            g = np.where(norms > 0.0, g / np.where(norms > 0.0, norms, 1.0), 0.0)
        X = project_l2(X + adv.alpha * g, X0, adv.epsilon)
        if on_step is not None:
            on_step(t, X, X0)
    return X


def batch_gradient(model, X: np.ndarray, y: np.ndarray, noise: np.ndarray, cfg: TrainConfig,
                   lper_index: Optional[np.ndarray] = None, on_attack_step=None):
    """Loss report and parameter gradients for one minibatch.

    With an adversarial config the inputs are first replaced by their PGD
    points (same noise), which are then held fixed for the gradient.
    """
    if cfg.adversarial is not None:
        X = pgd_attack(model, X, y, noise, cfg.lam, cfg.adversarial, on_attack_step)
    report, grads, _ = loss_and_grad(model, X, y, noise, cfg.lam, lper_index)
    return report, grads


def _accuracy(model, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(X) == y))


def train(model, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
          on_attack_step=None, on_epoch: Optional[Callable[[EpochLog], None]] = None):
    """Mini-batch SGD with momentum; returns ``(trained_copy, epoch_logs)``.

    Randomness comes from named streams of ``cfg.seed`` (shuffle, noise,
    lper), so runs are bit-reproducible.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("need a non-empty (N, d) input array with one label per row")
    if X.shape[1] != model.input_dim:
        raise ValueError(f"data dimension {X.shape[1]} != model input dimension {model.input_dim}")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ValueError("labels outside [0, num_classes)")
    model = model.copy()
    params = model.params
    velocity = [np.zeros_like(p) for p in params]
    N, d = X.shape
    history: List[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = stream(cfg.seed, "shuffle", epoch).permutation(N)
        sums = np.zeros(2)
        for bi, start in enumerate(range(0, N, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            B = idx.shape[0]
            noise = stream(cfg.seed, "noise", epoch, bi).standard_normal((B, cfg.k, d)) * cfg.sigma
            lper_index = None
            if cfg.single_perturbation_lper:
                lper_index = stream(cfg.seed, "lper", epoch, bi).integers(0, cfg.k, size=B)
            report, grads = batch_gradient(model, X[idx], y[idx], noise, cfg, lper_index,
                                           on_attack_step)
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v += g
                p -= lr * v
            sums += B * np.array([report.l_per, report.l_adre])
        l_per, l_adre = sums / N
        entry = EpochLog(epoch, float(l_per), float(l_adre), float(l_per - cfg.lam * l_adre),
                         _accuracy(model, X, y))
        history.append(entry)
        log.debug("epoch %d: l_per=%.4f l_adre=%.4f acc=%.3f", epoch, l_per, l_adre, entry.train_acc)
        if on_epoch is not None:
            on_epoch(entry)
    return model, history
