"""Image-to-text modality inversion of a single learnable pseudo-token.

The text encoder is frozen; only the pseudo-token embedding ``z`` moves.
Gradients are exact: the normalization Jacobian (I - t t^T)/|u| is applied
to the pre-normalized encoder output ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from .core import (
    DimensionMismatch,
    EmptyNegatives,
    InvalidSigma,
    NegStreamError,
    NonFiniteLoss,
    Rng,
    check_dims,
    cosine,
    cosines,
)
from .negatives import IdModel, StaticNegatives


class TextEncoder(Protocol):
    token_dim: int
    dim: int

    def encode(self, z: np.ndarray) -> np.ndarray:
        """Unit-norm text feature for pseudo-token embedding ``z``."""
        ...

    def pullback(self, z: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product: d(loss)/dz given d(loss)/dt at ``encode(z)``."""
        ...


class SyntheticEncoder:
    """Frozen affine map plus normalization: t = normalize(W z + b).

    ``W`` (d x k) stands in for the text transformer, ``b`` for the frozen
    prompt prefix contribution.
    """

    def __init__(self, projection: np.ndarray, prefix_offset: np.ndarray):
        self.projection = np.asarray(projection, dtype=np.float64)
        self.prefix_offset = np.asarray(prefix_offset, dtype=np.float64)
        if self.projection.ndim != 2 or self.prefix_offset.shape != (self.projection.shape[0],):
            raise DimensionMismatch("projection must be d x k and prefix_offset length d")

    @classmethod
    def random(cls, d: int, k: int, rng: Rng, prefix_scale: float = 0.5) -> "SyntheticEncoder":
        W = rng.normal(1.0 / math.sqrt(k), (d, k))
        b = rng.normal(1.0, d)
        b = prefix_scale * b / np.linalg.norm(b)
        return cls(W, b)

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def token_dim(self) -> int:
        return self.projection.shape[1]

    def _pre(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.token_dim,):
            raise DimensionMismatch(f"pseudo-token has shape {z.shape}, expected ({self.token_dim},)")
        return self.projection @ z + self.prefix_offset

    def encode(self, z: np.ndarray) -> np.ndarray:
        u = self._pre(z)
        n = np.linalg.norm(u)
        if not np.isfinite(n) or n < 1e-12:
            raise NonFiniteLoss("encoder output has zero or non-finite norm")
        return u / n

    def pullback(self, z: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
        u = self._pre(z)
        n = np.linalg.norm(u)
        t = u / n
        g = np.asarray(grad_t, dtype=np.float64)
        grad_u = (g - t * (t @ g)) / n
        return self.projection.T @ grad_u

    def invert_feature(self, t: np.ndarray, radius: float = 1.0) -> np.ndarray:
        """Minimum-norm token embedding solving W z = radius * t - b.

        The encoding equals ``t`` exactly when the target lies in the range of W.
        """
        target = radius * np.asarray(t, dtype=np.float64) - self.prefix_offset
        return np.linalg.lstsq(self.projection, target, rcond=None)[0]

    def to_dict(self) -> dict:
        return {"projection": self.projection.tolist(), "prefix_offset": self.prefix_offset.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticEncoder":
        return cls(np.array(d["projection"]), np.array(d["prefix_offset"]))


@dataclass
class RandomInit:
    sigma: float = 0.02


@dataclass
class VocabularyPriorInit:
    pass


@dataclass
class InversionConfig:
    lam: float = 0.3
    learning_rate: float = 2e-2
    weight_decay: float = 1e-2
    iterations: int = 30
    init_strategy: RandomInit | VocabularyPriorInit = field(default_factory=VocabularyPriorInit)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise NegStreamError("lambda must be non-negative")
        if not self.learning_rate > 0:
            raise NegStreamError("learning_rate must be positive")
        if self.weight_decay < 0 or self.iterations < 0:
            raise NegStreamError("weight_decay and iterations must be non-negative")


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, k: int, beta1=0.9, beta2=0.999, epsilon=1e-8) -> "OptimizerState":
        return cls(np.zeros(k), np.zeros(k), 0, beta1, beta2, epsilon)


def loss_inv(t_neg: np.ndarray, v: np.ndarray) -> float:
    return 1.0 - cosine(t_neg, v)


def separation_term(t_neg: np.ndarray, model: IdModel) -> float:
    """Mean of (1 + cos) against every class prototype; 0 means antipodal to all."""
    check_dims(model.prototypes, np.asarray(t_neg))
    return float(np.mean(1.0 + cosines(model.prototypes, t_neg)))


def loss_ours(t_neg: np.ndarray, v: np.ndarray, model: IdModel, lam: float) -> float:
    """Alignment to the sample plus lambda-weighted separation from ID prototypes."""
    return loss_inv(t_neg, v) + lam * separation_term(t_neg, model)


def loss_ours_grad_t(v: np.ndarray, model: IdModel, lam: float) -> np.ndarray:
    """d(loss_ours)/dt for unit t, away from the cosine clamp. Constant in t."""
    return -np.asarray(v, dtype=np.float64) + lam * model.prototypes.mean(axis=0)


def loss_and_grad(z: np.ndarray, encoder: TextEncoder, v: np.ndarray, model: IdModel, lam: float):
    t = encoder.encode(z)
    loss = loss_ours(t, v, model, lam)
    grad = encoder.pullback(z, loss_ours_grad_t(v, model, lam))
    return loss, grad, t


def init_random(k: int, sigma: float, rng: Rng) -> np.ndarray:
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be positive, got {sigma}")
    return rng.normal(sigma, k)


def init_vocabulary_prior(
    v: np.ndarray, static_negs: StaticNegatives, model: IdModel, lam: float
) -> np.ndarray:
    """Token embedding of the static negative whose text feature minimizes loss_ours."""
    if len(static_negs) == 0:
        raise EmptyNegatives("vocabulary-prior init needs at least one static negative")
    feats = static_negs.features
    check_dims(feats, np.asarray(v))
    align = 1.0 - np.clip(feats @ v, -1.0, 1.0)
    sep = np.mean(1.0 + np.clip(feats @ model.prototypes.T, -1.0, 1.0), axis=1)
    # np.argmin returns the first minimum, i.e. ascending index tie-break
    best = int(np.argmin(align + lam * sep))
    return np.array(static_negs.entries[best].token_embedding, dtype=np.float64)


def adamw_step(
    z: np.ndarray, grad: np.ndarray, state: OptimizerState, lr: float, wd: float
) -> tuple[np.ndarray, OptimizerState]:
    """One bias-corrected Adam step with decoupled weight decay on the pre-step ``z``."""
    z = np.asarray(z, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if z.shape != grad.shape or z.shape != state.first_moment.shape:
        raise DimensionMismatch("z, grad and optimizer moments must share a shape")
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    s = state.beta2 * state.second_moment + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**step)
    s_hat = s / (1 - state.beta2**step)
    new_z = z - lr * (m_hat / (np.sqrt(s_hat) + state.epsilon) + wd * z)
    return new_z, OptimizerState(m, s, step, state.beta1, state.beta2, state.epsilon)


def initial_token(
    v: np.ndarray,
    encoder: TextEncoder,
    model: IdModel,
    cfg: InversionConfig,
    static_negs: StaticNegatives | None,
    rng: Rng,
) -> np.ndarray:
    if isinstance(cfg.init_strategy, RandomInit):
        return init_random(encoder.token_dim, cfg.init_strategy.sigma, rng)
    if static_negs is None:
        raise EmptyNegatives("vocabulary-prior init needs static negatives")
    return init_vocabulary_prior(v, static_negs, model, cfg.lam)


def invert(
    v: np.ndarray,
    encoder: TextEncoder,
    model: IdModel,
    cfg: InversionConfig,
    static_negs: StaticNegatives | None,
    rng: Rng,
    z_init: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Optimize the pseudo-token for ``cfg.iterations`` AdamW steps.

    Returns the encoded final token and its loss. Raises NonFiniteLoss if the
    objective leaves the finite range at any step.
    """
    v = np.asarray(v, dtype=np.float64)
    if encoder.dim != v.shape[0] or encoder.dim != model.dim:
        raise DimensionMismatch(f"encoder dim {encoder.dim}, sample dim {v.shape[0]}, model dim {model.dim}")
    z = initial_token(v, encoder, model, cfg, static_negs, rng) if z_init is None else np.array(z_init, dtype=np.float64)
    state = OptimizerState.zeros(z.shape[0], cfg.beta1, cfg.beta2, cfg.epsilon)
    for _ in range(cfg.iterations):
        loss, grad, _ = loss_and_grad(z, encoder, v, model, cfg.lam)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLoss(f"loss became non-finite at step {state.step_count}")
        z, state = adamw_step(z, grad, state, cfg.learning_rate, cfg.weight_decay)
    t = encoder.encode(z)
    final = loss_ours(t, v, model, cfg.lam)
    if not np.isfinite(final):
        raise NonFiniteLoss("final loss is non-finite")
    return t, final


@dataclass
class GradCheckReport:
    points: int
    h: float
    max_rel_error: float
    worst_point: int
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def gradient_check(
    encoder: TextEncoder,
    model: IdModel,
    rng: Rng,
    n_points: int = 100,
    lam: float = 0.3,
    h: float = 1e-5,
    grad_fn=None,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare the analytic dz-gradient of loss_ours with central differences.

    Relative error per point is |g - g_fd|_inf / max(|g|_inf, |g_fd|_inf, 1e-8).
    ``grad_fn(z, v)`` replaces the analytic gradient (used for fault injection).
    """
    worst, worst_i = 0.0, -1
    for i in range(n_points):
        v = rng.normal(1.0, encoder.dim)
        v /= np.linalg.norm(v)
        z = rng.normal(1.0 / math.sqrt(encoder.token_dim), encoder.token_dim)
        g = grad_fn(z, v) if grad_fn is not None else loss_and_grad(z, encoder, v, model, lam)[1]
        fd = np.empty_like(z)
        for j in range(z.shape[0]):
            e = np.zeros_like(z)
            e[j] = h
            fd[j] = (loss_ours(encoder.encode(z + e), v, model, lam)
                     - loss_ours(encoder.encode(z - e), v, model, lam)) / (2 * h)
        err = float(np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), np.max(np.abs(fd)), 1e-8))
        if err > worst or worst_i < 0:
            worst, worst_i = err, i
    return GradCheckReport(n_points, h, worst, worst_i, tol)
