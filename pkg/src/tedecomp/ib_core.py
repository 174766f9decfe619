"""Variational bottleneck building blocks: Gaussian encoders with closed-form
KL to a standard-normal prior, the InfoNCE bound with squared-Euclidean
similarity, the annealed Lagrangian, and the geometric beta schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError

LN2 = float(np.log(2.0))
LOG_VAR_CLAMP = 10.0  # log-variance clamped to [-10, 10] before use


class GaussianEncoder:
    """MLP trunk emitting (mu, log_var) of a diagonal Gaussian posterior."""

    def __init__(self, trunk, dim):
        self.trunk = trunk
        self.dim = dim

    INIT_LOG_VAR = -4.0  # start low-noise so gradients reach through the bottleneck

    @staticmethod
    def create(n_in, hidden, dim, rng):
        trunk = ad.MLP.create(n_in, hidden, 2 * dim, rng)
        trunk.layers[-1].b.value[dim:] = GaussianEncoder.INIT_LOG_VAR
        return GaussianEncoder(trunk, dim)

    def posterior(self, x):
        out = self.trunk(x)
        n = out.shape[1] // 2
        mu = ad.slice_cols(out, 0, n)
        log_var = ad.clip(ad.slice_cols(out, n, 2 * n), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
        return mu, log_var

    def sample(self, mu, log_var, eps):
        """Reparameterized draw u = mu + sigma * eps; eps comes from the caller."""
        sigma = ad.exp(ad.mul(log_var, ad.Tensor(0.5)))
        return mu + ad.mul(sigma, ad.Tensor(eps))

    def params(self):
        return self.trunk.params()


def kl_to_standard_normal(mu, log_var):
    """Per-sample KL(N(mu, sigma^2) || N(0, I)) in nats, summed over dims."""
    var = ad.exp(log_var)
    terms = ad.square(mu) + var - log_var - ad.Tensor(1.0)
    return ad.mul(ad.sum_(terms, axis=1), ad.Tensor(0.5))


def info_nce(f_embeddings, g_embeddings):
    """InfoNCE lower bound in bits, s(u, v) = -||u - v||^2, in-batch negatives.

    Row i of f pairs with row i of g; the bound never exceeds log2(K).
    """
    K = f_embeddings.shape[0]
    if K < 2 or g_embeddings.shape[0] != K:
        raise ContractError(f"need K >= 2 matched pairs, got {f_embeddings.shape[0]} and {g_embeddings.shape[0]}")
    sq_f = ad.sum_(ad.square(f_embeddings), axis=1, keepdims=True)  # (K, 1)
    sq_g = ad.sum_(ad.square(g_embeddings), axis=1, keepdims=True)  # (K, 1)
    cross = ad.matmul(f_embeddings, ad.transpose(g_embeddings))  # (K, K)
    sims = ad.mul(cross, ad.Tensor(2.0)) - sq_f - ad.transpose(sq_g)
    diag = ad.sum_(ad.mul(sims, ad.Tensor(np.eye(K))), axis=1)
    nats = ad.mean(diag - ad.logsumexp(sims, axis=1)) + ad.Tensor(np.log(K))
    return ad.mul(nats, ad.Tensor(1.0 / LN2))


def lagrangian(kl_terms, nce_bits, beta):
    """Training loss in nats: beta * sum of batch-mean KLs - InfoNCE (converted)."""
    if beta <= 0:
        raise ContractError(f"beta must be positive, got {beta}")
    loss = ad.mul(nce_bits, ad.Tensor(-LN2))
    for kl in kl_terms:
        kl_mean = kl if kl.value.ndim == 0 else ad.mean(kl)
        loss = loss + ad.mul(kl_mean, ad.Tensor(beta))
    return loss


@dataclass(frozen=True)
class BetaSchedule:
    """Geometric interpolation beta(k) = b0 * (b1/b0)^(k/total_steps)."""

    beta_initial: float
    beta_final: float
    total_steps: int

    def __post_init__(self):
        if self.beta_initial <= 0 or self.beta_final <= 0:
            raise ContractError("schedule endpoints must be positive")
        if self.total_steps < 1:
            raise ContractError("total_steps must be >= 1")


def beta_at(schedule, step):
    if not 0 <= step <= schedule.total_steps:
        raise ContractError(f"step {step} outside [0, {schedule.total_steps}]")
    ratio = schedule.beta_final / schedule.beta_initial
    return schedule.beta_initial * ratio ** (step / schedule.total_steps)
