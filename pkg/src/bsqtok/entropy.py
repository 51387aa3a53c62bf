"""Soft BSQ assignments and the entropy terms built on them.

Entropies are in bits.  The soft assignment of a unit vector ``u`` over the
implicit codebook factorizes into ``L`` independent Bernoulli variables, so the
per-sample entropy is a sum of binary entropies and the dataset-level term is
approximated by the factorized distribution with the batch-mean marginals.
Brute-force versions over all ``2^L`` codes are provided as oracles and are
limited to ``L <= 20``.
"""

from __future__ import annotations

import numpy as np

from .errors import BadGroupSize, EmptyBatch, TooLarge
from .quantizer import decode_tokens

__all__ = [
    "BRUTE_FORCE_MAX_BITS",
    "PROB_CLAMP",
    "sigmoid",
    "binary_entropy",
    "distribution_entropy",
    "soft_assign",
    "lfq_soft_assign_factorized",
    "factorized_code_dist",
    "brute_force_code_dist",
    "per_sample_entropy",
    "batch_marginals",
    "dataset_entropy_approx",
    "entropy_loss",
    "entropy_loss_grad",
    "mixture_code_dist",
    "approximation_gap",
    "grouped_entropy",
    "grouped_dataset_entropy",
    "lfq_soft_assign",
    "kl_divergence",
]

BRUTE_FORCE_MAX_BITS = 20
PROB_CLAMP = 1e-12


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _plogp(p):
    return p * np.log2(p)


def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)


def binary_entropy(p):
    """Binary entropy in bits; probabilities are clamped away from 0 and 1."""
    p = _clamp(p)
    return -(_plogp(p) + _plogp(1.0 - p))


def distribution_entropy(mass, axis=-1):
    """Shannon entropy in bits of (possibly batched) probability vectors."""
    mass = np.asarray(mass, dtype=np.float64)
    terms = np.where(mass > 0, mass * np.log2(np.where(mass > 0, mass, 1.0)), 0.0)
    return -terms.sum(axis=axis)


def soft_assign(u, tau):
    """Per-dimension probability that bit ``d`` is set (``c_d = +1/sqrt(L)``).

    ``probs[d] = sigmoid(2 * tau * u[d] / sqrt(L))``.
    """
    u = np.asarray(u, dtype=np.float64)
    L = u.shape[-1]
    return sigmoid(2.0 * tau * u / np.sqrt(L))


def lfq_soft_assign_factorized(z, tau):
    """Per-dimension form of the LFQ soft assignment, ``sigmoid(4 * tau * z[d])``.

    ``exp(-tau * |c - z|^2)`` over ``{-1, 1}^L`` splits into independent factors
    because ``|c|^2 = L`` is the same for every corner.
    """
    return sigmoid(4.0 * tau * np.asarray(z, dtype=np.float64))


def _check_brute(L):
    if L > BRUTE_FORCE_MAX_BITS:
        raise TooLarge(f"brute force over 2^{L} codes is capped at L={BRUTE_FORCE_MAX_BITS}")


def factorized_code_dist(probs):
    """Joint mass over all ``2^L`` codes of independent bits, index order matches token codes."""
    probs = np.asarray(probs, dtype=np.float64)
    L = probs.shape[-1]
    _check_brute(L)
    mass = np.ones(probs.shape[:-1] + (1,))
    for d in range(L):
        p = probs[..., d : d + 1]
        # the newly added bit becomes the most significant one so far
        mass = np.concatenate([mass * (1.0 - p), mass * p], axis=-1)
    return mass


def _softmax(logits, axis=-1):
    logits = logits - logits.max(axis=axis, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=axis, keepdims=True)


def brute_force_code_dist(u, tau):
    """Softmax of ``tau * <c_k, u>`` over every implicit code ``c_k``.

    Shape ``(..., 2^L)``.  This is the unfactorized definition and is used to
    check :func:`soft_assign` independently.
    """
    u = np.asarray(u, dtype=np.float64)
    L = u.shape[-1]
    _check_brute(L)
    codes = decode_tokens(np.arange(1 << L), L)  # (2^L, L)
    return _softmax(tau * (u @ codes.T))


def lfq_soft_assign(z, tau):
    """Softmax of ``-tau * |c_k - z|^2`` over ``{-1, 1}^L``, shape ``(..., 2^L)``."""
    z = np.asarray(z, dtype=np.float64)
    L = z.shape[-1]
    _check_brute(L)
    corners = decode_tokens(np.arange(1 << L), L) * np.sqrt(L)
    diff = z[..., None, :] - corners
    return _softmax(-tau * np.einsum("...kd,...kd->...k", diff, diff))


def per_sample_entropy(probs):
    """Entropy in bits of the factorized soft assignment (sum of binary entropies)."""
    return binary_entropy(probs).sum(axis=-1)


def _as_batch(batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[0] == 0:
        raise EmptyBatch("batch is empty")
    return batch


def batch_marginals(batch):
    """Batch mean of the per-dimension probabilities."""
    return _as_batch(batch).mean(axis=0)


def dataset_entropy_approx(batch):
    """Entropy of the closest factorized distribution to the batch mixture."""
    return float(per_sample_entropy(batch_marginals(batch)))


def entropy_loss(batch, gamma=1.0):
    """Mean per-sample entropy minus ``gamma`` times the approximate dataset entropy."""
    batch = _as_batch(batch)
    return float(per_sample_entropy(batch).mean()) - gamma * dataset_entropy_approx(batch)


def entropy_loss_grad(batch, gamma=1.0):
    """Gradient of :func:`entropy_loss` with respect to the soft probabilities.

    Entries whose probability sits on the clamp boundary get zero gradient,
    matching the clamped forward pass.
    """
    batch = _as_batch(batch)
    n = batch.shape[0]
    p = _clamp(batch)
    m = _clamp(batch.mean(axis=0))
    live = (batch > PROB_CLAMP) & (batch < 1.0 - PROB_CLAMP)
    live_m = (m > PROB_CLAMP) & (m < 1.0 - PROB_CLAMP)
    d_sample = np.where(live, np.log2((1.0 - p) / p), 0.0)
    d_data = np.where(live_m, np.log2((1.0 - m) / m), 0.0)
    return (d_sample - gamma * d_data) / n


def mixture_code_dist(u_batch, tau):
    """Exact empirical mixture of the per-sample code distributions."""
    u_batch = _as_batch(u_batch)
    return brute_force_code_dist(u_batch, tau).mean(axis=0)


def approximation_gap(u_batch, tau, max_bits=12):
    """Factorized dataset entropy minus the exact mixture entropy (bits, >= 0)."""
    u_batch = _as_batch(u_batch)
    L = u_batch.shape[-1]
    if L > max_bits:
        raise TooLarge(f"exact mixture entropy limited to L <= {max_bits}")
    exact = distribution_entropy(mixture_code_dist(u_batch, tau))
    approx = dataset_entropy_approx(soft_assign(u_batch, tau))
    return float(approx - exact)


def _group_slices(L, g):
    if g < 1 or L % g != 0:
        raise BadGroupSize(f"group size {g} does not divide L={L}")
    if g > BRUTE_FORCE_MAX_BITS:
        raise BadGroupSize(f"group size {g} exceeds {BRUTE_FORCE_MAX_BITS}")
    return [slice(s, s + g) for s in range(0, L, g)]


def grouped_entropy(batch, g):
    """Per-sample entropy computed jointly over groups of ``g`` dimensions.

    Each group's ``2^g`` joint outcomes are enumerated explicitly; the group
    entropies are summed and the result averaged over the batch.
    """
    batch = _as_batch(batch)
    groups = _group_slices(batch.shape[-1], g)
    if g == 1:
        # same arithmetic as the factorized form, so the two agree bit for bit
        return float(per_sample_entropy(batch).mean())
    per_group = np.stack(
        [distribution_entropy(factorized_code_dist(_clamp(batch[:, s]))) for s in groups],
        axis=-1,
    )
    return float(per_group.sum(axis=-1).mean())


def grouped_dataset_entropy(batch, g):
    """Dataset entropy with dimensions grouped: sum over groups of H(batch-mean joint).

    ``g = 1`` is the fully factorized approximation; ``g = L`` is exact.
    """
    batch = _as_batch(batch)
    groups = _group_slices(batch.shape[-1], g)
    if g == 1:
        return dataset_entropy_approx(batch)
    return float(
        sum(distribution_entropy(factorized_code_dist(batch[:, s]).mean(axis=0)) for s in groups)
    )


def kl_divergence(p, q):
    """``KL(p || q)`` in bits for mass vectors over the same support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    nz = p > 0
    return float(np.sum(p[nz] * (np.log2(p[nz]) - np.log2(q[nz]))))
