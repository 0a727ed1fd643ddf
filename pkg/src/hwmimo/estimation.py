"""LMMSE estimation of the effective (phase-rotated) channels from the
pilot observations.

The estimator operates on the B received pilot vectors of one base
station.  Because phase drift decorrelates the observation from the
channel as time passes, the estimate of the effective channel at data
time t weights pilot use i by exp(-delta/2 * (t - i)); the estimator is
therefore a predictor that must be re-evaluated for every t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .config import HardwareProfile, NetworkStats, PilotBook


def phase_decay(t: int, pilot_len: int, delta: float) -> np.ndarray:
    """Phase-coherence decay between each pilot use and channel use t.

    Entry i (0-based) equals exp(-delta/2 * (t - (i+1))), the magnitude
    of the expected residual phasor between pilot use i+1 and time t.

    Requires t >= pilot_len (the estimator only runs once the whole
    pilot block has been received).
    """
    if t < pilot_len:
        raise ValueError(f"t ({t}) must be >= pilot_len ({pilot_len})")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    lags = t - np.arange(1, pilot_len + 1)
    return np.exp(-0.5 * delta * lags)


def pilot_gram(sequence: np.ndarray, kappa: float, delta: float) -> np.ndarray:
    """Second-moment matrix of one pilot sequence under the impairments.

    The plain outer product x x^H is damped off the diagonal by the
    phase-drift coherence exp(-delta/2 |i1 - i2|) and boosted on the
    diagonal by the distortion factor (1 + kappa^2).  Hermitian positive
    semidefinite for any kappa, delta >= 0.
    """
    x = np.asarray(sequence, dtype=complex)
    idx = np.arange(x.size)
    coherence = np.exp(-0.5 * delta * np.abs(idx[:, None] - idx[None, :]))
    gram = np.outer(x, x.conj()) * coherence
    gram[idx, idx] += kappa ** 2 * np.abs(x) ** 2
    return gram


def pilot_block_covariance(attenuation_j: np.ndarray, grams: np.ndarray,
                           noise_var: float, xi: float) -> np.ndarray:
    """Covariance of the stacked pilot observation in the pilot-use domain.

    attenuation_j[l, k] weights the gram matrix of user (l, k); the
    amplified noise adds noise_var * xi on the diagonal.  The full
    NB x NB covariance is this matrix Kronecker the identity, which is
    never materialized.
    """
    B = grams.shape[-1]
    cov = np.einsum("lk,lkab->ab", attenuation_j, grams)
    cov[np.arange(B), np.arange(B)] += noise_var * xi
    return cov


@dataclass(frozen=True)
class EstimatorContext:
    """Precomputed estimator state for a (stats, book, hw) configuration.

    Immutable and shared read-only by all trials and targets.  Holds the
    per-BS pilot covariance and its inverse, the per-user grams, and the
    table of phase-decay vectors for every t in {B..T}.
    """

    stats: NetworkStats
    book: PilotBook
    hw: HardwareProfile
    grams: np.ndarray          # (L, K, B, B)
    pilot_cov: np.ndarray      # (L, B, B), one per receiving BS
    pilot_cov_inv: np.ndarray  # (L, B, B)
    decay_table: np.ndarray    # (T - B + 1, B), row i is t = B + i

    @classmethod
    def build(cls, stats: NetworkStats, book: PilotBook,
              hw: HardwareProfile) -> "EstimatorContext":
        dims = stats.dims
        L, K, B, T = dims.num_cells, dims.users_per_cell, dims.pilot_len, dims.block_len
        grams = np.empty((L, K, B, B), dtype=complex)
        for l in range(L):
            for k in range(K):
                grams[l, k] = pilot_gram(book.sequences[l, k], hw.kappa, hw.delta)
        cov = np.empty((L, B, B), dtype=complex)
        inv = np.empty((L, B, B), dtype=complex)
        eye = np.eye(B)
        for j in range(L):
            cov[j] = pilot_block_covariance(stats.attenuation[j], grams,
                                            stats.noise_var, hw.xi)
            # noise_var * xi > 0 keeps this positive definite for any book
            inv[j] = cho_solve(cho_factor(cov[j]), eye)
        decay = np.stack([phase_decay(t, B, hw.delta) for t in range(B, T + 1)])
        return cls(stats=stats, book=book, hw=hw, grams=grams, pilot_cov=cov,
                   pilot_cov_inv=inv, decay_table=decay)

    def decay(self, t: int) -> np.ndarray:
        B = self.stats.dims.pilot_len
        if not B <= t <= self.stats.dims.block_len:
            raise ValueError(f"t ({t}) must be in {B}..{self.stats.dims.block_len}")
        return self.decay_table[t - B]


@dataclass(frozen=True)
class ChannelEstimate:
    """LMMSE estimate of one effective channel at one channel use.

    The estimation error covariance is white: error_coeff * I_N, with
    0 <= error_coeff <= attenuation of the link, and mse = N * error_coeff.
    """

    hhat: np.ndarray
    error_coeff: float
    mse: float


def estimation_weights(ctx: EstimatorContext, bs: int, t: int) -> np.ndarray:
    """Pilot-combining rows for every user at BS ``bs`` and time ``t``.

    Row (l, k) applied to the B received pilot vectors yields the LMMSE
    estimate: hhat_{lk}(t) = sum_i weights[l, k, i] * y_bs(i).
    """
    d = ctx.decay(t)
    seq_d = ctx.book.sequences.conj() * d  # (L, K, B) rows x^H D
    rows = seq_d @ ctx.pilot_cov_inv[bs]
    return ctx.stats.attenuation[bs][:, :, None] * rows


def error_coeffs(ctx: EstimatorContext, bs: int, t: int) -> np.ndarray:
    """Per-link estimation error coefficients c[l, k] at BS ``bs``.

    c = attenuation * (1 - attenuation * quad) where quad is the
    quadratic form of the decayed pilot through the inverse pilot
    covariance.  Clamped at 0: the exact value is nonnegative but can
    lose all significant digits to cancellation when pilots are strong.
    """
    d = ctx.decay(t)
    u = ctx.book.sequences * d  # (L, K, B): D^H x
    quad = np.einsum("lkb,bc,lkc->lk", u.conj(), ctx.pilot_cov_inv[bs], u).real
    att = ctx.stats.attenuation[bs]
    return att * np.maximum(0.0, 1.0 - att * quad)


def estimate_all(pilot_block: np.ndarray, ctx: EstimatorContext, bs: int,
                 t: int) -> tuple[np.ndarray, np.ndarray]:
    """Estimate every effective channel seen by one BS from its pilot block.

    Parameters
    ----------
    pilot_block : ndarray
        Received pilot observation of BS ``bs``: shape (B, N), or the
        stacked (B*N,) vector.
    ctx : EstimatorContext
    bs : int
        Receiving base station index j.
    t : int
        Channel use (>= B) at which the effective channel is predicted.

    Returns
    -------
    (hhat, coeffs)
        hhat[l, k] is the (N,) estimate of the channel from user (l, k);
        coeffs[l, k] the matching error coefficient.
    """
    B = ctx.stats.dims.pilot_len
    y = np.asarray(pilot_block)
    if y.ndim == 1:
        y = y.reshape(B, -1)
    w = estimation_weights(ctx, bs, t)
    return w @ y, error_coeffs(ctx, bs, t)


def lmmse_estimate(pilot_block: np.ndarray, ctx: EstimatorContext, bs: int,
                   target: tuple[int, int], t: int) -> ChannelEstimate:
    """LMMSE estimate of the effective channel of one user at time t >= B.

    The Kronecker structure of the observation covariance reduces the
    estimate to a B-term weighted sum of the received pilot vectors, so
    no NB-sized object is ever formed.
    """
    l, k = target
    B = ctx.stats.dims.pilot_len
    y = np.asarray(pilot_block)
    if y.ndim == 1:
        y = y.reshape(B, -1)
    w = estimation_weights(ctx, bs, t)[l, k]
    hhat = w @ y
    c = float(error_coeffs(ctx, bs, t)[l, k])
    return ChannelEstimate(hhat=hhat, error_coeff=c, mse=hhat.shape[0] * c)
