"""Closed-form performance under maximum ratio combining: filter moments,
per-channel-use SINR, ergodic rate, large-array limit and the
hardware-imperfection scaling law.

The array size N enters every expression only through the scalars N and
N*(N-1); no N-dimensional object is ever built, which makes sweeps to
millions of antennas essentially free once the B x B quadratic forms are
in hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import HardwareProfile, NetworkStats, ScalingExponents
from .estimation import EstimatorContext


@dataclass(frozen=True)
class MrcMoments:
    """Moments of the MRC filter v = hhat at one (BS, user, t).

    norm2 : E ||v||^2.
    first : E v^H h of the served user; equals norm2 identically (the
        orthogonality of the LMMSE error makes the cross term vanish).
    second : (L, K) array of E |v^H h_lm|^2 against every user's channel.
    distortion : E |v^H upsilon|^2 against the additive distortion noise.
    """

    norm2: float
    first: float
    second: np.ndarray
    distortion: float


@dataclass(frozen=True)
class SinrReport:
    """SINR trajectory over the data phase of one coherence block."""

    t_values: np.ndarray
    sinr: np.ndarray
    rate: float
    asymptotic: float


def _quadratic_forms(ctx: EstimatorContext, bs: int, t: int):
    """B-domain quadratic forms behind all MRC moments at (bs, t).

    Returns
    -------
    head : (K,) x_k^H D Psi^-1 D x_k for the served users (real, >= 0).
    cross : (K, L, K) x_k^H D Psi^-1 D x_lm against every user.
    gram : (K, L, K) x_k^H D Psi^-1 X_lm Psi^-1 D x_k (real, >= 0).
    """
    d = ctx.decay(t)
    u = ctx.book.sequences * d                    # (L, K, B): D x_lm
    w = u[bs].conj() @ ctx.pilot_cov_inv[bs]      # (K, B): rows x_k^H D Psi^-1
    cross = np.einsum("kb,lmb->klm", w, u)
    kk = np.arange(w.shape[0])
    head = np.maximum(0.0, cross[kk, bs, kk].real)
    gram = np.einsum("kb,lmbc,kc->klm", w, ctx.grams, w.conj()).real
    np.maximum(gram, 0.0, out=gram)
    return head, cross, gram


def mrc_moments(ctx: EstimatorContext, bs: int, user: int, t: int,
                num_antennas: int | None = None) -> MrcMoments:
    """Closed-form MRC filter moments for target user ``user`` of cell ``bs``.

    Valid for t in the data phase (t > B).  ``num_antennas`` overrides
    the array size from the context, which is how antenna sweeps reuse
    one context.
    """
    dims = ctx.stats.dims
    if not dims.pilot_len < t <= dims.block_len:
        raise ValueError(f"t ({t}) must be in {dims.pilot_len + 1}..{dims.block_len}")
    n = dims.num_antennas if num_antennas is None else num_antennas
    head, cross, gram = _quadratic_forms(ctx, bs, t)
    att = ctx.stats.attenuation[bs]
    lam_jk = att[bs, user]
    q1 = head[user]

    norm2 = n * lam_jk ** 2 * q1
    second = (att * norm2
              + n * lam_jk ** 2 * att ** 2 * gram[user]
              + n * (n - 1) * lam_jk ** 2 * att ** 2 * np.abs(cross[user]) ** 2)
    distortion = ctx.hw.kappa ** 2 * float(np.sum(
        ctx.stats.power * (att * norm2 + n * lam_jk ** 2 * att ** 2 * gram[user])))
    return MrcMoments(norm2=norm2, first=norm2, second=second,
                      distortion=distortion)


def sinr_closed_form(moments: MrcMoments, stats: NetworkStats,
                     hw: HardwareProfile, bs: int, user: int) -> float:
    """Assemble the SINR of one user at one channel use from its moments.

    Interference and distortion are treated as Gaussian noise and only
    the mean effective channel is treated as known, so this is an
    achievable (lower-bound) SINR.  Defined as 0 when the pilot carries
    no energy.
    """
    if moments.norm2 == 0.0:
        return 0.0
    p_jk = stats.power[bs, user]
    signal = p_jk * moments.first ** 2
    den = (float(np.sum(stats.power * moments.second)) - signal
           + moments.distortion + stats.noise_var * hw.xi * moments.norm2)
    return signal / den


def mrc_sinr(ctx: EstimatorContext, bs: int, user: int, t: int,
             num_antennas: int | None = None) -> float:
    """Closed-form MRC SINR, assembled without the large-N cancellation.

    Equivalent to feeding :func:`mrc_moments` into
    :func:`sinr_closed_form`, but the self-interference subtraction is
    carried out analytically so the result stays accurate for antenna
    counts far beyond 1e6.
    """
    return float(mrc_sinr_vs_antennas(
        ctx, bs, user, t,
        [ctx.stats.dims.num_antennas if num_antennas is None else num_antennas])[0])


def mrc_sinr_vs_antennas(ctx: EstimatorContext, bs: int, user: int, t: int,
                         antenna_counts) -> np.ndarray:
    """Antenna sweep of the closed-form MRC SINR of one user.

    The quadratic forms are computed once; each requested array size
    only rescales them.
    """
    return mrc_cell_sinr(ctx, bs, t, antenna_counts)[user]


def mrc_cell_sinr(ctx: EstimatorContext, bs: int, t: int,
                  antenna_counts) -> np.ndarray:
    """Closed-form MRC SINR of every user served by one BS.

    Computes the quadratic forms for (bs, t) once and assembles the
    SINR for each served user and each requested array size; returns an
    array of shape (K, len(antenna_counts)).
    """
    dims = ctx.stats.dims
    if not dims.pilot_len < t <= dims.block_len:
        raise ValueError(f"t ({t}) must be in {dims.pilot_len + 1}..{dims.block_len}")
    n = np.asarray(antenna_counts, dtype=float)
    head, cross, gram = _quadratic_forms(ctx, bs, t)
    att = ctx.stats.attenuation[bs]
    pwr = ctx.stats.power
    kap2 = ctx.hw.kappa ** 2
    floor_sum = float(np.sum(pwr * att))
    noise = ctx.stats.noise_var * ctx.hw.xi
    out = np.zeros((head.shape[0], n.size))
    for k in range(head.shape[0]):
        q1 = head[k]
        if q1 == 0.0:
            continue
        lam = att[bs, k]
        gram_sum = float(np.sum(pwr * att ** 2 * gram[k]))
        pc = pwr * att ** 2 * np.abs(cross[k]) ** 2
        pc = pc.copy()
        pc[bs, k] = 0.0
        pc_sum = float(np.sum(pc))
        signal = pwr[bs, k] * lam ** 2 * n ** 2 * q1 ** 2
        den = ((1.0 + kap2) * (n * q1 * floor_sum + n * gram_sum)
               + n * (n - 1.0) * pc_sum
               - n * pwr[bs, k] * lam ** 2 * q1 ** 2
               + noise * n * q1)
        out[k] = signal / den
    return out


def mrc_cell_asymptotic(ctx: EstimatorContext, bs: int, t: int) -> np.ndarray:
    """Large-array SINR limit of every user served by one BS."""
    head, cross, _ = _quadratic_forms(ctx, bs, t)
    att = ctx.stats.attenuation[bs]
    pwr = ctx.stats.power
    out = np.empty(head.shape[0])
    for k in range(head.shape[0]):
        pc = pwr * att ** 2 * np.abs(cross[k]) ** 2
        pc[bs, k] = 0.0
        den = float(np.sum(pc))
        num = pwr[bs, k] * att[bs, k] ** 2 * head[k] ** 2
        out[k] = num / den if den > 0.0 else math.inf
    return out


def sinr_asymptotic(ctx: EstimatorContext, bs: int, user: int, t: int) -> float:
    """Large-array SINR limit under MRC.

    Only pilot contamination survives as N grows; distortion, amplified
    noise and estimation error all wash out.  Returns ``inf`` when no
    other user's decayed pilot has any component on the target's (no
    contamination at all).
    """
    dims = ctx.stats.dims
    if not dims.pilot_len < t <= dims.block_len:
        raise ValueError(f"t ({t}) must be in {dims.pilot_len + 1}..{dims.block_len}")
    return float(mrc_cell_asymptotic(ctx, bs, t)[user])


def ergodic_rate(sinr: np.ndarray, block_len: int, pilot_len: int) -> float:
    """Ergodic achievable rate in bit per channel use.

    ``sinr`` holds SINR(t) for every data channel use t = B+1..T; the
    rate averages log2(1 + SINR) over the whole block including the
    pilot overhead.  Compensated summation keeps the reduction
    associativity-robust.
    """
    sinr = np.asarray(sinr, dtype=float)
    expected = block_len - pilot_len
    if sinr.shape != (expected,):
        raise ValueError(f"expected {expected} SINR values, got shape {sinr.shape}")
    return math.fsum(math.log2(1.0 + s) for s in sinr) / block_len


def rate_from_sinr_samples(t_values: np.ndarray, sinr: np.ndarray,
                           block_len: int, pilot_len: int) -> float:
    """Rate from SINR sampled on a decimated t-grid.

    SINR varies smoothly in t (only through the phase-decay
    exponentials), so the unsampled channel uses are filled by linear
    interpolation before the exact block average is taken; outside the
    sampled range the nearest sample is held constant.  Sampling the
    full grid B+1..T reproduces :func:`ergodic_rate` exactly.
    """
    t_values = np.asarray(t_values)
    sinr = np.asarray(sinr, dtype=float)
    if t_values[0] < pilot_len + 1 or t_values[-1] > block_len:
        raise ValueError("t grid must lie within B+1..T")
    full_t = np.arange(pilot_len + 1, block_len + 1)
    full = np.interp(full_t, t_values, sinr)
    return ergodic_rate(full, block_len, pilot_len)


def default_t_grid(dims, step: int = 1) -> np.ndarray:
    """Data-phase sample times B+1..T with the given decimation step."""
    B, T = dims.pilot_len, dims.block_len
    grid = np.arange(B + 1, T + 1, step)
    if grid[-1] != T:
        grid = np.append(grid, T)
    return grid


def mrc_sinr_report(ctx: EstimatorContext, bs: int, user: int,
                    t_values: np.ndarray | None = None,
                    num_antennas: int | None = None) -> SinrReport:
    """SINR trajectory, ergodic rate and large-array limit for one user."""
    dims = ctx.stats.dims
    if t_values is None:
        t_values = default_t_grid(dims)
    t_values = np.asarray(t_values)
    sinr = np.array([mrc_sinr(ctx, bs, user, int(t), num_antennas)
                     for t in t_values])
    rate = rate_from_sinr_samples(t_values, sinr, dims.block_len, dims.pilot_len)
    limit = sinr_asymptotic(ctx, bs, user, int(t_values[-1]))
    return SinrReport(t_values=t_values, sinr=sinr, rate=rate, asymptotic=limit)


def apply_scaling(exp: ScalingExponents, num_antennas: int) -> HardwareProfile:
    """Hardware profile at array size N under the given growth exponents.

    kappa^2 grows as N^tau1, xi as N^tau2, and the phase-drift variance
    logarithmically as delta0 * (1 + tau3 ln N).
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    n = float(num_antennas)
    kappa = exp.kappa0 * n ** (exp.tau1 / 2.0)
    xi = exp.xi0 * n ** exp.tau2
    delta = exp.delta0 * (1.0 + exp.tau3 * math.log(n))
    return HardwareProfile(delta=delta, kappa=kappa, xi=xi)


def scaling_law_holds(exp: ScalingExponents, t: int, pilot_len: int) -> bool:
    """Whether SINR(t) stays bounded away from zero as N grows.

    The condition couples the additive imperfections (the faster of
    tau1, tau2) with the accumulated phase drift at time t; it is
    hardest to satisfy at the end of the block, so t = T is the
    whole-block worst case.
    """
    if t <= pilot_len:
        raise ValueError(f"t ({t}) must exceed pilot_len ({pilot_len})")
    lhs = max(exp.tau1, exp.tau2) + 0.5 * exp.delta0 * (t - pilot_len) * exp.tau3
    return lhs <= 0.5
