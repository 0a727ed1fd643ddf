"""Empirical estimation of the SINR expectations for arbitrary receive
filters (MRC and the approximate MMSE filter).

The engine is vectorized over trials in chunks whose size depends only
on the problem dimensions.  Each (trial, base station) pair owns an
independent counter-based random substream, and chunk partial sums are
merged in chunk order, so results are bit-identical no matter how many
worker processes are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .config import HardwareProfile, NetworkStats, PilotBook
from .estimation import EstimatorContext, error_coeffs, estimation_weights
from .rates import rate_from_sinr_samples

FILTER_KINDS = ("mrc", "approx_mmse")

CHUNK = 512          # trial-chunk cap; per-trial draws never depend on it
N_BATCHES = 16       # batch-means resolution for SINR / rate standard errors
CHUNK_BYTES = 100_000_000  # soft cap on the per-chunk working set


def _chunk_size(dims) -> int:
    """Trials per chunk, shrunk so big networks stay inside memory.

    A pure function of the dimensions: results stay reproducible across
    machines and worker counts for a given configuration.
    """
    per_trial = 48 * dims.num_cells * dims.users_per_cell * dims.num_antennas
    return max(16, min(CHUNK, CHUNK_BYTES // max(per_trial, 1)))


@dataclass(frozen=True)
class TrialPlan:
    """What to simulate: how many trials, where the randomness comes
    from, and at which data channel uses the SINR terms are sampled."""

    trials: int
    master_seed: int
    t_samples: tuple
    filter_kind: str = "mrc"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        ts = tuple(int(t) for t in self.t_samples)
        object.__setattr__(self, "t_samples", ts)
        if not ts or any(ts[i + 1] <= ts[i] for i in range(len(ts) - 1)):
            raise ValueError("t_samples must be non-empty and strictly increasing")
        if self.filter_kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.filter_kind!r}")


@dataclass(frozen=True)
class EmpiricalMoments:
    """Sample means of the four SINR building blocks, with standard errors.

    Mirrors the closed-form MRC moments: norm2 = mean ||v||^2, first =
    mean v^H h of the served user (complex), second[l, m] = mean
    |v^H h_lm|^2, distortion = mean filtered distortion-noise power.
    """

    norm2: float
    first: complex
    second: np.ndarray
    distortion: float
    norm2_se: float
    first_se: float
    second_se: np.ndarray
    distortion_se: float


@dataclass(frozen=True)
class EmpiricalSinr:
    """Monte Carlo SINR of one user at the sampled channel uses."""

    target: tuple
    t_samples: tuple
    moments: tuple          # EmpiricalMoments per sampled t
    sinr: np.ndarray
    sinr_se: np.ndarray
    rate: float
    rate_se: float
    trials: int


@dataclass(frozen=True)
class _Job:
    """Everything a worker needs; picklable."""

    stats: NetworkStats
    book: PilotBook
    hw: HardwareProfile
    ctx: EstimatorContext
    master_seed: int
    trials: int
    t_samples: tuple
    cells: tuple
    filters: tuple
    n_batches: int


def _trial_floats(dims, n_samples: int) -> int:
    L, K, N, B = dims.num_cells, dims.users_per_cell, dims.num_antennas, dims.pilot_len
    return 2 * L * K * N + N * (B + n_samples) + 2 * B * N + 2 * B * N


def _batch_of(trial_idx: np.ndarray, trials: int, n_batches: int) -> np.ndarray:
    return (trial_idx * n_batches) // trials


def _mmse_filters_direct(u, lam_diag, p_active, rhs):
    """Solve (sum_l p_l u_l u_l^H + diag(lam)) v = rhs per trial, rhs (n, N, K)."""
    m = np.matmul(np.swapaxes(u, 1, 2), p_active[:, None] * u.conj())
    n_ant = m.shape[-1]
    idx = np.arange(n_ant)
    m[:, idx, idx] += lam_diag
    return np.linalg.solve(m, rhs)


def _mmse_filters_woodbury(u, lam_diag, p_active, rhs):
    """Same system via the matrix inversion lemma.

    The MMSE matrix is diagonal plus rank L*K, so for large arrays the
    solve costs O(N (LK)^2) instead of O(N^3).
    """
    li = 1.0 / lam_diag                        # (n, N)
    umat_h = u.conj()                          # (n, LK, N): rows u_l^H
    li_u = li[:, None, :] * u                  # (n, LK, N): rows (Lam^-1 u_l)^T
    li_r = li[:, :, None] * rhs
    cap = np.matmul(umat_h, np.swapaxes(li_u, 1, 2))
    nlk = cap.shape[-1]
    idx = np.arange(nlk)
    cap[:, idx, idx] += 1.0 / p_active
    w = np.linalg.solve(cap, np.matmul(umat_h, li_r))
    return li_r - np.matmul(np.swapaxes(li_u, 1, 2), w)


def _chunk_partial(job: _Job, chunk: int) -> dict:
    """Accumulated per-batch sums for the trials of one chunk.

    All heavy products are batched matrix multiplies over the chunk, and
    the phase rotation of the effective channels is folded into the
    filter so the rotated channel tensor is never materialized.
    """
    dims = job.stats.dims
    L, K, N, B = dims.num_cells, dims.users_per_cell, dims.num_antennas, dims.pilot_len
    t_samples = job.t_samples
    S = len(t_samples)
    size = _chunk_size(dims)
    lo = chunk * size
    hi = min(lo + size, job.trials)
    n = hi - lo
    idx = np.arange(lo, hi)
    batches = _batch_of(idx, job.trials, job.n_batches)
    # reduceat segment starts, mapped back to batch rows
    starts = np.flatnonzero(np.diff(batches, prepend=batches[0] - 1))
    rows = batches[starts]

    kap2 = job.hw.kappa ** 2
    noise_scale = math.sqrt(job.stats.noise_var * job.hw.xi / 2.0)
    seq_flat = job.book.sequences.reshape(L * K, B)
    p_flat = job.stats.power.reshape(-1)
    active = np.flatnonzero(p_flat > 0)
    n_floats = _trial_floats(dims, S)

    out = {}
    for cell in job.cells:
        raw = np.empty((n, n_floats))
        for i, trial in enumerate(range(lo, hi)):
            rng = np.random.default_rng(
                np.random.SeedSequence((job.master_seed, trial, cell)))
            raw[i] = rng.standard_normal(n_floats)
        pos = 0

        z = raw[:, pos:pos + 2 * L * K * N].reshape(n, L * K, N, 2)
        pos += 2 * L * K * N
        scale = np.sqrt(job.stats.attenuation[cell].reshape(L * K) / 2.0)
        ch = (z[..., 0] + 1j * z[..., 1]) * scale[:, None]      # (n, LK, N)

        zp = raw[:, pos:pos + N * (B + S)].reshape(n, N, B + S)
        pos += N * (B + S)
        phi_pilot = np.cumsum(math.sqrt(job.hw.delta) * zp[:, :, :B], axis=-1)
        phi_data = np.empty((n, N, S))
        prev_t, prev_phi = B, phi_pilot[:, :, B - 1]
        for s, t in enumerate(t_samples):
            prev_phi = prev_phi + math.sqrt(job.hw.delta * (t - prev_t)) * zp[:, :, B + s]
            phi_data[:, :, s] = prev_phi
            prev_t = t

        zw = raw[:, pos:pos + 2 * B * N].reshape(n, B, N, 2)
        pos += 2 * B * N
        thermal = (zw[..., 0] + 1j * zw[..., 1]) * noise_scale
        zd = raw[:, pos:pos + 2 * B * N].reshape(n, B, N, 2)
        dist_unit = (zd[..., 0] + 1j * zd[..., 1]) * math.sqrt(0.5)

        ch_pow = np.abs(ch) ** 2                        # (n, LK, N)
        y = np.matmul(seq_flat.T[None], ch)             # (n, B, N)
        y *= np.exp(1j * np.swapaxes(phi_pilot, 1, 2))
        if kap2 > 0:
            dist_var = kap2 * np.matmul(np.abs(seq_flat.T[None]) ** 2, ch_pow)
            y += dist_unit * np.sqrt(dist_var)
        y += thermal

        # per-antenna received channel power, for the distortion moment
        pw_ant = np.matmul(p_flat[None, None, :], ch_pow)[:, 0]   # (n, N)
        ch_t = np.swapaxes(ch, 1, 2)                              # (n, N, LK)

        acc = _new_accumulators(job)
        for s, t in enumerate(t_samples):
            weights = estimation_weights(job.ctx, cell, t).reshape(L * K, B)
            est = np.matmul(weights[None], y)                     # (n, LK, N)
            phase = np.exp(1j * phi_data[:, :, s])                # (n, N)
            for f in job.filters:
                if f == "mrc":
                    v = est[:, cell * K:(cell + 1) * K]           # (n, K, N)
                else:
                    v = _approx_mmse_batch(job, cell, t, est, active, p_flat)
                # v^H D_phi(t) h for every user, without forming D_phi h
                vp = v.conj() * phase[:, None, :]
                g = np.matmul(vp, ch_t).reshape(n, K, L, K)
                g2 = np.abs(g) ** 2
                v_pow = np.abs(v) ** 2
                n2 = np.sum(v_pow, axis=-1)                       # (n, K)
                dist = kap2 * np.matmul(v_pow, pw_ant[:, :, None])[:, :, 0]
                a = acc[f]
                np.add.at(a["g"][s], rows, np.add.reduceat(g, starts, axis=0))
                np.add.at(a["g2"][s], rows, np.add.reduceat(g2, starts, axis=0))
                np.add.at(a["g4"][s], rows, np.add.reduceat(g2 ** 2, starts, axis=0))
                np.add.at(a["n2"][s], rows, np.add.reduceat(n2, starts, axis=0))
                np.add.at(a["n2sq"][s], rows, np.add.reduceat(n2 ** 2, starts, axis=0))
                np.add.at(a["dist"][s], rows, np.add.reduceat(dist, starts, axis=0))
                np.add.at(a["distsq"][s], rows, np.add.reduceat(dist ** 2, starts, axis=0))
        out[cell] = acc
    return out


def _approx_mmse_batch(job, cell, t, est, active, p_flat):
    """Approximate MMSE filters for all served users, est shaped (n, LK, N).

    The whitening diagonal uses the estimated channel powers (the filter
    only sees estimates), not the true ones.
    """
    dims = job.stats.dims
    N, K = dims.num_antennas, dims.users_per_cell
    kap2 = job.hw.kappa ** 2
    coeffs = error_coeffs(job.ctx, cell, t)
    const = ((1.0 + kap2) * float(np.sum(job.stats.power * coeffs))
             + job.stats.noise_var * job.hw.xi)
    est_pow = np.matmul(p_flat[None, None, :], np.abs(est) ** 2)[:, 0]
    lam_diag = kap2 * est_pow + const                  # (n, N)
    u = est[:, active]                                 # (n, LK_active, N)
    rhs = np.swapaxes(est[:, cell * K:(cell + 1) * K], 1, 2)   # (n, N, K)
    if 2 * active.size < N:
        sol = _mmse_filters_woodbury(u, lam_diag, p_flat[active], rhs)
    else:
        sol = _mmse_filters_direct(u, lam_diag, p_flat[active], rhs)
    return np.swapaxes(sol, 1, 2)                      # (n, K, N)


def _new_accumulators(job: _Job) -> dict:
    dims = job.stats.dims
    L, K = dims.num_cells, dims.users_per_cell
    S, NB = len(job.t_samples), job.n_batches
    def block():
        return {
            "g": np.zeros((S, NB, K, L, K), dtype=complex),
            "g2": np.zeros((S, NB, K, L, K)),
            "g4": np.zeros((S, NB, K, L, K)),
            "n2": np.zeros((S, NB, K)),
            "n2sq": np.zeros((S, NB, K)),
            "dist": np.zeros((S, NB, K)),
            "distsq": np.zeros((S, NB, K)),
        }
    return {f: block() for f in job.filters}


def _merge_into(total: dict, part: dict) -> None:
    for cell, by_filter in part.items():
        for f, arrays in by_filter.items():
            for key, val in arrays.items():
                total[cell][f][key] += val


def _run_job(job: _Job, workers: int = 1) -> dict:
    n_chunks = -(-job.trials // _chunk_size(job.stats.dims))
    total = {cell: _new_accumulators(job) for cell in job.cells}
    if workers <= 1 or n_chunks == 1:
        for c in range(n_chunks):
            _merge_into(total, _chunk_partial(job, c))
        return total
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves chunk order, so the merge grouping is fixed and
        # results do not depend on the worker count
        for part in pool.map(_chunk_partial, [job] * n_chunks, range(n_chunks)):
            _merge_into(total, part)
    return total


def _moment_stats(arrays: dict, s: int, trials: int):
    """Totals over batches -> (means, standard errors) at sample index s."""
    n = trials
    g_mean = arrays["g"][s].sum(axis=0) / n
    g2_mean = arrays["g2"][s].sum(axis=0) / n
    g4_mean = arrays["g4"][s].sum(axis=0) / n
    n2_mean = arrays["n2"][s].sum(axis=0) / n
    n2sq_mean = arrays["n2sq"][s].sum(axis=0) / n
    d_mean = arrays["dist"][s].sum(axis=0) / n
    dsq_mean = arrays["distsq"][s].sum(axis=0) / n

    def se(second, first_sq):
        return np.sqrt(np.maximum(0.0, second - first_sq) / n)

    return {
        "g": g_mean, "g_se": se(g2_mean, np.abs(g_mean) ** 2),
        "g2": g2_mean, "g2_se": se(g4_mean, g2_mean ** 2),
        "n2": n2_mean, "n2_se": se(n2sq_mean, n2_mean ** 2),
        "dist": d_mean, "dist_se": se(dsq_mean, d_mean ** 2),
    }


def _sinr_from_sums(arrays, s, cell, stats, hw, count, batch_rows=None):
    """SINR per served user from the batch sums of ``count`` trials."""
    sel = slice(None) if batch_rows is None else batch_rows
    g = arrays["g"][s][sel].sum(axis=0) / count
    g2 = arrays["g2"][s][sel].sum(axis=0) / count
    n2 = arrays["n2"][s][sel].sum(axis=0) / count
    dist = arrays["dist"][s][sel].sum(axis=0) / count
    K = n2.shape[0]
    sinr = np.zeros(K)
    for k in range(K):
        signal = stats.power[cell, k] * np.abs(g[k, cell, k]) ** 2
        den = (float(np.sum(stats.power * g2[k])) - signal + dist[k]
               + stats.noise_var * hw.xi * n2[k])
        sinr[k] = signal / den if den > 0 else 0.0
    return sinr


def _batch_counts(trials: int, n_batches: int) -> np.ndarray:
    return np.bincount(_batch_of(np.arange(trials), trials, n_batches),
                       minlength=n_batches)


def empirical_sinr(plan: TrialPlan, stats: NetworkStats, book: PilotBook,
                   hw: HardwareProfile, target: tuple,
                   workers: int = 1) -> EmpiricalSinr:
    """Estimate the SINR of one user by Monte Carlo.

    Each trial draws a network realization towards the serving BS,
    estimates all effective channels from the received pilot block,
    builds the receive filter of ``plan.filter_kind`` and accumulates
    the four moment families.  Expectations are taken across trials
    (the filter is use-and-forget side information); the distortion
    moment accumulates the exact conditional power of the filtered
    distortion noise given the draw, which shares its mean with the
    unconditional moment at lower variance.

    Standard errors of the assembled SINR and rate come from batch
    means over deterministic trial groups.
    """
    if plan.trials < 2:
        raise ValueError("at least 2 trials are needed for standard errors")
    cell, user = target
    dims = stats.dims
    for t in plan.t_samples:
        if not dims.pilot_len < t <= dims.block_len:
            raise ValueError(f"t sample {t} outside data phase "
                             f"{dims.pilot_len + 1}..{dims.block_len}")
    ctx = EstimatorContext.build(stats, book, hw)
    n_batches = min(N_BATCHES, plan.trials)
    job = _Job(stats=stats, book=book, hw=hw, ctx=ctx,
               master_seed=plan.master_seed, trials=plan.trials,
               t_samples=plan.t_samples, cells=(cell,),
               filters=(plan.filter_kind,), n_batches=n_batches)
    arrays = _run_job(job, workers)[cell][plan.filter_kind]

    S = len(plan.t_samples)
    counts = _batch_counts(plan.trials, n_batches)
    moments = []
    sinr = np.zeros(S)
    sinr_batch = np.zeros((n_batches, S))
    for s in range(S):
        st = _moment_stats(arrays, s, plan.trials)
        moments.append(EmpiricalMoments(
            norm2=float(st["n2"][user]), first=complex(st["g"][user, cell, user]),
            second=st["g2"][user], distortion=float(st["dist"][user]),
            norm2_se=float(st["n2_se"][user]), first_se=float(st["g_se"][user, cell, user]),
            second_se=st["g2_se"][user], distortion_se=float(st["dist_se"][user])))
        sinr[s] = _sinr_from_sums(arrays, s, cell, stats, hw, plan.trials)[user]
        for b in range(n_batches):
            sinr_batch[b, s] = _sinr_from_sums(arrays, s, cell, stats, hw,
                                               counts[b], [b])[user]

    rate = rate_from_sinr_samples(np.array(plan.t_samples), sinr,
                                  dims.block_len, dims.pilot_len)
    batch_rates = [rate_from_sinr_samples(np.array(plan.t_samples), sinr_batch[b],
                                          dims.block_len, dims.pilot_len)
                   for b in range(n_batches)]
    sinr_se = np.std(sinr_batch, axis=0, ddof=1) / math.sqrt(n_batches)
    rate_se = float(np.std(batch_rates, ddof=1) / math.sqrt(n_batches))
    return EmpiricalSinr(target=(cell, user), t_samples=plan.t_samples,
                         moments=tuple(moments), sinr=sinr, sinr_se=sinr_se,
                         rate=rate, rate_se=rate_se, trials=plan.trials)


@dataclass(frozen=True)
class NetworkRates:
    """Per-user Monte Carlo rates for a set of cells and one filter.

    rate_batch holds the per-batch rate estimates behind rate_se; sums
    over users should derive their standard error from it, since the
    per-user estimates share trials and are correlated.
    """

    filter_kind: str
    cells: tuple
    t_samples: tuple
    sinr: np.ndarray        # (cells, K, samples)
    rate: np.ndarray        # (cells, K)
    rate_se: np.ndarray     # (cells, K)
    rate_batch: np.ndarray  # (batches, cells, K)
    trials: int


def empirical_network_rates(plan: TrialPlan, stats: NetworkStats, book: PilotBook,
                            hw: HardwareProfile, filters=None, cells=None,
                            workers: int = 1) -> dict:
    """Monte Carlo rates for every user of the listed cells.

    Runs all requested filters on the same realizations, which both
    halves the drawing cost and makes filter comparisons paired.
    Returns {filter_kind: NetworkRates}.
    """
    if plan.trials < 2:
        raise ValueError("at least 2 trials are needed for standard errors")
    dims = stats.dims
    filters = tuple(filters) if filters else (plan.filter_kind,)
    for f in filters:
        if f not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {f!r}")
    cells = tuple(cells) if cells is not None else tuple(range(dims.num_cells))
    ctx = EstimatorContext.build(stats, book, hw)
    n_batches = min(N_BATCHES, plan.trials)
    job = _Job(stats=stats, book=book, hw=hw, ctx=ctx,
               master_seed=plan.master_seed, trials=plan.trials,
               t_samples=plan.t_samples, cells=cells, filters=filters,
               n_batches=n_batches)
    totals = _run_job(job, workers)

    S = len(plan.t_samples)
    t_arr = np.array(plan.t_samples)
    counts = _batch_counts(plan.trials, n_batches)
    result = {}
    for f in filters:
        sinr = np.zeros((len(cells), dims.users_per_cell, S))
        rate = np.zeros((len(cells), dims.users_per_cell))
        rate_se = np.zeros_like(rate)
        rate_batch = np.zeros((n_batches, len(cells), dims.users_per_cell))
        for ci, cell in enumerate(cells):
            arrays = totals[cell][f]
            batch_sinr = np.zeros((n_batches, dims.users_per_cell, S))
            for s in range(S):
                sinr[ci, :, s] = _sinr_from_sums(arrays, s, cell, stats, hw, plan.trials)
                for b in range(n_batches):
                    batch_sinr[b, :, s] = _sinr_from_sums(arrays, s, cell, stats,
                                                          hw, counts[b], [b])
            for k in range(dims.users_per_cell):
                rate[ci, k] = rate_from_sinr_samples(t_arr, sinr[ci, k],
                                                     dims.block_len, dims.pilot_len)
                for b in range(n_batches):
                    rate_batch[b, ci, k] = rate_from_sinr_samples(
                        t_arr, batch_sinr[b, k], dims.block_len, dims.pilot_len)
                rate_se[ci, k] = np.std(rate_batch[:, ci, k], ddof=1) / math.sqrt(n_batches)
        result[f] = NetworkRates(filter_kind=f, cells=cells,
                                 t_samples=plan.t_samples, sinr=sinr,
                                 rate=rate, rate_se=rate_se,
                                 rate_batch=rate_batch, trials=plan.trials)
    return result


def approx_mmse_filter(estimates: np.ndarray, coeffs: np.ndarray,
                       stats: NetworkStats, hw: HardwareProfile,
                       target: tuple) -> np.ndarray:
    """Approximate MMSE receive filter for one realization.

    Whitens against the estimated interference covariance built from all
    channel estimates, their error covariances and the distortion-noise
    diagonal, then matches the target user's estimate.  Solved as an
    N x N Hermitian system.

    Parameters
    ----------
    estimates : (L, K, N) channel estimates at the receiving BS.
    coeffs : (L, K) estimation error coefficients (white error covariance).
    target : (cell, user) of the served user; the receiving BS is
        ``target[0]``.
    """
    cell, user = target
    n_ant = estimates.shape[-1]
    u = estimates.reshape(-1, n_ant)
    p = stats.power.reshape(-1)
    kap2 = hw.kappa ** 2
    m = (u.T * p) @ u.conj()
    diag = kap2 * (p @ (np.abs(u) ** 2))
    const = (1.0 + kap2) * float(np.sum(stats.power * coeffs)) + stats.noise_var * hw.xi
    idx = np.arange(n_ant)
    m[idx, idx] += diag + const
    return cho_solve(cho_factor(m), estimates[cell, user])
