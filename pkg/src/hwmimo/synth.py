"""Random draws of channels, oscillator phase trajectories, noises and
received signal blocks.

Every draw is reproducible: a (master seed, trial index) pair fully
determines a realization, independent of execution order, so Monte Carlo
trials can run in parallel and still merge deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Dimensions, HardwareProfile, NetworkStats, PilotBook

RngLike = "int | np.random.SeedSequence | np.random.Generator"


def as_generator(rng) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.default_rng(rng)
    return np.random.default_rng(np.random.SeedSequence(rng))


def trial_stream(master_seed: int, trial: int, substream: int | None = None) -> np.random.Generator:
    """Independent random stream for one Monte Carlo trial.

    Streams for distinct (master_seed, trial, substream) triples never
    overlap; the optional substream index lets per-base-station draws be
    made independently of each other.
    """
    key = (master_seed, trial) if substream is None else (master_seed, trial, substream)
    return np.random.default_rng(np.random.SeedSequence(key))


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian with the given per-entry variance."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * np.sqrt(var / 2.0)


def draw_channels(stats: NetworkStats, rng) -> np.ndarray:
    """Draw one block-fading channel realization for the whole network.

    Returns
    -------
    ndarray, shape (L, L, K, N)
        channels[j, l, k] is the vector channel from user (l, k) to the
        array of base station j; entries are i.i.d. CN(0, attenuation[j, l, k]).
    """
    rng = as_generator(rng)
    dims = stats.dims
    shape = (dims.num_cells, dims.num_cells, dims.users_per_cell, dims.num_antennas)
    h = complex_normal(rng, shape)
    return h * np.sqrt(stats.attenuation)[:, :, :, None]


def draw_phase_trajectories(delta: float, dims: Dimensions, rng) -> np.ndarray:
    """Draw Wiener phase-drift trajectories for every BS antenna.

    Returns
    -------
    ndarray, shape (L, N, T+1)
        phases[j, n, t] for t = 0..T, with phases[..., 0] == 0 and
        independent N(0, delta) increments per channel use and antenna.
        The common initial phase is absorbed into the circularly
        symmetric channel, so starting at zero loses no generality.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    rng = as_generator(rng)
    L, N, T = dims.num_cells, dims.num_antennas, dims.block_len
    steps = np.sqrt(delta) * rng.standard_normal((L, N, T))
    phases = np.zeros((L, N, T + 1))
    np.cumsum(steps, axis=-1, out=phases[:, :, 1:])
    return phases


def received_block(t: int, symbols: np.ndarray, channels: np.ndarray,
                   phases: np.ndarray, hw: HardwareProfile, stats: NetworkStats,
                   rng) -> np.ndarray:
    """One received channel use at every base station.

    Implements the impaired receive model: the superimposed user signals
    are rotated per antenna by the current phase drift, distortion noise
    with per-antenna power kappa^2 * sum_{l,k} E|x_lk|^2 |h^(n)|^2 is
    added, and the thermal noise is amplified by xi.

    Parameters
    ----------
    t : int
        Channel use in 1..T.
    symbols : ndarray, shape (L, K)
        Transmit symbols of every user at channel use t (pilots are
        deterministic; data symbols should be drawn CN(0, power)).
    channels, phases :
        As returned by :func:`draw_channels` / :func:`draw_phase_trajectories`.
    rng :
        Stream for the distortion and thermal noise of this channel use.

    Returns
    -------
    ndarray, shape (L, N) -- received vector at each BS.
    """
    dims = stats.dims
    if not 1 <= t <= dims.block_len:
        raise IndexError(f"channel use {t} outside 1..{dims.block_len}")
    rng = as_generator(rng)
    signal = np.einsum("lk,jlkn->jn", symbols, channels)
    y = np.exp(1j * phases[:, :, t]) * signal
    if hw.kappa > 0:
        dist_var = hw.kappa ** 2 * np.einsum(
            "lk,jlkn->jn", np.abs(symbols) ** 2, np.abs(channels) ** 2)
        y = y + complex_normal(rng, y.shape) * np.sqrt(dist_var)
    else:
        complex_normal(rng, y.shape)  # keep the stream layout fixed
    y = y + complex_normal(rng, y.shape, var=stats.noise_var * hw.xi)
    return y


@dataclass(frozen=True)
class Realization:
    """One Monte Carlo draw of the whole network.

    channels : (L, L, K, N) block-fading channels.
    phases : (L, N, T+1) phase-drift trajectories.
    pilot_blocks : (L, B, N) received signal during the pilot phase;
        pilot_blocks[j].reshape(B * N) is the stacked pilot observation
        of base station j.
    """

    channels: np.ndarray
    phases: np.ndarray
    pilot_blocks: np.ndarray
    master_seed: int
    trial: int

    @classmethod
    def draw(cls, stats: NetworkStats, book: PilotBook, hw: HardwareProfile,
             master_seed: int, trial: int = 0) -> "Realization":
        """Draw the realization identified by (master_seed, trial)."""
        rng = trial_stream(master_seed, trial)
        channels = draw_channels(stats, rng)
        phases = draw_phase_trajectories(hw.delta, stats.dims, rng)
        B = stats.dims.pilot_len
        blocks = np.stack([
            received_block(i + 1, book.sequences[:, :, i], channels, phases,
                           hw, stats, rng)
            for i in range(B)
        ], axis=1)
        return cls(channels=channels, phases=phases, pilot_blocks=blocks,
                   master_seed=master_seed, trial=trial)

    def effective_channels(self, t: int) -> np.ndarray:
        """Phase-rotated channels D_phi(t) h, shape (L, L, K, N)."""
        return np.exp(1j * self.phases[:, None, None, :, t]) * self.channels
