"""Shared helpers: small random configurations and an independent
vectorized sampler of the impaired receive model.

The sampler draws channels, phase trajectories and pilot observations
directly from the model definition (plain numpy, no reuse of the
package's drawing code), so tests that compare engine or closed-form
output against it exercise two independent paths.
"""

import numpy as np
import pytest

from hwmimo.config import Dimensions, NetworkStats, build_pilot_book


def make_config(num_cells=2, users_per_cell=2, num_antennas=4, pilot_len=2,
                block_len=10, noise_var=1.0, pilot_kind="spatial_dft", seed=0):
    """Random small network with O(1) gains and powers."""
    rng = np.random.default_rng(seed)
    dims = Dimensions(num_cells=num_cells, users_per_cell=users_per_cell,
                      num_antennas=num_antennas, pilot_len=pilot_len,
                      block_len=block_len)
    att = rng.uniform(0.2, 1.5, size=(num_cells, num_cells, users_per_cell))
    pwr = rng.uniform(0.5, 2.0, size=(num_cells, users_per_cell))
    stats = NetworkStats(dims=dims, attenuation=att, power=pwr, noise_var=noise_var)
    book = build_pilot_book(pilot_kind, dims, pwr)
    return stats, book


def sample_model(stats, book, hw, bs, t_list, trials, seed):
    """Direct draw of the impaired model at one BS, vectorized over trials.

    Returns dict with channels h (n, L, K, N), phase phasors
    exp(i phi(t)) for each requested t (n, len(t_list), N), and the
    received pilot block y (n, B, N).  Written from the model
    definition, independent of hwmimo.synth and hwmimo.montecarlo.
    """
    rng = np.random.default_rng(seed)
    dims = stats.dims
    L, K, N, B = (dims.num_cells, dims.users_per_cell, dims.num_antennas,
                  dims.pilot_len)
    n = trials

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    h = cn(n, L, K, N) * np.sqrt(stats.attenuation[bs])[None, :, :, None]
    t_max = max(max(t_list), B)
    steps = np.sqrt(hw.delta) * rng.standard_normal((n, N, t_max))
    phi = np.cumsum(steps, axis=-1)          # phi[..., i] is the phase at use i+1

    y = np.empty((n, B, N), dtype=complex)
    for i in range(B):
        sig = np.einsum("lk,nlkq->nq", book.sequences[:, :, i], h)
        sig = np.exp(1j * phi[:, :, i]) * sig
        dvar = hw.kappa ** 2 * np.einsum(
            "lk,nlkq->nq", np.abs(book.sequences[:, :, i]) ** 2, np.abs(h) ** 2)
        y[:, i] = (sig + cn(n, N) * np.sqrt(dvar)
                   + cn(n, N) * np.sqrt(stats.noise_var * hw.xi))
    phasors = np.stack([np.exp(1j * phi[:, :, t - 1]) for t in t_list], axis=1)
    return {"h": h, "phasors": phasors, "y": y}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
