"""Core data types shared by every module: dimensions, hardware profiles,
network statistics and pilot books.

All quantities are kept in linear scale internally.  dB / dBm conversions
happen at the CLI boundary only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PILOT_KINDS = ("spatial_dft", "temporal", "custom")


class ConfigError(ValueError):
    """A configuration violates one of the model invariants."""


def _freeze(a: np.ndarray) -> np.ndarray:
    """Return a read-only view so shared instances stay immutable."""
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dimensions:
    """System dimensions.

    Attributes
    ----------
    num_cells : int
        Number of cells, each served by one base station.
    users_per_cell : int
        Single-antenna users per cell.
    num_antennas : int
        Base-station array size.
    pilot_len : int
        Channel uses per coherence block spent on pilots.
    block_len : int
        Coherence block length in channel uses.
    """

    num_cells: int
    users_per_cell: int
    num_antennas: int
    pilot_len: int
    block_len: int

    def __post_init__(self):
        for name in ("num_cells", "users_per_cell", "num_antennas",
                     "pilot_len", "block_len"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not self.users_per_cell <= self.pilot_len <= self.block_len:
            raise ConfigError(
                "need users_per_cell <= pilot_len <= block_len, got "
                f"K={self.users_per_cell}, B={self.pilot_len}, T={self.block_len}")


@dataclass(frozen=True)
class HardwareProfile:
    """Receiver hardware imperfection parameters.

    delta : phase-drift innovation variance per channel use (rad^2).
    kappa : error vector magnitude of the additive distortion noise.
    xi    : thermal-noise amplification factor of the receiver chain.

    Ideal hardware is ``HardwareProfile(delta=0.0, kappa=0.0, xi=1.0)``.
    The physical receiver model requires xi >= 1; construction only
    enforces xi > 0 so that scaling-law analysis profiles with
    0 < xi < 1 can be evaluated, and :func:`validate` applies the strict
    check for simulation configurations.
    """

    delta: float = 0.0
    kappa: float = 0.0
    xi: float = 1.0

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.kappa < 0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.xi <= 0:
            raise ConfigError(f"xi must be > 0, got {self.xi}")

    @property
    def is_ideal(self) -> bool:
        return self.delta == 0.0 and self.kappa == 0.0 and self.xi == 1.0


@dataclass(frozen=True)
class ScalingExponents:
    """How fast the hardware imperfections grow with the array size.

    For an array of N antennas the effective profile becomes
    ``kappa^2 = kappa0^2 * N^tau1``, ``xi = xi0 * N^tau2`` and
    ``delta = delta0 * (1 + tau3 * ln N)``.
    """

    tau1: float = 0.0
    tau2: float = 0.0
    tau3: float = 0.0
    kappa0: float = 0.0
    xi0: float = 1.0
    delta0: float = 0.0

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "kappa0", "xi0", "delta0"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class NetworkStats:
    """Large-scale statistics of the whole network.

    attenuation[j, l, k] is the average channel gain (linear) from user k
    of cell l to the base station of cell j.  power[l, k] is the maximum
    per-channel-use transmit power of user k in cell l, and noise_var is
    the thermal noise variance, both in matching linear units.
    """

    dims: Dimensions
    attenuation: np.ndarray
    power: np.ndarray
    noise_var: float

    def __post_init__(self):
        L, K = self.dims.num_cells, self.dims.users_per_cell
        att = _freeze(np.asarray(self.attenuation, dtype=float))
        pwr = _freeze(np.asarray(self.power, dtype=float))
        object.__setattr__(self, "attenuation", att)
        object.__setattr__(self, "power", pwr)
        if att.shape != (L, L, K):
            raise ConfigError(f"attenuation must have shape {(L, L, K)}, got {att.shape}")
        if pwr.shape != (L, K):
            raise ConfigError(f"power must have shape {(L, K)}, got {pwr.shape}")


@dataclass(frozen=True)
class PilotBook:
    """Pilot sequences for every user in the network.

    sequences[l, k] is the length-B complex pilot of user k in cell l.
    reuse_id[l, k] groups users that transmit the same sequence in
    different cells; the built-in books reuse by within-cell user index.
    """

    kind: str
    sequences: np.ndarray
    reuse_id: np.ndarray

    def __post_init__(self):
        if self.kind not in PILOT_KINDS:
            raise ConfigError(f"unsupported pilot kind {self.kind!r}")
        object.__setattr__(self, "sequences", _freeze(np.asarray(self.sequences, dtype=complex)))
        object.__setattr__(self, "reuse_id", _freeze(np.asarray(self.reuse_id, dtype=int)))

    @property
    def pilot_len(self) -> int:
        return self.sequences.shape[2]


def build_pilot_book(kind: str, dims: Dimensions, power: np.ndarray) -> PilotBook:
    """Build the pilot book used during the first B channel uses.

    Parameters
    ----------
    kind : str
        ``"spatial_dft"`` assigns user k of every cell the k-th column of
        the B x B DFT matrix, scaled so each symbol carries the user's
        full per-channel-use power.  ``"temporal"`` gives user k a single
        nonzero symbol of power ``power[l, k]`` at channel use k, so the
        sequences stay orthogonal in time even under phase drift (at the
        cost of 1/K of the total pilot energy when B == K).
    dims : Dimensions
    power : array_like
        Per-user power caps, shape (num_cells, users_per_cell) or scalar.

    Returns
    -------
    PilotBook
    """
    L, K, B = dims.num_cells, dims.users_per_cell, dims.pilot_len
    if B < K:
        raise ConfigError(f"pilot_len ({B}) must be >= users_per_cell ({K})")
    pwr = np.broadcast_to(np.asarray(power, dtype=float), (L, K))
    if np.any(pwr < 0):
        raise ConfigError("power must be nonnegative")

    seqs = np.zeros((L, K, B), dtype=complex)
    amp = np.sqrt(pwr)
    if kind == "spatial_dft":
        # Column k of the DFT matrix, per-symbol magnitude 1, reused with
        # the same column index in every cell.
        idx = np.arange(B)
        for k in range(K):
            col = np.exp(-2j * np.pi * idx * (k % B) / B)
            seqs[:, k, :] = amp[:, k, None] * col[None, :]
    elif kind == "temporal":
        for k in range(K):
            seqs[:, k, k % B] = amp[:, k]
    else:
        raise ConfigError(f"unsupported pilot kind {kind!r}")

    reuse = np.tile(np.arange(K), (L, 1))
    return PilotBook(kind=kind, sequences=seqs, reuse_id=reuse)


def validate(stats: NetworkStats, book: PilotBook, hw: HardwareProfile,
             strict: bool = True) -> tuple[NetworkStats, PilotBook, HardwareProfile]:
    """Check every invariant and return the noise-normalized configuration.

    All transmit powers are divided by the noise variance and the pilot
    amplitudes by its square root, so the returned configuration has
    noise_var == 1.  Every SINR downstream is unchanged by this scaling.

    Raises
    ------
    ConfigError
        Listing all violated invariants.  ``strict=True`` additionally
        enforces the physical receiver constraint xi >= 1 (scaling-law
        analysis may legitimately probe 0 < xi < 1).
    """
    problems = []
    dims = stats.dims
    if stats.noise_var <= 0:
        problems.append(f"noise_var must be > 0, got {stats.noise_var}")
    if np.any(stats.attenuation <= 0):
        problems.append("all attenuation entries must be > 0")
    if np.any(stats.power < 0):
        problems.append("all powers must be >= 0")
    if strict and hw.xi < 1.0:
        problems.append(f"xi must be >= 1 for a physical receiver, got {hw.xi}")
    if book.sequences.shape != (dims.num_cells, dims.users_per_cell, dims.pilot_len):
        problems.append(
            f"pilot book shape {book.sequences.shape} does not match dimensions")
    else:
        sym_power = np.abs(book.sequences) ** 2
        if np.any(sym_power > stats.power[:, :, None] * (1 + 1e-12) + 1e-300):
            problems.append("pilot symbol power exceeds the per-user power cap")
        if book.kind == "temporal":
            for l in range(dims.num_cells):
                support = [np.flatnonzero(book.sequences[l, k]) for k in range(dims.users_per_cell)]
                if any(s.size != 1 for s in support):
                    problems.append(f"temporal pilot of cell {l} has more than one nonzero symbol")
                    break
                if len({int(s[0]) for s in support}) != dims.users_per_cell:
                    problems.append(f"temporal pilots of cell {l} collide in time")
                    break
    if problems:
        raise ConfigError("; ".join(problems))

    s2 = float(stats.noise_var)
    if s2 == 1.0:
        return stats, book, hw
    norm_stats = replace(stats, power=stats.power / s2, noise_var=1.0)
    norm_book = replace(book, sequences=book.sequences / np.sqrt(s2))
    return norm_stats, norm_book, hw
