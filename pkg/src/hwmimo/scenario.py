"""Multi-cell evaluation scenario generator: a square grid of cells with
torus wrap-around, sectorized uniform user drops, 3GPP-style distance
pathloss with log-normal shadow fading, and sector-indexed pilot reuse.

Defaults reproduce a 16-cell network of 250 m x 250 m cells with 8 users
per cell, -47 dBm/Hz transmit power and -174 dBm/Hz thermal noise; the
emitted statistics are noise-normalized so only the 127 dB power-to-noise
ratio survives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, Dimensions, NetworkStats, PilotBook, build_pilot_book

CELL_SIDE_M = 250.0
MIN_SERVING_DISTANCE_M = 35.0
PATHLOSS_EXPONENT = 3.76
PATHLOSS_OFFSET = -1.53        # base-10 exponent at 1 m
DEFAULT_SHADOW_VAR = 0.25      # variance of the base-10 shadowing exponent
DEFAULT_POWER_DBM_HZ = -47.0
DEFAULT_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class Topology:
    """Geometry of one user drop on the wrap-around grid."""

    world_side: float
    cell_side: float
    bs_positions: np.ndarray   # (L, 2) cell centers
    ue_positions: np.ndarray   # (L, K, 2); user k sits in angular sector k

    def __post_init__(self):
        for name in ("bs_positions", "ue_positions"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def wrap_distance(a, b, world_side: float) -> float:
    """Euclidean distance between two points on the torus of the given side."""
    dx = abs(float(a[0]) - float(b[0]))
    dy = abs(float(a[1]) - float(b[1]))
    return math.hypot(min(dx, world_side - dx), min(dy, world_side - dy))


def grid_positions(num_cells: int, cell_side: float = CELL_SIDE_M) -> tuple[np.ndarray, float]:
    """Cell-center BS positions of a square wrap-around grid."""
    g = math.isqrt(num_cells)
    if g * g != num_cells:
        raise ConfigError(f"wrap-around grid needs a square cell count, got {num_cells}")
    coords = (np.arange(g) + 0.5) * cell_side
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()]), g * cell_side


def drop_users(num_cells: int, users_per_cell: int, rng,
               cell_side: float = CELL_SIDE_M,
               min_distance: float = MIN_SERVING_DISTANCE_M) -> Topology:
    """Place one uniform user in each angular sector of every cell.

    The cell around its center BS is split into ``users_per_cell`` equal
    angular sectors; user k is drawn uniformly over the part of sector k
    at least ``min_distance`` from the BS (rejection sampling, which
    terminates almost surely since the excluded disk covers a small
    fraction of the sector).
    """
    bs, world = grid_positions(num_cells, cell_side)
    K = users_per_cell
    ue = np.empty((num_cells, K, 2))
    sector = 2.0 * np.pi / K
    half = cell_side / 2.0
    if min_distance >= half:
        raise ConfigError(
            f"minimum UE distance {min_distance} m does not fit inside a "
            f"{cell_side} m cell")
    for l in range(num_cells):
        for k in range(K):
            while True:
                local = rng.uniform(-half, half, size=2)
                r = np.hypot(local[0], local[1])
                if r < min_distance:
                    continue
                ang = math.atan2(local[1], local[0]) % (2.0 * np.pi)
                if int(ang // sector) == k:
                    ue[l, k] = bs[l] + local
                    break
    return Topology(world_side=world, cell_side=cell_side, bs_positions=bs,
                    ue_positions=ue % world)


def pathloss(distance_m: float, shadow: float = 0.0) -> float:
    """Linear channel attenuation at the given distance.

    ``shadow`` is the log-normal shadowing realization expressed as a
    base-10 exponent: attenuation = 10**(shadow - 1.53) / d**3.76.
    """
    if distance_m <= 0:
        raise ValueError(f"distance must be > 0, got {distance_m}")
    return 10.0 ** (shadow + PATHLOSS_OFFSET) / distance_m ** PATHLOSS_EXPONENT


@dataclass(frozen=True)
class Scenario:
    """A fully specified drop: statistics, pilots and geometry."""

    stats: NetworkStats
    book: PilotBook
    topology: Topology
    master_seed: int
    pilot_kind: str

    def to_json(self, precision: int = 15) -> str:
        """Serialized scenario, sufficient to reproduce any experiment."""
        def fmt(a):
            return [float(f"{x:.{precision}g}") for x in np.asarray(a).ravel()]
        dims = self.stats.dims
        doc = {
            "master_seed": self.master_seed,
            "pilot_kind": self.pilot_kind,
            "dims": {"num_cells": dims.num_cells, "users_per_cell": dims.users_per_cell,
                     "num_antennas": dims.num_antennas, "pilot_len": dims.pilot_len,
                     "block_len": dims.block_len},
            "world_side": self.topology.world_side,
            "cell_side": self.topology.cell_side,
            "bs_positions": fmt(self.topology.bs_positions),
            "ue_positions": fmt(self.topology.ue_positions),
            "attenuation": fmt(self.stats.attenuation),
            "power": fmt(self.stats.power),
            "noise_var": self.stats.noise_var,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        doc = json.loads(text)
        d = doc["dims"]
        dims = Dimensions(num_cells=d["num_cells"], users_per_cell=d["users_per_cell"],
                          num_antennas=d["num_antennas"], pilot_len=d["pilot_len"],
                          block_len=d["block_len"])
        L, K = dims.num_cells, dims.users_per_cell
        stats = NetworkStats(
            dims=dims,
            attenuation=np.array(doc["attenuation"]).reshape(L, L, K),
            power=np.array(doc["power"]).reshape(L, K),
            noise_var=doc["noise_var"])
        book = build_pilot_book(doc["pilot_kind"], dims, stats.power)
        topo = Topology(world_side=doc["world_side"], cell_side=doc["cell_side"],
                        bs_positions=np.array(doc["bs_positions"]).reshape(L, 2),
                        ue_positions=np.array(doc["ue_positions"]).reshape(L, K, 2))
        return cls(stats=stats, book=book, topology=topo,
                   master_seed=doc["master_seed"], pilot_kind=doc["pilot_kind"])


def build_scenario(master_seed: int, overrides: dict | None = None,
                   pilot_kind: str = "spatial_dft",
                   shadow_var: float = DEFAULT_SHADOW_VAR,
                   shadow_as_std: bool = False,
                   power_dbm_hz: float = DEFAULT_POWER_DBM_HZ,
                   noise_dbm_hz: float = DEFAULT_NOISE_DBM_HZ) -> Scenario:
    """Generate one independent drop of the evaluation scenario.

    Parameters
    ----------
    master_seed : int
        Fully determines positions and shadow fading.
    overrides : dict, optional
        Any of num_cells / users_per_cell / num_antennas / pilot_len /
        block_len / cell_side to deviate from the 16-cell default.
    shadow_var : float
        Second parameter of the N(0, .) shadowing law.  Read as a
        variance by default; ``shadow_as_std=True`` switches to the
        standard-deviation interpretation for sensitivity checks.
    power_dbm_hz, noise_dbm_hz : float
        Converted once, here, to linear scale; the emitted statistics
        are normalized to noise_var == 1.
    """
    ov = dict(overrides or {})
    cell_side = float(ov.pop("cell_side", CELL_SIDE_M))
    dims = Dimensions(
        num_cells=int(ov.pop("num_cells", 16)),
        users_per_cell=int(ov.pop("users_per_cell", 8)),
        num_antennas=int(ov.pop("num_antennas", 100)),
        pilot_len=int(ov.pop("pilot_len", 8)),
        block_len=int(ov.pop("block_len", 500)))
    if ov:
        raise ConfigError(f"unknown scenario overrides: {sorted(ov)}")

    pos_rng = np.random.default_rng(np.random.SeedSequence((master_seed, 0)))
    shadow_rng = np.random.default_rng(np.random.SeedSequence((master_seed, 1)))
    topo = drop_users(dims.num_cells, dims.users_per_cell, pos_rng, cell_side)

    L, K = dims.num_cells, dims.users_per_cell
    sd = shadow_var if shadow_as_std else math.sqrt(shadow_var)
    shadow = shadow_rng.normal(0.0, sd, size=(L, L, K))
    att = np.empty((L, L, K))
    for j in range(L):
        for l in range(L):
            for k in range(K):
                d = wrap_distance(topo.bs_positions[j], topo.ue_positions[l, k],
                                  topo.world_side)
                att[j, l, k] = pathloss(d, shadow[j, l, k])

    # normalize the noise to 1; only the power-to-noise ratio matters
    power_lin = 10.0 ** ((power_dbm_hz - noise_dbm_hz) / 10.0)
    power = np.full((L, K), power_lin)
    stats = NetworkStats(dims=dims, attenuation=att, power=power, noise_var=1.0)
    book = build_pilot_book(pilot_kind, dims, power)
    return Scenario(stats=stats, book=book, topology=topo,
                    master_seed=master_seed, pilot_kind=pilot_kind)
