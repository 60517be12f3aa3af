"""Reproducible Wiener increments for trajectory ensembles.

Every trajectory owns an independent Philox-counter stream derived from
``(master_seed, *key)`` through :class:`numpy.random.SeedSequence`, so an
ensemble is reproducible shot-by-shot regardless of execution order or the
number of workers, and adding schemes never perturbs existing streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import TimeGrid

# stable scheme codes used in seed keys; append only, never reorder
SCHEME_CODES = {"adaptive": 0, "replay": 1, "heterodyne": 2, "homodyne": 3}


@dataclass(frozen=True)
class NoisePath:
    """Gaussian increments dW, mean 0, variance dt per step."""

    seed: int
    key: tuple
    dW: np.ndarray


def make_generator(master_seed: int, key: tuple = ()) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def trajectory_key(theta_index: int, scheme: str, traj_index: int) -> tuple:
    return (theta_index, SCHEME_CODES[scheme], traj_index)


def noise_path(grid: TimeGrid, master_seed: int, key: tuple = ()) -> NoisePath:
    gen = make_generator(master_seed, key)
    dW = gen.standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    return NoisePath(seed=master_seed, key=tuple(key), dW=dW)


def noise_block(grid: TimeGrid, master_seed: int, keys) -> np.ndarray:
    """Stack per-trajectory noise rows into a (len(keys), n_steps) block.

    Row i depends only on ``(master_seed, keys[i])``, never on the block
    composition, which is what makes chunked ensembles bitwise reproducible.
    """
    out = np.empty((len(keys), grid.n_steps))
    sqdt = np.sqrt(grid.dt)
    for i, key in enumerate(keys):
        out[i] = make_generator(master_seed, key).standard_normal(grid.n_steps)
    out *= sqdt
    return out
