"""Ensembles of paths, moment estimates and the pull-back construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..gelfand import Pivot, SpectralGrid, norm_array
from .integrator import Companion, IntegratorConfig, simulate
from .noise import NoiseLattice


@dataclass(frozen=True)
class Ensemble:
    """States of ``P`` paths at a common time."""

    grid: SpectralGrid
    time: float
    path_ids: np.ndarray
    coeffs: np.ndarray = field(repr=False)  # (P, K)
    pivot: Pivot = Pivot.L2

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        ids = np.asarray(self.path_ids, dtype=np.int64)
        if c.ndim != 2 or c.shape[1] != self.grid.num_modes:
            raise ConfigurationError(f"ensemble coefficients must have shape (P, {self.grid.num_modes})")
        if ids.shape != (c.shape[0],):
            raise ConfigurationError("one path id per ensemble member is required")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "path_ids", ids)
        object.__setattr__(self, "pivot", Pivot(self.pivot))

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def norms_sq(self, space: str = "H", p=None, n=None) -> np.ndarray:
        return norm_array(self.grid, self.coeffs, space, self.pivot, p=p, n=n) ** 2


def jackknife_mean(values) -> tuple[float, float]:
    """Sample mean with its delete-one jackknife standard error."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ConfigurationError("cannot average an empty sample")
    mean = float(x.mean())
    if n < 2:
        return mean, float("nan")
    loo = (x.sum() - x) / (n - 1)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return mean, float(se)


def second_moment(e: Ensemble, space: str = "H", p=None, n=None) -> tuple[float, float]:
    """``E ||X||^2`` in ``space`` with a jackknife standard error."""
    if e.size == 0:
        raise ConfigurationError("empty ensemble")
    return jackknife_mean(e.norms_sq(space, p=p, n=n))


@dataclass
class PullbackResult:
    t_eval: float
    starts: list  # sorted start offsets n
    ensembles: dict  # n -> Ensemble at t_eval
    distances: dict  # (n, m) -> (estimate, standard error) of E||X_n - X_m||^2
    to_largest: dict  # m -> (estimate, se) of E||X_{n_max} - X_m||^2
    stats: dict
    noise_checksum: str

    @property
    def proxy(self) -> Ensemble:
        return self.ensembles[self.starts[-1]]


def pullback(t_eval: float, n_list, cfg: IntegratorConfig, drift, diff, noise: NoiseLattice, path_ids,
             threads: int = 1) -> PullbackResult:
    """Solutions started at rest at ``t_eval - n`` for each ``n`` and evaluated at ``t_eval``.

    All runs share one noise lattice; the largest start offset is the reference
    path and every other start is carried as a difference-coupled companion.
    """
    starts = sorted({float(n) for n in n_list})
    if not starts or starts[0] < 0:
        raise ConfigurationError("start offsets must be nonnegative")
    path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
    K = drift.grid.num_modes
    P = path_ids.size
    zero = np.zeros((P, K))
    n_max = starts[-1]
    comps = [Companion(t_eval - n, zero) for n in starts[:-1]]
    traj = simulate(zero, t_eval - n_max, t_eval, cfg, drift, diff, noise, path_ids,
                    output_times=[t_eval], companions=comps, threads=threads)
    x = traj.states[-1]
    diffs = {n: traj.differences[i][-1] for i, n in enumerate(starts[:-1])}
    diffs[n_max] = np.zeros_like(x)

    def h_sq(v):
        return norm_array(drift.grid, v, "H", drift.pivot) ** 2

    ensembles = {n: Ensemble(drift.grid, t_eval, path_ids, x - diffs[n], drift.pivot) for n in starts}
    distances = {}
    for a, b in zip(starts[1:], starts[:-1]):
        distances[(a, b)] = jackknife_mean(h_sq(diffs[b] - diffs[a]))
    to_largest = {n: jackknife_mean(h_sq(diffs[n])) for n in starts}
    return PullbackResult(t_eval, starts, ensembles, distances, to_largest, traj.stats, traj.noise_checksum)
