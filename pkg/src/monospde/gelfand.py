"""Spectral representation of the Gelfand triples on an interval.

Everything lives in the Dirichlet sine basis ``e_k(x) = sqrt(2/l) sin(k pi x / l)``
of ``L^2(0, l)``.  A field is a vector of coefficients in that basis together
with a tag naming the pivot space ``H`` of the active triple:

* ``Pivot.L2``: ``H = L^2``, ``V1 = H^1_0``, ``V2 = L^p`` (reaction-diffusion);
* ``Pivot.DUAL_SOBOLEV``: ``H = W^{-1,2}``, ``V = L^p`` (porous media).

Nonlinear terms are evaluated by collocation on ``M`` interior nodes of the
uniform grid with trapezoidal weights ``l / (M + 1)``.  With ``M >= 2K`` the
quadrature integrates quartic products of retained modes exactly.

Most routines accept stacked coefficient arrays of shape ``(..., K)`` so that
whole ensembles are processed at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigurationError


class Pivot(str, enum.Enum):
    L2 = "L2"
    DUAL_SOBOLEV = "DualSobolev"


NORM_TAGS = ("H", "H_L2", "H_dual", "V1_sobolev", "V2_Lp", "Vdual", "S", "Hn")


@dataclass(frozen=True)
class SpectralGrid:
    length: float
    num_modes: int
    num_points: int
    eigenvalues: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)  # (M, K): e_k at the nodes

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def h(self) -> float:
        return self.length / (self.num_points + 1)

    def physical(self, coeffs):
        """Nodal values of ``sum_k c_k e_k`` for stacked coefficients."""
        return np.asarray(coeffs, dtype=float) @ self.basis.T

    def spectral(self, values):
        """Quadrature projection of nodal values onto the first K modes."""
        return (np.asarray(values, dtype=float) * self.weights) @ self.basis

    def integrate(self, values):
        return np.asarray(values, dtype=float) @ self.weights

    def pivot_weights(self, pivot: Pivot) -> np.ndarray:
        """Diagonal weights of the H inner product in sine coordinates."""
        if Pivot(pivot) is Pivot.L2:
            return np.ones(self.num_modes)
        return 1.0 / self.eigenvalues

    def basis_scale(self, pivot: Pivot) -> np.ndarray:
        """Sine coordinates of the H-orthonormal basis vectors."""
        return 1.0 / np.sqrt(self.pivot_weights(pivot))

    def yosida_symbol(self, n: float) -> np.ndarray:
        """Spectral multiplier of ``T_n = -Delta (I - Delta/n)^{-1}``."""
        if n < 1:
            raise ConfigurationError(f"Yosida index must be >= 1, got {n}")
        lam = self.eigenvalues
        return n * lam / (n + lam)

    def space_weights(self, space: str, pivot: Pivot = Pivot.L2, n: float | None = None) -> np.ndarray:
        """Diagonal weights ``w`` with ``||u||^2 = sum_k w_k u_k^2`` for Hilbert norms.

        ``S`` and ``Hn`` follow the pivot: ``||u||_n^2 = <u, T_n u>_H`` and
        ``||u||_S`` is its limit, i.e. the gradient seminorm for the L2 pivot
        and the L2 norm for the dual-Sobolev pivot.
        """
        lam = self.eigenvalues
        if space == "H":
            return self.pivot_weights(pivot)
        if space == "H_L2":
            return np.ones_like(lam)
        if space == "H_dual":
            return 1.0 / lam
        if space == "V1_sobolev":
            return 1.0 + lam
        if space == "Vdual":
            return 1.0 / (1.0 + lam)
        if space == "S":
            return self.pivot_weights(pivot) * lam
        if space == "Hn":
            if n is None:
                raise ConfigurationError("Hn norm needs the Yosida index n")
            return self.pivot_weights(pivot) * self.yosida_symbol(n)
        raise ConfigurationError(f"unknown norm tag {space!r}")


def make_grid(length: float, num_modes: int, num_points: int | None = None) -> SpectralGrid:
    """Build the sine-collocation grid on ``(0, length)``.

    ``num_points`` defaults to ``2 * num_modes``, the smallest value accepted.
    """
    if num_points is None:
        num_points = 2 * num_modes
    if not (length > 0) or not np.isfinite(length):
        raise ConfigurationError(f"domain length must be positive, got {length}")
    if int(num_modes) != num_modes or num_modes < 1:
        raise ConfigurationError(f"number of modes must be a positive integer, got {num_modes}")
    if int(num_points) != num_points or num_points < 1:
        raise ConfigurationError(f"number of points must be a positive integer, got {num_points}")
    if num_points < 2 * num_modes:
        raise ConfigurationError(
            f"need at least 2K collocation points to avoid aliasing (K={num_modes}, M={num_points})"
        )
    k = np.arange(1, num_modes + 1)
    nodes = length * np.arange(1, num_points + 1) / (num_points + 1)
    weights = np.full(num_points, length / (num_points + 1))
    basis = np.sqrt(2.0 / length) * np.sin(np.outer(nodes, k) * np.pi / length)
    eig = (k * np.pi / length) ** 2
    for arr in (nodes, weights, basis, eig):
        arr.setflags(write=False)
    return SpectralGrid(float(length), int(num_modes), int(num_points), eig, nodes, weights, basis)


@dataclass(frozen=True)
class Field:
    coeffs: np.ndarray
    pivot: Pivot = Pivot.L2

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ConfigurationError("Field coefficients must be a vector")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("Field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "pivot", Pivot(self.pivot))

    @classmethod
    def zeros(cls, grid: SpectralGrid, pivot=Pivot.L2) -> "Field":
        return cls(np.zeros(grid.num_modes), pivot)

    @classmethod
    def mode(cls, grid: SpectralGrid, k: int, amplitude: float = 1.0, pivot=Pivot.L2) -> "Field":
        """``amplitude * e_k`` (1-based k)."""
        c = np.zeros(grid.num_modes)
        c[k - 1] = amplitude
        return cls(c, pivot)


FieldLike = Union[Field, np.ndarray]


def _coeffs(grid: SpectralGrid, u: FieldLike) -> np.ndarray:
    c = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    if c.shape[-1] != grid.num_modes:
        raise ConfigurationError(
            f"coefficient length {c.shape[-1]} does not match grid with K={grid.num_modes}"
        )
    return c


def to_physical(grid: SpectralGrid, u: FieldLike) -> np.ndarray:
    return grid.physical(_coeffs(grid, u))


def to_spectral(grid: SpectralGrid, values, pivot: Pivot = Pivot.L2) -> Field:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.num_points,):
        raise ConfigurationError(
            f"expected {grid.num_points} nodal values, got shape {values.shape}"
        )
    return Field(grid.spectral(values), pivot)


def lp_norm(grid: SpectralGrid, coeffs, p: float) -> np.ndarray:
    """Quadrature ``L^p`` norm of stacked spectral coefficients."""
    if not p > 1:
        raise ConfigurationError(f"L^p norm needs p > 1, got {p}")
    vals = np.abs(grid.physical(coeffs))
    return grid.integrate(vals**p) ** (1.0 / p)


def norm_array(grid: SpectralGrid, coeffs, space: str, pivot: Pivot = Pivot.L2,
               p: float | None = None, n: float | None = None) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if space == "V2_Lp":
        if p is None:
            raise ConfigurationError("V2_Lp norm needs the exponent p")
        return lp_norm(grid, coeffs, p)
    w = grid.space_weights(space, pivot, n)
    return np.sqrt(np.einsum("...k,k,...k->...", coeffs, w, coeffs))


def norm(grid: SpectralGrid, u: FieldLike, space: str, *, p: float | None = None,
         n: float | None = None, pivot: Pivot | None = None) -> float:
    """Norm of ``u`` in one of the spaces of the triple.

    ``space`` is one of ``H`` (the field's pivot), ``H_L2``, ``H_dual``,
    ``V1_sobolev``, ``V2_Lp`` (with ``p``), ``Vdual``, ``S`` or ``Hn`` (with ``n``).
    """
    c = _coeffs(grid, u)
    if pivot is None:
        pivot = u.pivot if isinstance(u, Field) else Pivot.L2
    out = norm_array(grid, c, space, pivot, p=p, n=n)
    return float(out) if np.ndim(out) == 0 else out


def pairing(grid: SpectralGrid, f: FieldLike, v: FieldLike, pivot: Pivot | None = None):
    """Duality pairing ``V*<f, v>_V`` realised as the H inner product."""
    if isinstance(f, Field) and isinstance(v, Field) and f.pivot is not v.pivot:
        raise ConfigurationError(f"pivot mismatch: {f.pivot.value} vs {v.pivot.value}")
    if pivot is None:
        pivot = next((x.pivot for x in (f, v) if isinstance(x, Field)), Pivot.L2)
    a, b = _coeffs(grid, f), _coeffs(grid, v)
    out = np.einsum("...k,k,...k->...", a, grid.pivot_weights(pivot), b)
    return float(out) if np.ndim(out) == 0 else out
