"""Bounded-Lipschitz (Dudley) distance between finite empirical measures.

``d_BL(mu, nu) = sup { int f d(mu - nu) : Lip(f) + sup|f| <= 1 }``.

Three exact routes are provided:

* :func:`dbl_exact` solves one linear program in the potentials ``f`` and the
  Lipschitz budget ``s``: maximize ``a . f`` subject to
  ``f_i - f_j <= s d_ij`` and ``|f_i| <= 1 - s``.  The returned certificate is
  re-checked independently of the solver.
* :func:`dbl_transport` uses that, for a fixed split ``s``, the inner problem is
  a Kantorovich-Rubinstein dual for the truncated metric
  ``min(s d, 2 (1 - s))``.  The transport value is concave in ``s``, so a
  bounded scalar search finds the maximum.  For equal-size uniform measures the
  transport problem is an assignment problem, which makes this route fast
  enough for resampling nulls.
* :func:`wasserstein1` is the plain transport cost, an upper bound.

:func:`dbl_lower_bound` restricts the supremum to clamped linear ramps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog, minimize_scalar
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, NumericalError, SizeGuardError

MAX_ATOMS = 2000
CERT_TOL = 1e-9
METRICS = ("Euclidean", "WeightedH")


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray = field(repr=False)  # (n, d)
    weights: np.ndarray = field(repr=False)  # (n,)

    def __post_init__(self):
        x = np.array(self.atoms, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        w = np.array(self.weights, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] < 1:
            raise ConfigurationError("atoms must be a nonempty (n, d) array with d >= 1")
        if w.shape != (x.shape[0],):
            raise ConfigurationError("one weight per atom is required")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(w)):
            raise ConfigurationError("atoms and weights must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) >= 1e-12:
            raise ConfigurationError(f"weights must be nonnegative and sum to 1 (sum = {w.sum()!r})")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        x = np.asarray(points, dtype=float)
        n = x.shape[0]
        return cls(x, np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, points, weights) -> "EmpiricalMeasure":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not w.sum() > 0:
            raise ConfigurationError("weights must be nonnegative with positive total")
        return cls(points, w / w.sum())

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.atoms.shape[0]


@dataclass
class DblResult:
    value: float
    certificate: np.ndarray  # potentials f at the merged atoms
    lipschitz_budget: float  # s; sup-norm budget is 1 - s
    atoms: np.ndarray
    signed_weights: np.ndarray
    optimal: bool
    method: str = "lp"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "lipschitz_budget": self.lipschitz_budget,
            "optimal": self.optimal,
            "method": self.method,
            "atoms": self.atoms.tolist(),
            "signed_weights": self.signed_weights.tolist(),
            "certificate": self.certificate.tolist(),
        }


def _scale(metric: str, weights, dim: int):
    if metric == "Euclidean":
        return np.ones(dim)
    if metric == "WeightedH":
        if weights is None:
            raise ConfigurationError("WeightedH metric needs per-coordinate weights")
        w = np.asarray(weights, dtype=float)
        if w.shape != (dim,) or np.any(w <= 0):
            raise ConfigurationError(f"need {dim} positive coordinate weights")
        return np.sqrt(w)
    raise ConfigurationError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _check_dims(mu, nu):
    if mu.dim != nu.dim:
        raise ConfigurationError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def pooled_support(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric="Euclidean", weights=None):
    """Canonically sorted pooled atoms (in metric-scaled coordinates) and signed weights.

    Coincident atoms are merged and their signed weights summed.
    """
    _check_dims(mu, nu)
    sc = _scale(metric, weights, mu.dim)
    x = np.vstack([mu.atoms, nu.atoms])
    a = np.concatenate([mu.weights, -nu.weights])
    uniq, inv = np.unique(x, axis=0, return_inverse=True)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inv.ravel(), a)
    return uniq, uniq * sc, merged


def _identical(mu, nu) -> bool:
    if len(mu) != len(nu):
        return False
    i, j = np.lexsort(mu.atoms.T[::-1]), np.lexsort(nu.atoms.T[::-1])
    return np.array_equal(mu.atoms[i], nu.atoms[j]) and np.array_equal(mu.weights[i], nu.weights[j])


def verify_certificate(f, s, dist, a, value, tol=CERT_TOL):
    """Check ``Lip(f) <= s``, ``|f| <= 1 - s`` and ``a . f = value``; return the worst excess."""
    f = np.asarray(f, dtype=float)
    lip = np.max(f[:, None] - f[None, :] - s * dist) if f.size > 1 else 0.0
    sup = np.max(np.abs(f)) - (1.0 - s)
    gap = abs(float(a @ f) - value)
    worst = max(lip, sup, gap, -s, s - 1.0)
    if worst > tol:
        raise NumericalError(f"d_BL certificate check failed (excess {worst:.3e})")
    return worst


def dbl_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric: str = "Euclidean", weights=None) -> DblResult:
    """Exact d_BL by a single linear program in ``(f, s)`` (HiGHS)."""
    raw, x, a = pooled_support(mu, nu, metric, weights)
    n = len(a)
    if n > MAX_ATOMS:
        raise SizeGuardError(
            f"{n} pooled atoms exceed the exact-solver guard of {MAX_ATOMS}; use the lower-bound mode"
        )
    if _identical(mu, nu) or np.all(np.abs(a) < 1e-15):
        return DblResult(0.0, np.zeros(n), 0.0, raw, a, True)
    if n == 1:
        return DblResult(0.0, np.zeros(1), 0.0, raw, a, True)
    d = cdist(x, x)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    m = ii.size
    rows = np.arange(m)
    # f_i - f_j - s d_ij <= 0
    A_lip = sparse.coo_matrix(
        (np.concatenate([np.ones(m), -np.ones(m), -d[ii, jj]]),
         (np.concatenate([rows, rows, rows]), np.concatenate([ii, jj, np.full(m, n)]))),
        shape=(m, n + 1),
    )
    eye = sparse.identity(n, format="coo")
    ones = sparse.coo_matrix(np.ones((n, 1)))
    A_box = sparse.vstack([sparse.hstack([eye, ones]), sparse.hstack([-eye, ones])])
    A = sparse.vstack([A_lip, A_box]).tocsr()
    b = np.concatenate([np.zeros(m), np.ones(2 * n)])
    c = np.concatenate([-a, [0.0]])
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise NumericalError(f"d_BL linear program failed: {res.message}")
    f, s = res.x[:n], float(res.x[n])
    # clip solver round-off into the feasible set before checking
    s = min(max(s, 0.0), 1.0)
    f = np.clip(f, -(1.0 - s), 1.0 - s)
    value = float(a @ f)
    verify_certificate(f, s, d, a, value)
    return DblResult(max(value, 0.0), f, s, raw, a, True, "lp")


def _transport(cost, p, q):
    """Optimal transport cost between weight vectors ``p`` and ``q``."""
    n, m = cost.shape
    if n == m and np.allclose(p, 1.0 / n, rtol=0, atol=1e-15) and np.allclose(q, 1.0 / m, rtol=0, atol=1e-15):
        r, c = linear_sum_assignment(cost)
        return float(cost[r, c].sum() / n)
    A_eq = sparse.vstack([
        sparse.kron(sparse.identity(n), np.ones((1, m))),
        sparse.kron(np.ones((1, n)), sparse.identity(m)),
    ]).tocsr()
    res = linprog(cost.ravel(), A_eq=A_eq[:-1], b_eq=np.concatenate([p, q])[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericalError(f"transport linear program failed: {res.message}")
    return float(res.fun)


def _cross(mu, nu, metric, weights):
    _check_dims(mu, nu)
    if len(mu) + len(nu) > MAX_ATOMS:
        raise SizeGuardError(f"{len(mu) + len(nu)} atoms exceed the guard of {MAX_ATOMS}")
    sc = _scale(metric, weights, mu.dim)
    return cdist(mu.atoms * sc, nu.atoms * sc)


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric: str = "Euclidean", weights=None) -> float:
    d = _cross(mu, nu, metric, weights)
    return max(_transport(d, mu.weights, nu.weights), 0.0)


def dbl_transport(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric: str = "Euclidean", weights=None,
                  xatol: float = 1e-9) -> float:
    """Exact d_BL as ``max_s W(mu, nu; min(s d, 2 (1 - s)))``."""
    if _identical(mu, nu):
        return 0.0
    d = _cross(mu, nu, metric, weights)

    def neg(s):
        return -_transport(np.minimum(s * d, 2.0 * (1.0 - s)), mu.weights, nu.weights)

    res = minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": xatol})
    return max(-res.fun, 0.0)


def dbl_lower_bound(mu: EmpiricalMeasure, nu: EmpiricalMeasure, dictionary_size: int = 1000, seed: int = 0,
                    metric: str = "Euclidean", weights=None) -> float:
    """Largest ``int f d(mu - nu)`` over a dictionary of clamped ramps.

    Each ramp is ``clamp(s (<x, theta> - b), -(1 - s), 1 - s)`` with a unit
    direction ``theta`` (half taken from differences of atom pairs, half
    Gaussian), an offset ``b`` at the projection of an atom-pair midpoint, and a
    uniform budget split ``s``.  Every ramp has BL norm at most one, so the
    result never exceeds the exact distance.
    """
    if dictionary_size < 1:
        raise ConfigurationError("dictionary_size must be positive")
    _, x, a = pooled_support(mu, nu, metric, weights)
    if np.all(np.abs(a) < 1e-15):
        return 0.0
    rng = np.random.default_rng(seed)
    n, dim = x.shape
    D = dictionary_size
    i = rng.integers(0, n, D)
    j = rng.integers(0, n, D)
    theta = x[i] - x[j]
    gauss = rng.standard_normal((D, dim))
    use_pair = (np.arange(D) % 2 == 0) & (np.linalg.norm(theta, axis=1) > 0)
    theta = np.where(use_pair[:, None], theta, gauss)
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    mid = 0.5 * (x[i] + x[j])
    b = np.einsum("dk,dk->d", mid, theta)
    s = rng.uniform(0.0, 1.0, D)
    z = theta @ x.T  # (D, n)
    cap = (1.0 - s)[:, None]
    f = np.clip(s[:, None] * (z - b[:, None]), -cap, cap)
    return float(max(np.max(np.abs(f @ a)), 0.0))


def load_measure(path) -> EmpiricalMeasure:
    """Read a CSV file with rows ``weight, x_1, ..., x_d``; weights are normalized."""
    rows = []
    with open(Path(path), newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise ConfigurationError(f"non-numeric row in {path}: {rec}") from None
                continue  # header
    if not rows or len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise ConfigurationError(f"{path}: need rows 'weight, coordinates...' of equal length")
    arr = np.array(rows)
    return EmpiricalMeasure.normalized(arr[:, 1:], arr[:, 0])
