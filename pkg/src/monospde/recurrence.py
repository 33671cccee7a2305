"""Experiment drivers: stability decay, continuous dependence, pull-back
convergence, recurrence in distribution and moment bounds.

Every driver takes an :class:`ExperimentPlan` and is deterministic in
``(plan, seed)``.  Paths share one :class:`~monospde.sde.NoiseLattice`, so
runs that must see the same noise (two initial data, two coefficient sets, two
start times) are coupled pathwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from .blmetric import EmpiricalMeasure, dbl_transport
from .coefficients import DriftSpec, PorousMedia, ReactionDiffusion
from .errors import ConfigurationError, MonoSPDEError
from .hypotheses import _jsonable, reference_constants, probe_dissipation_intercept, probe_monotonicity
from .sde import Companion, IntegratorConfig, NoiseLattice, jackknife_mean, pullback, simulate

KINDS = ("Stability", "ContinuousDependence", "PullbackCauchy", "Periodicity", "Stationarity",
         "AlmostPeriodScan", "SBound", "MomentEnvelope")
DISTRIBUTIONAL = ("Periodicity", "Stationarity", "AlmostPeriodScan")
FLOOR = 1e-12


@dataclass
class ExperimentPlan:
    """Everything an experiment needs.

    Parameters
    ----------
    kind : str
        One of ``KINDS``.
    drift, diff : coefficient specs
    cfg : IntegratorConfig
    n_paths : int
        Ensemble size ``P``; at least 32 for distributional tests.
    t_start, t_end : float
        Time window on the step lattice.
    n_outputs : int
        Number of equally spaced output times when ``output_times`` is not given.
    seed : int
        Master seed of the noise lattice.
    tolerance : float
        Multiplicative slack on theoretical envelopes.
    init : array, optional
        Initial field ``(K,)`` or ensemble ``(P, K)``; defaults to a smooth field
        of H-norm ``init_norm``.
    lam, r, eta, M1 : float, optional
        Constants; taken from the closed-form values or the probes when absent.
    burn_in : float, optional
        Fixed pull-back burn-in; adaptive doubling from ``burn_in_start`` otherwise.
    n_list : sequence of int
        Start offsets for the pull-back experiment.
    perturbation : str
        ``"reaction"`` (``a + 1/n``) or ``"shift"`` (``phi(. + 1/n)``).
    n_sequence : sequence of int
        Perturbation indices for continuous dependence.
    period : float, optional
        Period to test; defaults to the common period of the coefficients.
    d_proj : int, optional
        Number of leading modes kept for distribution distances; defaults to ``min(K, 8)``.
    n_null : int
        Random re-pairings for the null distribution.
    taus : sequence of float
        Shifts for the almost-period scan.
    """

    kind: str
    drift: DriftSpec
    diff: object
    cfg: IntegratorConfig
    n_paths: int = 256
    t_start: float = 0.0
    t_end: float = 1.0
    n_outputs: int = 21
    output_times: tuple | None = None
    seed: int = 0
    path_offset: int = 0
    threads: int = 1
    tolerance: float = 1.3
    init: np.ndarray | None = None
    init_norm: float = 1.0
    lam: float | None = None
    r: float | None = None
    eta: float | None = None
    M1: float | None = None
    burn_in: float | None = None
    burn_in_start: float = 1.0
    burn_in_max: float = 64.0
    burn_in_rtol: float = 1e-4
    n_list: tuple = (0, 1, 2, 3, 4, 5, 6)
    perturbation: str = "reaction"
    n_sequence: tuple = (1, 2, 4, 8, 16, 32, 64)
    period: float | None = None
    require_mismatch: bool | None = None
    n_times: int = 5
    time_spacing: float = 0.5
    d_proj: int | None = None
    n_null: int = 200
    taus: tuple = ()
    h_orders: tuple = (1, 10, 100)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be positive")
        if self.kind in DISTRIBUTIONAL and self.n_paths < 32:
            raise ConfigurationError(f"{self.kind} needs at least 32 paths, got {self.n_paths}")
        dt = self.cfg.dt
        for name in ("t_start", "t_end"):
            v = getattr(self, name)
            if abs(round(v / dt) * dt - v) > 1e-9 * max(1.0, abs(v)):
                raise ConfigurationError(f"{name} = {v} is not a multiple of dt = {dt}")
        if self.kind not in ("PullbackCauchy", "Stationarity", "Periodicity") and not self.t_end > self.t_start:
            raise ConfigurationError("t_end must exceed t_start")
        if self.tolerance < 1.0:
            raise ConfigurationError("tolerance factor must be at least 1")
        if self.perturbation not in ("reaction", "shift"):
            raise ConfigurationError(f"unknown perturbation {self.perturbation!r}")
        if self.d_proj is None:
            self.d_proj = min(self.drift.grid.num_modes, 8)
        if not 1 <= self.d_proj <= self.drift.grid.num_modes:
            raise ConfigurationError("d_proj must lie in [1, K]")
        if self.diff.pivot is not self.drift.pivot:
            raise ConfigurationError("drift and diffusion use different pivot spaces")

    @property
    def grid(self):
        return self.drift.grid

    @property
    def path_ids(self) -> np.ndarray:
        return self.path_offset + np.arange(self.n_paths, dtype=np.int64)

    def noise(self) -> NoiseLattice:
        return NoiseLattice(self.seed, self.cfg.dt, self.diff.num_noise)

    def snap(self, t: float) -> float:
        return round(t / self.cfg.dt) * self.cfg.dt

    def outputs(self) -> np.ndarray:
        if self.output_times is not None:
            return np.array(sorted({self.snap(t) for t in self.output_times}))
        ts = np.linspace(self.t_start, self.t_end, self.n_outputs)
        return np.array(sorted({self.snap(t) for t in ts}))

    def initial(self) -> np.ndarray:
        """Initial data ``(P, K)``."""
        K = self.grid.num_modes
        if self.init is not None:
            z = np.asarray(self.init, dtype=float)
            return np.broadcast_to(z, (self.n_paths, K)).copy()
        scale = self.grid.basis_scale(self.drift.pivot)
        z = scale / np.arange(1, K + 1)
        z *= self.init_norm / np.sqrt(np.sum(z**2 * self.grid.pivot_weights(self.drift.pivot)))
        return np.broadcast_to(z, (self.n_paths, K)).copy()

    def constants(self):
        k = reference_constants(self.drift, self.diff)
        lam = self.lam if self.lam is not None else k.lam
        r = self.r if self.r is not None else k.r
        return lam, r


@dataclass
class DecayFit:
    """Exponential fit ``values ~ exp(intercept - rate * (t - t0))`` and an envelope check."""

    times: np.ndarray
    values: np.ndarray
    rate: float
    intercept: float
    envelope: np.ndarray | None = None
    tolerance: float = 1.3
    violations: int = 0
    worst_ratio: float = 0.0
    n_fit: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        d = {
            "times": self.times,
            "values": self.values,
            "rate": self.rate,
            "intercept": self.intercept,
            "envelope": self.envelope,
            "tolerance": self.tolerance,
            "violations": self.violations,
            "worst_ratio": self.worst_ratio,
            "n_fit": self.n_fit,
            "passed": self.passed,
            "details": self.details,
        }
        return _jsonable(d)


def fit_decay(times, values, envelope=None, tolerance: float = 1.3, floor: float = FLOOR) -> DecayFit:
    """Least-squares log-linear fit on the values above ``floor * values[0]``.

    ``envelope`` (same shape as ``values``) is checked as ``values <= tolerance * envelope``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1 or t.size == 0:
        raise ConfigurationError("times and values must be 1-d arrays of equal length")
    keep = v > floor * v[0] if v[0] > 0 else np.zeros_like(v, dtype=bool)
    if keep.sum() >= 2:
        slope, icpt = np.polyfit(t[keep] - t[0], np.log(v[keep]), 1)
        rate, intercept = float(-slope), float(icpt)
    else:
        rate, intercept = float("nan"), float("nan")
    viol, worst = 0, 0.0
    env = None
    if envelope is not None:
        env = np.asarray(envelope, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(env > 0, v / env, np.where(v > 0, np.inf, 0.0))
        viol = int(np.sum(v > tolerance * env))
        worst = float(np.max(ratio))
    return DecayFit(t, v, rate, intercept, env, tolerance, viol, worst, int(keep.sum()))


def _h_sq(grid, pivot, diffs):
    return np.einsum("...k,k,...k->...", diffs, grid.pivot_weights(pivot), diffs)


# ---------------------------------------------------------------------------
# pull-back proxy
# ---------------------------------------------------------------------------

@dataclass
class BurnIn:
    burn_in: float
    distance: float
    threshold: float
    converged: bool
    state: np.ndarray  # (P, K) proxy at the evaluation time
    history: list


def dissipation_constants(plan: ExperimentPlan, n_samples: int = 4000):
    """``(eta, M1)`` from the plan or the dissipation-intercept probe at ``eta = lam_est / 2``."""
    if plan.eta is not None and plan.M1 is not None:
        return plan.eta, plan.M1
    lam_est = probe_monotonicity(plan.drift, plan.diff, n_samples=n_samples, seed=plan.seed).estimates["lambda_est"]
    eta = plan.eta if plan.eta is not None else lam_est / 2.0
    rep = probe_dissipation_intercept(plan.drift, plan.diff, eta, n_samples=n_samples, seed=plan.seed,
                                      lam_est=lam_est)
    return eta, rep["M1"] if plan.M1 is None else plan.M1


def pullback_proxy(plan: ExperimentPlan, t_eval: float, noise: NoiseLattice | None = None) -> BurnIn:
    """Pull-back approximation of the bounded solution at ``t_eval``.

    The burn-in ``n`` doubles until the solutions started at rest at
    ``t_eval - n`` and ``t_eval - n/2`` differ by less than
    ``burn_in_rtol * M1`` in mean square (or a fixed ``plan.burn_in`` is used).
    """
    noise = noise or plan.noise()
    ids = plan.path_ids
    K = plan.grid.num_modes
    zero = np.zeros((plan.n_paths, K))
    if plan.burn_in is not None:
        n = plan.snap(plan.burn_in)
        tr = simulate(zero, t_eval - n, t_eval, plan.cfg, plan.drift, plan.diff, noise, ids,
                      output_times=[t_eval], threads=plan.threads)
        return BurnIn(n, float("nan"), float("nan"), True, tr.states[-1], [])
    _, M1 = dissipation_constants(plan)
    thr = plan.burn_in_rtol * M1
    n = plan.snap(plan.burn_in_start)
    history = []
    while True:
        half = plan.snap(n / 2)
        tr = simulate(zero, t_eval - n, t_eval, plan.cfg, plan.drift, plan.diff, noise, ids,
                      output_times=[t_eval], companions=[Companion(t_eval - half, zero)], threads=plan.threads)
        D = float(np.mean(_h_sq(plan.grid, plan.drift.pivot, tr.differences[0][-1])))
        history.append((n, D))
        if D <= thr or n * 2 > plan.burn_in_max:
            return BurnIn(n, D, thr, D <= thr, tr.states[-1], history)
        n = plan.snap(2 * n)


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def stability_envelope(tau, initial, lam, r):
    """Theoretical bound on ``E||X - Y||^2`` after time ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if r == 2:
        return initial * np.exp(-lam * tau)
    with np.errstate(divide="ignore"):
        poly = np.where(tau > 0, (lam / 2.0 * (r - 2.0) * tau) ** (-2.0 / (r - 2.0)), np.inf)
    return np.minimum(initial, poly)


def run_stability(plan: ExperimentPlan) -> DecayFit:
    """Distance between the pull-back proxy and a solution from ``plan.init``, same noise."""
    s = plan.t_start
    noise = plan.noise()
    lam, r = plan.constants()
    burn = pullback_proxy(plan, s, noise)
    zeta = plan.initial()
    outs = plan.outputs()
    tr = simulate(np.zeros_like(zeta), s - burn.burn_in, plan.t_end, plan.cfg, plan.drift, plan.diff, noise,
                  plan.path_ids, output_times=list(outs), companions=[Companion(s, zeta)], threads=plan.threads)
    d = _h_sq(plan.grid, plan.drift.pivot, tr.differences[0])  # (T, P)
    vals = d.mean(axis=1)
    se = np.array([jackknife_mean(row)[1] for row in d])
    env = stability_envelope(outs - s, vals[0], lam, r)
    fit = fit_decay(outs, vals, env, plan.tolerance)
    fit.details = {
        "lambda": lam,
        "r": r,
        "envelope_kind": "exponential" if r == 2 else "polynomial",
        "standard_errors": se,
        "burn_in": burn.burn_in,
        "burn_in_distance": burn.distance,
        "burn_in_converged": burn.converged,
        "noise_checksum": tr.noise_checksum,
        "coupled": True,
        "solver": tr.stats,
    }
    return fit


# ---------------------------------------------------------------------------
# continuous dependence
# ---------------------------------------------------------------------------

@dataclass
class DependenceResult:
    n_values: np.ndarray
    distances: np.ndarray  # E max_t ||X_n - X||^2
    standard_errors: np.ndarray
    spearman: float
    slope: float  # d log E_n / d log(1/n)
    strictly_decreasing: bool
    noise_checksum: str

    @property
    def passed(self) -> bool:
        return bool(self.strictly_decreasing and self.spearman < -0.9)

    def to_dict(self):
        return _jsonable({
            "n_values": self.n_values, "distances": self.distances, "standard_errors": self.standard_errors,
            "spearman": self.spearman, "slope": self.slope, "strictly_decreasing": self.strictly_decreasing,
            "noise_checksum": self.noise_checksum, "passed": self.passed,
        })


def perturbed(plan: ExperimentPlan, n: int):
    """Coefficient pair ``(A_n, B)`` of the perturbation sequence."""
    if plan.perturbation == "reaction":
        if not isinstance(plan.drift, ReactionDiffusion):
            raise ConfigurationError("the reaction perturbation needs a reaction-diffusion drift")
        return replace(plan.drift, a=plan.drift.a + 1.0 / n), plan.diff
    return plan.drift.translate(1.0 / n), plan.diff


def run_continuous_dependence(plan: ExperimentPlan) -> DependenceResult:
    """``E max_t ||X_n(t) - X(t)||^2`` along the perturbation sequence, shared noise and data."""
    noise = plan.noise()
    outs = list(plan.outputs())
    zeta = plan.initial()
    run = lambda drift, diff: simulate(zeta, plan.t_start, plan.t_end, plan.cfg, drift, diff, noise,
                                       plan.path_ids, output_times=outs, threads=plan.threads)
    base = run(plan.drift, plan.diff)
    E, SE = [], []
    for n in plan.n_sequence:
        drift_n, diff_n = perturbed(plan, n)
        tr = run(drift_n, diff_n)
        if tr.noise_checksum != base.noise_checksum:
            raise MonoSPDEError("coupled runs consumed different noise")
        sup = _h_sq(plan.grid, plan.drift.pivot, tr.states - base.states).max(axis=0)
        m, se = jackknife_mean(sup)
        E.append(m)
        SE.append(se)
    E = np.array(E)
    ns = np.array(plan.n_sequence, dtype=float)
    rho = float(spearmanr(ns, E)[0]) if len(ns) > 1 and np.ptp(E) > 0 else float("nan")
    pos = E > 0
    slope = float(np.polyfit(np.log(1.0 / ns[pos]), np.log(E[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return DependenceResult(ns, E, np.array(SE), rho, slope, bool(np.all(np.diff(E) < 0)), base.noise_checksum)


# ---------------------------------------------------------------------------
# pull-back Cauchy property
# ---------------------------------------------------------------------------

@dataclass
class PullbackReport:
    offsets: np.ndarray  # m
    distances: np.ndarray  # E||X(t, -n_max, 0) - X(t, -m, 0)||^2
    standard_errors: np.ndarray
    fit: DecayFit
    lam: float
    strictly_decreasing: bool
    noise_checksum: str

    @property
    def slope(self) -> float:
        return -self.fit.rate

    @property
    def passed(self) -> bool:
        return bool(self.strictly_decreasing and self.slope <= -0.7 * self.lam)

    def to_dict(self):
        return _jsonable({
            "offsets": self.offsets, "distances": self.distances, "standard_errors": self.standard_errors,
            "slope": self.slope, "lambda": self.lam, "strictly_decreasing": self.strictly_decreasing,
            "noise_checksum": self.noise_checksum, "passed": self.passed,
        })


def run_pullback_cauchy(plan: ExperimentPlan) -> PullbackReport:
    """Distances to the longest pull-back run for each shorter start offset."""
    lam, _ = plan.constants()
    res = pullback(plan.t_start, plan.n_list, plan.cfg, plan.drift, plan.diff, plan.noise(), plan.path_ids,
                   threads=plan.threads)
    ms = np.array(res.starts[:-1])
    D = np.array([res.to_largest[m][0] for m in res.starts[:-1]])
    se = np.array([res.to_largest[m][1] for m in res.starts[:-1]])
    fit = fit_decay(ms, D, tolerance=plan.tolerance)
    return PullbackReport(ms, D, se, fit, lam, bool(np.all(np.diff(D) < 0)), res.noise_checksum)


# ---------------------------------------------------------------------------
# distributional tests
# ---------------------------------------------------------------------------

def project(plan: ExperimentPlan, coeffs) -> tuple[np.ndarray, float]:
    """Leading ``d_proj`` coordinates in the H-orthonormal basis and the tail second moment."""
    w = plan.grid.pivot_weights(plan.drift.pivot)
    y = np.asarray(coeffs) * np.sqrt(w)
    d = plan.d_proj
    return y[:, :d], float(np.mean(np.sum(y[:, d:] ** 2, axis=1)))


def dbl_samples(x, y) -> float:
    return dbl_transport(EmpiricalMeasure.uniform(x), EmpiricalMeasure.uniform(y))


def null_distribution(pooled, n_left: int, n_null: int, seed: int) -> np.ndarray:
    """d_BL between random splits of the pooled samples."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_null)
    for i in range(n_null):
        perm = rng.permutation(len(pooled))
        out[i] = dbl_samples(pooled[perm[:n_left]], pooled[perm[n_left:]])
    return out


@dataclass
class DistributionReport:
    times: np.ndarray
    distances: dict  # label -> d_BL
    null_percentiles: dict  # "95", "99", "99.5" -> value
    tail_moment: float
    verdict: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict

    def to_dict(self):
        return _jsonable({
            "times": self.times, "distances": self.distances, "null_percentiles": self.null_percentiles,
            "tail_moment": self.tail_moment, "passed": self.verdict, "details": self.details,
        })


def _laws(plan: ExperimentPlan, t0: float, times):
    """Projected samples at each time, started from the pull-back proxy at ``t0``."""
    noise = plan.noise()
    burn = pullback_proxy(plan, t0, noise)
    times = [plan.snap(t) for t in times]
    tr = simulate(burn.state, t0, max(times), plan.cfg, plan.drift, plan.diff, noise, plan.path_ids,
                  output_times=times, threads=plan.threads)
    idx = {t: i for i, t in enumerate(tr.times)}
    proj = [project(plan, tr.states[idx[plan.snap(t)]]) for t in times]
    return [p[0] for p in proj], max(p[1] for p in proj), burn


def _percentiles(null):
    return {q: float(np.percentile(null, float(q))) for q in ("95", "99", "99.5")}


def forcing_period(plan: ExperimentPlan) -> float | None:
    from .coefficients import common_period

    return common_period([plan.drift.phi, *plan.diff.modulations()])


def run_periodicity(plan: ExperimentPlan) -> DistributionReport:
    """Compare the laws at ``t0``, ``t0 + T/2`` and ``t0 + T`` against a resampling null."""
    T = plan.period if plan.period is not None else forcing_period(plan)
    if not T:
        raise ConfigurationError("periodicity test needs periodic coefficients or an explicit period")
    t0 = plan.t_start
    times = [t0, t0 + T / 2, t0 + T]
    (a, b, c), tail, burn = _laws(plan, t0, times)
    match = dbl_samples(a, c)
    mismatch = dbl_samples(a, b)
    null = null_distribution(np.vstack([a, c]), len(a), plan.n_null, plan.seed + 1)
    pct = _percentiles(null)
    asym = plan.require_mismatch
    if asym is None:
        asym = forcing_period(plan) not in (None, 0.0)
    ok = match < pct["95"] and (not asym or mismatch > pct["99"])
    return DistributionReport(
        np.array(times), {"match": match, "mismatch": mismatch}, pct, tail, bool(ok),
        {"period": T, "require_mismatch": bool(asym), "burn_in": burn.burn_in, "n_null": plan.n_null},
    )


def run_stationarity(plan: ExperimentPlan) -> DistributionReport:
    """Pairwise d_BL of the laws on ``n_times`` equally spaced times; all must stay below the null.

    The null threshold is the Bonferroni-adjusted ``1 - 0.05 / n_pairs`` percentile
    of d_BL between random equal splits of all pooled samples.
    """
    t0 = plan.t_start
    times = [t0 + i * plan.time_spacing for i in range(plan.n_times)]
    samples, tail, burn = _laws(plan, t0, times)
    n = len(samples)
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = dbl_samples(samples[i], samples[j])
    pooled = np.vstack(samples)
    rng = np.random.default_rng(plan.seed + 1)
    P = len(samples[0])
    null = np.empty(plan.n_null)
    for i in range(plan.n_null):
        perm = rng.permutation(len(pooled))[: 2 * P]
        null[i] = dbl_samples(pooled[perm[:P]], pooled[perm[P:]])
    n_pairs = n * (n - 1) // 2
    q = 100.0 * (1.0 - 0.05 / n_pairs)
    thr = float(np.percentile(null, q))
    pct = _percentiles(null)
    pct["bonferroni"] = thr
    ok = bool(np.all(mat[np.triu_indices(n, 1)] < thr))
    return DistributionReport(np.array(times), {"matrix": mat}, pct, tail, ok,
                              {"burn_in": burn.burn_in, "n_pairs": n_pairs, "percentile": q})


def translation_error(mods, tau: float, t_grid) -> float:
    """``sup_t max_i |m_i(t + tau) - m_i(t)|`` over a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    return float(max(np.max(np.abs(np.asarray(m(t_grid + tau)) - np.asarray(m(t_grid)))) for m in mods))


def epsilon_scan(mods, taus, t_grid) -> np.ndarray:
    """Translation error of a family of modulations at every shift."""
    t_grid = np.asarray(t_grid, dtype=float)
    taus = np.asarray(taus, dtype=float)
    out = np.zeros(taus.size)
    for m in mods:
        base = np.asarray(m(t_grid))
        for i0 in range(0, taus.size, 256):
            tt = taus[i0:i0 + 256, None] + t_grid[None, :]
            out[i0:i0 + 256] = np.maximum(out[i0:i0 + 256], np.max(np.abs(np.asarray(m(tt)) - base), axis=1))
    return out


@dataclass
class ScanReport:
    taus: np.ndarray
    epsilon: np.ndarray
    distances: np.ndarray
    spearman: float
    details: dict = field(default_factory=dict)
    passed = None  # diagnostic only

    def to_dict(self):
        return _jsonable({"taus": self.taus, "epsilon": self.epsilon, "distances": self.distances,
                          "spearman": self.spearman, "details": self.details})


def run_almost_period_scan(plan: ExperimentPlan, t_grid=None) -> ScanReport:
    """Coefficient translation error and law distance at each shift in ``plan.taus``."""
    if not plan.taus:
        raise ConfigurationError("almost-period scan needs shifts in plan.taus")
    taus = np.array(sorted({plan.snap(t) for t in plan.taus}))
    if taus[0] < 0:
        raise ConfigurationError("shifts must be nonnegative")
    if t_grid is None:
        t_grid = np.linspace(0.0, 200.0, 20001)
    mods = [plan.drift.phi, *plan.diff.modulations()]
    eps = epsilon_scan(mods, taus, t_grid)
    t0 = plan.t_start
    samples, tail, burn = _laws(plan, t0, [t0 + t for t in taus])
    base = samples[0] if taus[0] == 0 else None
    if base is None:
        (base,), _, _ = _laws(plan, t0, [t0])
    dist = np.array([dbl_samples(base, s) for s in samples])
    rho = float(spearmanr(eps, dist)[0]) if taus.size > 2 and np.ptp(eps) > 0 and np.ptp(dist) > 0 else float("nan")
    return ScanReport(taus, eps, dist, rho, {"tail_moment": tail, "burn_in": burn.burn_in})


# ---------------------------------------------------------------------------
# moment bounds
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    times: np.ndarray
    moments: np.ndarray
    bound: np.ndarray
    worst_ratio: float
    violations: int
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return _jsonable({"times": self.times, "moments": self.moments, "bound": self.bound,
                          "worst_ratio": self.worst_ratio, "violations": self.violations,
                          "tolerance": self.tolerance, "passed": self.passed, "details": self.details})


def run_s_bound(plan: ExperimentPlan) -> MomentReport:
    """S-norm second moment from rest against ``M0 / C`` of the (H5) bound."""
    k = reference_constants(plan.drift, plan.diff)
    if not k.C > 0:
        raise ConfigurationError("the (H5) constant C must be positive")
    outs = list(plan.outputs())
    zero = np.zeros((plan.n_paths, plan.grid.num_modes))
    tr = simulate(zero, plan.t_start, plan.t_end, plan.cfg, plan.drift, plan.diff, plan.noise(), plan.path_ids,
                  output_times=outs, threads=plan.threads)
    pivot = plan.drift.pivot
    ws = plan.grid.space_weights("S", pivot)
    mom = np.einsum("tpk,k,tpk->tp", tr.states, ws, tr.states).mean(axis=1)
    hn = {}
    for n in plan.h_orders:
        wn = plan.grid.space_weights("Hn", pivot, n)
        hn[str(n)] = np.einsum("tpk,k,tpk->tp", tr.states, wn, tr.states).mean(axis=1)
    bound = np.full(mom.shape, k.M0_h5 / k.C)
    viol = int(np.sum(mom > plan.tolerance * bound))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, mom / bound, np.where(mom > 0, np.inf, 0.0))
    return MomentReport(np.array(outs), mom, bound, float(np.max(ratio)), viol, plan.tolerance,
                        {"C": k.C, "M0": k.M0_h5, "Hn_moments": hn, "sup_moment": float(mom.max())})


def run_moment_envelope(plan: ExperimentPlan) -> MomentReport:
    """``E||X(t)||^2_H`` from ``plan.init`` against ``exp(-eta (t - s)) E||zeta||^2 + M1``."""
    eta, M1 = dissipation_constants(plan)
    outs = np.array(plan.outputs())
    zeta = plan.initial()
    tr = simulate(zeta, plan.t_start, plan.t_end, plan.cfg, plan.drift, plan.diff, plan.noise(), plan.path_ids,
                  output_times=list(outs), threads=plan.threads)
    mom = _h_sq(plan.grid, plan.drift.pivot, tr.states).mean(axis=1)
    bound = np.exp(-eta * (outs - plan.t_start)) * mom[0] + M1
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, mom / bound, 0.0)
    viol = int(np.sum(mom > plan.tolerance * bound))
    # initial decay rate over the stretch where the transient dominates the intercept
    early = mom > 10.0 * M1
    slope = float("nan")
    if early.sum() >= 2:
        slope = float(np.polyfit(outs[early] - plan.t_start, np.log(mom[early]), 1)[0])
    return MomentReport(outs, mom, bound, float(ratio.max()), viol, plan.tolerance,
                        {"eta": eta, "M1": M1, "initial_slope": slope, "noise_checksum": tr.noise_checksum})


RUNNERS = {
    "Stability": run_stability,
    "ContinuousDependence": run_continuous_dependence,
    "PullbackCauchy": run_pullback_cauchy,
    "Periodicity": run_periodicity,
    "Stationarity": run_stationarity,
    "AlmostPeriodScan": run_almost_period_scan,
    "SBound": run_s_bound,
    "MomentEnvelope": run_moment_envelope,
}


def run_experiment(plan: ExperimentPlan):
    """Dispatch on ``plan.kind``."""
    return RUNNERS[plan.kind](plan)


def report_json(result) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2)
