"""Sampled checks of the structural conditions on a drift/diffusion pair.

Every probe draws ``n_samples`` random configurations, evaluates the slack of
one inequality (right-hand side minus left-hand side), hardens the result by
local coordinate search from the five worst samples, and reports the worst
normalized margin ``slack / (1 + |LHS|)``.  A probe passes when that margin
is at least ``-1e-8``.  Passing means "not violated on the samples tried",
which is what the ``caveat`` field of every report says.

Sampling
--------
Fields are drawn with independent Gaussian coordinates in the H-orthonormal
basis, damped like ``1/k``, and rescaled to an H-norm that is log-uniform on
``[1e-3, 1e3]``.  Times are uniform over one period of the drift modulation
(``[0, 100]`` if it is not periodic).  A fixed set of structured samples is
added: the zero field and single modes ``s * f_k`` with ``s`` in
``{1e-3, 1, 1e3}`` at the times where the drift modulation is largest and
smallest.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .coefficients import DriftSpec, PorousMedia, ReactionDiffusion, power_nonlinearity
from .errors import ConfigurationError, ProbeError
from .gelfand import Pivot, norm_array

VIOLATION_TOL = 1e-8
SCALES = (1e-3, 1.0, 1e3)
CAVEAT = "sampled check: no violation found on the samples and adversarial restarts; not a proof"


@dataclass
class HypothesisConstants:
    c: float | None = None
    lam: float | None = None
    r: float = 2.0
    c1: float | None = None
    c2: float | None = None
    c2p: float | None = None
    M0: float | None = None
    alpha1: float = 2.0
    alpha2: float | None = None
    c3: float | None = None
    c3p: float | None = None
    M0_h4: float | None = None
    L_B: float | None = None
    C: float | None = None
    M0_h5: float | None = None
    eta: float | None = None
    M1: float | None = None
    M4: float | None = None

    def __post_init__(self):
        if self.r < 2:
            raise ConfigurationError(f"r must be >= 2, got {self.r}")
        for name in ("alpha1", "alpha2"):
            v = getattr(self, name)
            if v is not None and not v > 1:
                raise ConfigurationError(f"{name} must exceed 1, got {v}")
        if self.eta is not None and self.lam is not None and not self.eta < self.lam:
            raise ConfigurationError("eta must be smaller than lambda")

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ProbeReport:
    hypothesis: str
    n_samples: int
    worst_margin: float
    estimates: dict
    claimed: dict
    passed: bool
    adversarial: list = field(default_factory=list)
    seed: int = 0
    caveat: str = CAVEAT
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# constants derived in closed form for the two presets
# ---------------------------------------------------------------------------

def reference_constants(drift: DriftSpec, diff) -> HypothesisConstants:
    """Closed-form constants for the reaction-diffusion and porous-media drifts."""
    grid = drift.grid
    C1 = drift.phi.bound()
    bnd = diff.bounds()
    M, M_hat = bnd["M"], bnd["M_hat"]
    L_B = diff.lipschitz()
    if isinstance(drift, ReactionDiffusion):
        lam = 2.0 * (grid.lambda1 - C1) - L_B**2
        mult = L_B > 0
        return HypothesisConstants(
            c=-lam,
            lam=lam,
            r=2.0,
            c1=2.0 * (C1 + 1.0) + (2.0 * L_B**2 if mult else 0.0),
            c2=2.0,
            c2p=2.0 * drift.a,
            M0=2.0 * M if mult else M,
            alpha1=2.0,
            alpha2=drift.p,
            c3=C1 + 1.0,
            c3p=drift.a,
            M0_h4=2.0 * M if mult else M,
            L_B=L_B,
            C=2.0 * (grid.lambda1 - C1) - (2.0 * L_B**2 if mult else 0.0),
            M0_h5=2.0 * M_hat if mult else M_hat,
        )
    if isinstance(drift, PorousMedia):
        p = drift.p
        kappa = grid.lambda1**-0.5 * grid.length ** (0.5 - 1.0 / p)
        lam = 2.0 ** (3.0 - p) * min(1.0, kappa**-p)
        c3 = 1.0 + C1 / (p - 1.0)
        m4 = (p - 2.0) / (p - 1.0) * grid.length ** ((p - 1.0) / p) * C1
        return HypothesisConstants(
            c=0.0,
            lam=lam,
            r=p,
            c1=0.0,
            c2=1.0,
            c2p=1.0,
            M0=M,
            alpha1=p,
            alpha2=p,
            c3=c3,
            c3p=c3,
            M0_h4=m4,
            L_B=L_B,
            C=2.0 * drift.c2,
            M0_h5=M_hat,
        )
    raise ConfigurationError(f"no closed-form constants for {type(drift).__name__}")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def extreme_time(phi, sign: float = 1.0) -> float:
    """A time where ``sign * phi`` is maximal over one period (or ``[0, 100]``)."""
    T = phi.period
    if T == 0.0:
        return 0.0
    span = T if T else 100.0
    ts = np.linspace(0.0, span, 20001)
    vals = sign * np.asarray(phi(ts))
    i = int(np.argmax(vals))
    dt = ts[1] - ts[0]
    res = minimize_scalar(lambda s: -sign * float(phi(s)), bounds=(ts[i] - dt, ts[i] + dt), method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x) if -res.fun >= vals[i] else float(ts[i])


def _time_span(phi) -> float:
    T = phi.period
    return T if T else 100.0


class _Sampler:
    def __init__(self, drift: DriftSpec, seed: int):
        self.drift = drift
        self.grid = drift.grid
        self.pivot = drift.pivot
        self.rng = np.random.default_rng(seed)
        self.scale = self.grid.basis_scale(self.pivot)
        self.k = np.arange(1, self.grid.num_modes + 1)

    def fields(self, n):
        z = self.rng.standard_normal((n, self.grid.num_modes)) / self.k
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        target = 10.0 ** self.rng.uniform(-3.0, 3.0, n)
        return z * target[:, None] * self.scale  # H-norm = target

    def times(self, n):
        return self.rng.uniform(0.0, _time_span(self.drift.phi), n)

    def structured(self):
        """Zero field plus scaled single modes at the extreme times of the drift modulation."""
        K = self.grid.num_modes
        ts = [extreme_time(self.drift.phi, 1.0), extreme_time(self.drift.phi, -1.0)]
        out_t, out_f = [], []
        for t in ts:
            out_t.append(t)
            out_f.append(np.zeros(K))
            for s in SCALES:
                for k in range(K):
                    f = np.zeros(K)
                    f[k] = s * self.scale[k]
                    out_t.append(t)
                    out_f.append(f)
        return np.array(out_t), np.array(out_f)


# ---------------------------------------------------------------------------
# generic probe driver
# ---------------------------------------------------------------------------

Functional = Callable[..., tuple]  # (t, *fields) -> (lhs, rhs)


def _margins(lhs, rhs):
    return (rhs - lhs) / (1.0 + np.abs(lhs))


def _refine(func, t, fields, margins, span, n_worst=5, n_steps=10):
    """Coordinate descent on the margin from the worst samples."""
    order = np.argsort(margins, kind="stable")[:n_worst]
    found = []
    for i in order:
        ti = float(t[i])
        fi = [f[i].copy() for f in fields]
        best = float(margins[i])
        steps = [0.1 * (np.sqrt(np.mean(f**2)) + 1e-12) for f in fi]
        dt = 0.01 * span
        for _ in range(n_steps):
            cand_t, cand_f = [], [[] for _ in fi]
            for j in range(len(fi)):
                for k in range(fi[j].size):
                    for sgn in (1.0, -1.0):
                        new = [f.copy() for f in fi]
                        new[j][k] += sgn * steps[j]
                        cand_t.append(ti)
                        for jj in range(len(fi)):
                            cand_f[jj].append(new[jj])
            for sgn in (1.0, -1.0):
                cand_t.append(ti + sgn * dt)
                for jj in range(len(fi)):
                    cand_f[jj].append(fi[jj])
            ct = np.array(cand_t)
            cf = [np.array(c) for c in cand_f]
            lhs, rhs = func(ct, *cf)
            m = _margins(lhs, rhs)
            m = np.where(np.isnan(m), np.inf, m)
            b = int(np.argmin(m))
            if m[b] < best:
                best = float(m[b])
                ti = float(ct[b])
                fi = [c[b] for c in cf]
            else:
                steps = [s / 2 for s in steps]
                dt /= 2
        found.append({"sample": int(i), "t": ti, "margin": best,
                      "norms": [float(np.sqrt(np.sum(f**2))) for f in fi]})
    found.sort(key=lambda d: d["margin"])
    return found


def _run(name, func, t, fields, seed, claimed, estimates, span, details=None, refine=True):
    lhs, rhs = func(t, *fields)
    m = _margins(lhs, rhs)
    valid = ~np.isnan(m)
    if not valid.any():
        raise ProbeError(f"{name}: every sample was degenerate")
    m = np.where(valid, m, np.inf)
    adv = _refine(func, t, fields, m, span) if refine else []
    worst = min([float(m.min())] + [a["margin"] for a in adv])
    return ProbeReport(
        hypothesis=name,
        n_samples=int(valid.sum()),
        worst_margin=worst,
        estimates=estimates,
        claimed=claimed,
        passed=bool(worst >= -VIOLATION_TOL),
        adversarial=adv,
        seed=int(seed),
        details=details or {},
    )


def _require_positive(rep: ProbeReport, values: dict) -> ProbeReport:
    """The conditions need strictly positive constants; a nonpositive one fails the probe."""
    bad = [k for k, v in values.items() if v is None or not v > 0]
    if bad:
        rep.passed = False
        rep.details["nonpositive_constants"] = bad
    return rep


def _draw(drift, n_samples, seed, n_fields):
    if n_samples < 2:
        raise ConfigurationError("need at least 2 samples")
    smp = _Sampler(drift, seed)
    t = smp.times(n_samples)
    fields = [smp.fields(n_samples) for _ in range(n_fields)]
    st, sf = smp.structured()
    z = np.zeros_like(sf)
    t = np.concatenate([t, st])
    if n_fields == 1:
        fields = [np.vstack([fields[0], sf])]
    else:
        # structured pairs: base point 0, difference a single mode
        fields = [np.vstack([fields[0], z]), np.vstack([fields[1], sf])] + [
            np.vstack([f, z]) for f in fields[2:]
        ]
    return t, fields


# ---------------------------------------------------------------------------
# individual probes
# ---------------------------------------------------------------------------

def _pair(grid, pivot, f, g):
    return np.einsum("...k,k,...k->...", f, grid.pivot_weights(pivot), g)


def probe_monotonicity(drift: DriftSpec, diff, n_samples: int = 10000, seed: int = 0,
                       claimed: HypothesisConstants | None = None, mode: str = "H2'") -> ProbeReport:
    """(H2') or (H2''): ``2<A(u) - A(v), u - v> + ||B(u) - B(v)||^2 <= -lam ||u - v||^r``."""
    grid, pivot = drift.grid, drift.pivot
    if claimed is None:
        claimed = reference_constants(drift, diff)
    if mode not in ("H2'", "H2''"):
        raise ConfigurationError(f"unknown monotonicity mode {mode!r}")
    r = 2.0 if mode == "H2'" else claimed.r
    lam = claimed.lam
    Wh = grid.pivot_weights(pivot)

    def core(t, u, w):
        v = u - w
        dA = drift.evaluate(t, u) - drift.evaluate(t, v)
        lhs = 2.0 * _pair(grid, pivot, dA, w) + diff.hs_sq_difference(t, w, Wh)
        nw = np.sqrt(_pair(grid, pivot, w, w))
        return lhs, nw

    def func(t, u, w):
        lhs, nw = core(t, u, w)
        rhs = -lam * nw**r
        return np.where(nw > 0, lhs, np.nan), rhs

    t, (u, w) = _draw(drift, n_samples, seed, 2)
    lhs, nw = core(t, u, w)
    ok = nw > 0
    if not ok.any():
        raise ProbeError("all monotonicity samples are degenerate (u = v)")
    ratio = lhs[ok] / nw[ok] ** 2
    est = {"lambda_est": float(-ratio.max()), "c_est": float(ratio.max())}
    if mode == "H2''":
        neg = ok & (lhs < 0)
        x, y = np.log(nw[neg]), np.log(-lhs[neg])
        slope = float(np.polyfit(x, y, 1)[0]) if x.size > 2 else float("nan")
        est["r_est"] = slope
        est["lambda_r_est"] = float(np.min(-lhs[ok] / nw[ok] ** r))
    claim = {"lambda": lam, "r": r}
    rep = _run(mode, func, t, [u, w], seed, claim, est, _time_span(drift.phi))
    return _require_positive(rep, {"lambda": lam, "lambda_est": est["lambda_est"]})


def _v_norms(drift, v):
    """``(||v||_{V1}, ||v||_{V2})`` in the active triple."""
    grid = drift.grid
    lp = norm_array(grid, v, "V2_Lp", p=drift.p)
    if isinstance(drift, PorousMedia):
        return lp, lp
    return norm_array(grid, v, "V1_sobolev"), lp


def probe_coercivity(drift: DriftSpec, diff, claimed: HypothesisConstants | None = None,
                     n_samples: int = 10000, seed: int = 0) -> ProbeReport:
    """(H3): ``2<A(v), v> + ||B(v)||^2 <= c1||v||^2 - c2||v||_V1^a1 - c2'||v||_V2^a2 + M0``."""
    grid, pivot = drift.grid, drift.pivot
    k = claimed or reference_constants(drift, diff)
    Wh = grid.pivot_weights(pivot)

    def parts(t, v):
        lhs = 2.0 * _pair(grid, pivot, drift.evaluate(t, v), v) + diff.hs_sq(t, v, Wh)
        n1, n2 = _v_norms(drift, v)
        base = k.c1 * _pair(grid, pivot, v, v) - k.c2 * n1**k.alpha1 - k.c2p * n2**k.alpha2
        return lhs, base

    def func(t, v):
        lhs, base = parts(t, v)
        return lhs, base + k.M0

    t, (v,) = _draw(drift, n_samples, seed, 1)
    lhs, base = parts(t, v)
    tame = np.abs(lhs) < 1e6  # keep rounding noise of huge samples out of the fit
    est = {"M0_fit": float(max(np.max((lhs - base)[tame]), 0.0))}
    claim = {key: getattr(k, key) for key in ("c1", "c2", "c2p", "alpha1", "alpha2", "M0")}
    rep = _run("H3", func, t, [v], seed, claim, est, _time_span(drift.phi))
    return _require_positive(rep, {"c2": k.c2, "c2p": k.c2p})


def dual_norms(drift: DriftSpec, t, v):
    """``(||A1(t, v)||_{V1*}, ||A2(t, v)||_{V2*})`` via Riesz representatives."""
    grid = drift.grid
    p = drift.p
    q = p / (p - 1.0)
    V = grid.physical(v)
    if isinstance(drift, PorousMedia):
        phi = np.asarray(drift.phi(t))[..., None] if np.ndim(t) else drift.phi(t)
        rep = -power_nonlinearity(V, p) + phi * grid.physical(v / grid.eigenvalues)
        return np.zeros(V.shape[:-1]), grid.integrate(np.abs(rep) ** q) ** (1.0 / q)
    a1, _ = drift.parts(t, v)
    n1 = np.sqrt(np.einsum("...k,k,...k->...", a1, 1.0 / (1.0 + grid.eigenvalues), a1))
    n2 = drift.a * grid.integrate(np.abs(power_nonlinearity(V, p)) ** q) ** (1.0 / q)
    return n1, n2


def probe_boundedness(drift: DriftSpec, claimed: HypothesisConstants | None = None, n_samples: int = 10000,
                      seed: int = 0, diff=None) -> ProbeReport:
    """(H4): growth bounds on the dual norms of the two drift parts."""
    if claimed is None:
        if diff is None:
            raise ConfigurationError("pass claimed constants or a diffusion to derive them")
        claimed = reference_constants(drift, diff)
    k = claimed
    M0 = k.M0_h4 if k.M0_h4 is not None else k.M0

    def func(t, v):
        n1, n2 = dual_norms(drift, t, v)
        v1, v2 = _v_norms(drift, v)
        s1 = k.c3 * v1 ** (k.alpha1 - 1.0) + M0 - n1
        s2 = k.c3p * v2 ** (k.alpha2 - 1.0) + M0 - n2
        use1 = s1 / (1 + n1) < s2 / (1 + n2)
        lhs = np.where(use1, n1, n2)
        return lhs, lhs + np.where(use1, s1, s2)

    t, (v,) = _draw(drift, n_samples, seed, 1)
    n1, n2 = dual_norms(drift, t, v)
    v1, v2 = _v_norms(drift, v)
    nz = v1 > 0
    est = {
        "c3_est": float(np.max((n1[nz] - M0) / v1[nz] ** (k.alpha1 - 1.0))),
        "c3p_est": float(np.max((n2[nz] - M0) / v2[nz] ** (k.alpha2 - 1.0))),
    }
    claim = {"c3": k.c3, "c3p": k.c3p, "alpha1": k.alpha1, "alpha2": k.alpha2, "M0": M0}
    return _run("H4", func, t, [v], seed, claim, est, _time_span(drift.phi))


def hemicontinuity_jumps(drift: DriftSpec, t, u, v, w, n_points):
    """Largest jump of ``theta -> <A(t, u + theta v), w>`` on a uniform grid in [-1, 1]."""
    grid, pivot = drift.grid, drift.pivot
    theta = np.linspace(-1.0, 1.0, n_points + 1)
    states = u[:, None, :] + theta[None, :, None] * v[:, None, :]
    tt = np.broadcast_to(np.asarray(t)[:, None], states.shape[:2])
    vals = _pair(grid, pivot, drift.evaluate(tt, states), w[:, None, :])
    return np.max(np.abs(np.diff(vals, axis=1)), axis=1), vals


def probe_hemicontinuity(drift: DriftSpec, n_samples: int = 2000, seed: int = 0, base_points: int = 32,
                         ratio_bound: float = 0.6) -> ProbeReport:
    """(H1): the jump of the pairing map shrinks at first order as the theta-grid refines.

    The grid is halved three times; the per-halving contraction is the
    geometric mean ``(J_3 / J_0)^{1/3}`` of the largest jumps, which must not
    exceed ``ratio_bound``.  Maps with zero jumps (constant in theta) pass.
    """
    t, (u, v, w) = _draw(drift, n_samples, seed, 3)
    w = np.where(np.all(w == 0, axis=1, keepdims=True), v, w)
    J = np.array([hemicontinuity_jumps(drift, t, u, v, w, base_points * 2**level)[0] for level in range(4)])
    scale = np.maximum(np.abs(J[0]), 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(J[0] > 1e-14 * (1.0 + scale), (J[3] / J[0]) ** (1.0 / 3.0), 0.0)
    margins = ratio_bound - rate
    i = np.argsort(margins, kind="stable")[:5]
    adv = [{"sample": int(j), "t": float(t[j]), "margin": float(margins[j]),
            "jumps": J[:, j].tolist()} for j in i]
    worst = float(margins.min())
    return ProbeReport(
        hypothesis="H1",
        n_samples=int(len(t)),
        worst_margin=worst,
        estimates={"max_ratio": float(rate.max()), "median_ratio": float(np.median(rate))},
        claimed={"ratio_bound": ratio_bound},
        passed=bool(worst >= -VIOLATION_TOL),
        adversarial=adv,
        seed=int(seed),
    )


def probe_lipschitz_diffusion(diff, n_samples: int = 10000, seed: int = 0, drift: DriftSpec | None = None,
                              claimed: float | None = None) -> ProbeReport:
    """(HL): ``||B(u) - B(v)|| <= L_B ||u - v||`` and the largest observed ratio."""
    grid, pivot = diff.grid, diff.pivot
    Wh = grid.pivot_weights(pivot)
    L_claim = diff.lipschitz() if claimed is None else claimed
    rng = np.random.default_rng(seed)
    if drift is not None:
        span = _time_span(drift.phi)
        t, (u, w) = _draw(drift, n_samples, seed, 2)
    else:
        span = 100.0
        t = rng.uniform(0.0, span, n_samples)
        k = np.arange(1, grid.num_modes + 1)
        u = rng.standard_normal((n_samples, grid.num_modes)) / k
        w = rng.standard_normal((n_samples, grid.num_modes)) / k

    def func(t, u, w):
        nw = np.sqrt(_pair(grid, pivot, w, w))
        lhs = np.sqrt(diff.hs_sq_difference(t, w, Wh))
        return np.where(nw > 0, lhs, np.nan), L_claim * nw

    lhs, rhs = func(t, u, w)
    nw = np.sqrt(_pair(grid, pivot, w, w))
    ok = nw > 0
    est = {"L_B_est": float(np.max(lhs[ok] / nw[ok])) if ok.any() else 0.0}
    return _run("HL", func, t, [u, w], seed, {"L_B": L_claim}, est, span)


def probe_h5(drift: DriftSpec, diff, n_list=(1, 10, 100), n_samples: int = 10000, seed: int = 0,
             claimed: HypothesisConstants | None = None) -> ProbeReport:
    """(H5): ``2<A(v), T_n v> + ||B(v)||^2_{L2(U,Hn)} <= -C ||v||_n^2 + M0`` for each ``n``."""
    grid, pivot = drift.grid, drift.pivot
    k = claimed or reference_constants(drift, diff)
    reports = {}
    worst_all = np.inf
    adv_all = []
    t, (v,) = _draw(drift, n_samples, seed, 1)
    est = {}
    for n in n_list:
        tau = grid.yosida_symbol(n)
        Wn = grid.space_weights("Hn", pivot, n)

        def func(t, v, tau=tau, Wn=Wn):
            lhs = 2.0 * _pair(grid, pivot, drift.evaluate(t, v), tau * v) + diff.hs_sq(t, v, Wn)
            return lhs, -k.C * np.einsum("...k,k,...k->...", v, Wn, v) + k.M0_h5

        rep = _run(f"H5[n={n}]", func, t, [v], seed, {}, {}, _time_span(drift.phi))
        lhs, _ = func(t, v)
        vn = np.einsum("...k,k,...k->...", v, Wn, v)
        nz = vn > 0
        est[f"C_est[n={n}]"] = float(np.min((k.M0_h5 - lhs[nz]) / vn[nz]))
        worst_all = min(worst_all, rep.worst_margin)
        adv_all += [dict(a, n=n) for a in rep.adversarial]
        reports[str(n)] = rep.worst_margin
    adv_all.sort(key=lambda d: d["margin"])
    rep = ProbeReport(
        hypothesis="H5",
        n_samples=int(len(t)),
        worst_margin=float(worst_all),
        estimates=est,
        claimed={"C": k.C, "M0_h5": k.M0_h5, "n_list": list(n_list)},
        passed=bool(worst_all >= -VIOLATION_TOL),
        adversarial=adv_all[:5],
        seed=int(seed),
        details={"worst_margin_per_n": reports},
    )
    return _require_positive(rep, {"C": k.C})


def dissipation_lhs(drift: DriftSpec, diff, t, v):
    grid, pivot = drift.grid, drift.pivot
    return 2.0 * _pair(grid, pivot, drift.evaluate(t, v), v) + diff.hs_sq(t, v, grid.pivot_weights(pivot))


def probe_dissipation_intercept(drift: DriftSpec, diff, eta: float, n_samples: int = 10000, seed: int = 0,
                                lam_est: float | None = None) -> dict:
    """Intercept ``M_{0,eta} = sup (2<A(v), v> + ||B(v)||^2 + eta ||v||^2)`` and ``M1 = M_{0,eta}/eta``."""
    if lam_est is None:
        lam_est = probe_monotonicity(drift, diff, n_samples=min(n_samples, 2000), seed=seed).estimates["lambda_est"]
    if not 0 < eta < lam_est:
        raise ConfigurationError(f"eta = {eta} must lie in (0, lambda_est = {lam_est})")
    t, (v,) = _draw(drift, n_samples, seed, 1)
    grid, pivot = drift.grid, drift.pivot
    vals = dissipation_lhs(drift, diff, t, v) + eta * _pair(grid, pivot, v, v)
    m0 = float(max(np.max(vals), 0.0))
    return {"eta": float(eta), "M0_eta": m0, "M1": m0 / eta, "lambda_est": float(lam_est), "n_samples": int(len(t))}


def probe_all(drift: DriftSpec, diff, n_samples: int = 10000, seed: int = 0,
              claimed: HypothesisConstants | None = None) -> dict:
    """Run every applicable probe; keys are hypothesis ids."""
    k = claimed or reference_constants(drift, diff)
    out = {"H1": probe_hemicontinuity(drift, n_samples=min(n_samples, 2000), seed=seed)}
    if isinstance(drift, PorousMedia):
        out["H2''"] = probe_monotonicity(drift, diff, n_samples, seed, k, mode="H2''")
    else:
        out["H2'"] = probe_monotonicity(drift, diff, n_samples, seed, k, mode="H2'")
    out["H3"] = probe_coercivity(drift, diff, k, n_samples, seed)
    out["H4"] = probe_boundedness(drift, k, n_samples, seed)
    out["HL"] = probe_lipschitz_diffusion(diff, n_samples, seed, drift=drift, claimed=k.L_B)
    out["H5"] = probe_h5(drift, diff, (1, 10, 100), n_samples, seed, k)
    return out
