"""Drift-implicit Euler-Maruyama stepping and path-parallel simulation.

One step of size ``dt`` from ``(t, u)`` solves

    u' - dt * A(t + dt, u') = u + B(t, u) dW

for each path.  Writing ``A(t, u) = (phi - l) u - c d P[g(u)]`` the equation is
handled in the anchored form

    z - dt * [(phi - l) z - c d P[g(a + z) - g(a)]] = r,

which with ``a = 0`` is the step itself and with ``a = x'`` gives the exact
equation for the difference ``x' - y'`` of two coupled paths.  Differences are
thus advanced without ever subtracting two nearly equal states, so distances
far below the rounding level of the states stay representable.

The Newton matrix multiplied by the H weights is symmetric positive definite
whenever ``1 + dt (l - phi) > 0``, which is what makes the solve robust.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ..coefficients import DriftSpec, power_derivative, power_nonlinearity
from ..errors import ConfigurationError, SimulationError, StepError
from ..gelfand import Field
from .noise import NoiseLattice, checksum

CHUNK = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class NewtonBacktracking:
    max_iter: int = 50
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not self.residual_tol > 0 or self.max_iter < 1:
            raise ConfigurationError("Newton solver needs residual_tol > 0 and max_iter >= 1")


@dataclass(frozen=True)
class PicardRelaxation:
    damping: float = 1.0
    max_iter: int = 500
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ConfigurationError(f"Picard damping must lie in (0, 1], got {self.damping}")
        if not self.residual_tol > 0 or self.max_iter < 1:
            raise ConfigurationError("Picard solver needs residual_tol > 0 and max_iter >= 1")


Solver = Union[NewtonBacktracking, PicardRelaxation]
SCHEMES = ("FullyImplicit", "SemiImplicit")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    solver: Solver = field(default_factory=NewtonBacktracking)
    scheme: str = "FullyImplicit"
    max_halvings: int = 4

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")


@dataclass
class SolverStats:
    steps: int = 0
    newton_iterations: int = 0
    picard_iterations: int = 0
    picard_fallbacks: int = 0
    halvings: int = 0

    def merge(self, other: "SolverStats"):
        for k in vars(self):
            setattr(self, k, getattr(self, k) + getattr(other, k))

    def as_dict(self):
        return dict(vars(self))


class StepKernel:
    """Vectorized implicit-step machinery for one drift/diffusion pair."""

    def __init__(self, drift: DriftSpec, diff, solver: Solver, scheme: str = "FullyImplicit"):
        if drift.pivot is not diff.pivot:
            raise ConfigurationError("drift and diffusion use different pivot spaces")
        if drift.grid.num_modes != diff.grid.num_modes:
            raise ConfigurationError("drift and diffusion live on different grids")
        self.drift = drift
        self.diff = diff
        self.solver = solver
        self.scheme = scheme
        grid = drift.grid
        self.W = grid.pivot_weights(drift.pivot)
        self.phys = grid.basis  # (M, K)
        self.h = grid.h
        self.lin = drift.lin
        self.cd = drift.coupling * drift.outer
        self.c = drift.coupling
        self.p = drift.p
        self.stats = SolverStats()

    # -- nonlinear pieces ---------------------------------------------------
    def _q(self, Z, A):
        """Nodal ``g(a + z) - g(a)``; exact for ``a = None``."""
        if A is None:
            return power_nonlinearity(Z, self.p)
        avg = sum(w * power_derivative(A + s * Z, self.p) for s, w in zip(_GL_NODES, _GL_WEIGHTS))
        return Z * avg

    def _lagged(self, Z, A):
        if A is None:
            return np.abs(Z) ** (self.p - 2) if self.p != 2 else np.ones_like(Z)
        return sum(w * power_derivative(A + s * Z, self.p) for s, w in zip(_GL_NODES, _GL_WEIGHTS))

    def _gram(self, nodal_weights):
        """``h Phi^T diag(w) Phi`` for stacked nodal weights ``(n, M)``."""
        return self.h * np.matmul(self.phys.T, self.phys[None] * nodal_weights[:, :, None])

    def residual(self, z, r, phi, A, dt):
        Z = z @ self.phys.T
        F = z * (1.0 + dt * (self.lin - phi)) - r
        if self.c != 0:
            F = F + dt * self.cd * (self.h * self._q(Z, A) @ self.phys)
        return F

    def hnorm(self, v):
        return np.sqrt(np.einsum("...k,k,...k->...", v, self.W, v))

    def _diag(self, phi, dt):
        return self.W * (1.0 + dt * (self.lin - phi))

    # -- solvers --------------------------------------------------------------
    def solve(self, r, phi, dt, A=None, scale=None):
        """Solve the anchored step equation row-wise. Returns ``(z, converged, residual)``."""
        r = np.asarray(r, dtype=float)
        n, K = r.shape
        diag = self._diag(phi, dt)
        if np.any(diag <= 0):
            raise ConfigurationError("time step too large: 1 + dt (l - phi) must stay positive")
        if scale is None:
            scale = 1.0 + self.hnorm(r)
        tol = self.solver.residual_tol * np.broadcast_to(scale, (n,))
        z = r * (self.W / diag)
        if self.c == 0:
            return z, np.ones(n, bool), np.zeros(n)
        F = self.residual(z, r, phi, A, dt)
        res = self.hnorm(F)
        done = res <= tol
        if isinstance(self.solver, NewtonBacktracking):
            z, res, done = self._newton(z, r, phi, A, dt, F, res, tol, done, diag)
        if not done.all():
            if isinstance(self.solver, NewtonBacktracking):
                self.stats.picard_fallbacks += int((~done).sum())
                picard = PicardRelaxation(damping=1.0, max_iter=500, residual_tol=self.solver.residual_tol)
            else:
                picard = self.solver
            z, res, done = self._picard(z, r, phi, A, dt, res, tol, done, diag, picard)
        return z, done, res

    def _newton(self, z, r, phi, A, dt, F, res, tol, done, diag):
        z = z.copy()
        for _ in range(self.solver.max_iter):
            idx = np.flatnonzero(~done)
            if idx.size == 0:
                break
            self.stats.newton_iterations += idx.size
            zi, Fi, ri = z[idx], F[idx], res[idx]
            Ai = None if A is None else A[idx]
            Y = zi @ self.phys.T if Ai is None else Ai + zi @ self.phys.T
            J = self._gram(dt * self.c * power_derivative(Y, self.p))
            J[:, np.arange(J.shape[1]), np.arange(J.shape[1])] += diag
            delta = np.linalg.solve(J, -(self.W * Fi)[..., None])[..., 0]
            alpha = np.ones(idx.size)
            trial_z, trial_F, trial_r = zi.copy(), Fi.copy(), ri.copy()
            pending = np.ones(idx.size, bool)
            for _ls in range(40):
                pi = np.flatnonzero(pending)
                if pi.size == 0:
                    break
                cand = zi[pi] + alpha[pi, None] * delta[pi]
                Fc = self.residual(cand, r[idx[pi]], phi, None if Ai is None else Ai[pi], dt)
                rc = self.hnorm(Fc)
                acc = (rc <= (1.0 - 1e-4 * alpha[pi]) * ri[pi]) | (rc <= tol[idx[pi]])
                good = pi[acc]
                trial_z[good], trial_F[good], trial_r[good] = cand[acc], Fc[acc], rc[acc]
                pending[good] = False
                alpha[pi[~acc]] *= 0.5
            moved = ~pending
            z[idx[moved]], F[idx[moved]], res[idx[moved]] = trial_z[moved], trial_F[moved], trial_r[moved]
            done = res <= tol
            if pending.all():
                break  # no row made progress: leave the rest to Picard
        return z, res, done

    def _picard(self, z, r, phi, A, dt, res, tol, done, diag, picard):
        z = z.copy()
        res = res.copy()
        for _ in range(picard.max_iter):
            idx = np.flatnonzero(~done)
            if idx.size == 0:
                break
            self.stats.picard_iterations += idx.size
            zi = z[idx]
            Ai = None if A is None else A[idx]
            M = self._gram(dt * self.c * self._lagged(zi @ self.phys.T, Ai))
            M[:, np.arange(M.shape[1]), np.arange(M.shape[1])] += diag
            new = np.linalg.solve(M, (self.W * r[idx])[..., None])[..., 0]
            z[idx] = (1 - picard.damping) * zi + picard.damping * new
            res[idx] = self.hnorm(self.residual(z[idx], r[idx], phi, Ai, dt))
            done = res <= tol
        return z, res, done

    # -- one coupled step -----------------------------------------------------
    def semi_implicit(self, r, phi, dt, z_old, A_old=None):
        Z = z_old @ self.phys.T
        nl = self.h * self._q(Z, A_old) @ self.phys if self.c != 0 else 0.0
        return (r - dt * self.cd * nl) / (1.0 + dt * (self.lin - phi))

    def coupled_step(self, x, ws, t, dt, dW):
        """Advance the reference rows ``x`` and companion differences ``ws``.

        Returns ``(x', ws', ok)`` with ``ok`` false for rows whose solve failed.
        """
        diff = self.diff
        t_new = t + dt
        phi = float(self.drift.phi(t_new))
        r = x + diff.increment(t, x, dW)
        if diff.is_additive:
            gain = None
        else:
            gain = np.sum(diff.gain(t) * dW, axis=-1)[:, None]
        if self.scheme == "SemiImplicit":
            xn = self.semi_implicit(r, phi, dt, x)
            ok = np.ones(len(x), bool)
        else:
            xn, ok, _ = self.solve(r, phi, dt, scale=1.0 + self.hnorm(x))
        X_new = xn @ self.phys.T
        X_old = x @ self.phys.T
        out = []
        for w in ws:
            if w is None:
                out.append(None)
                continue
            rw = w if gain is None else w * (1.0 + gain)
            # z = -w' anchored at x' gives g(y') - g(x')
            if self.scheme == "SemiImplicit":
                wn = -self.semi_implicit(-rw, phi, dt, -w, X_old)
                okw = np.ones(len(w), bool)
            else:
                z, okw, _ = self.solve(-rw, phi, dt, A=X_new, scale=self.hnorm(w) + self.hnorm(rw))
                wn = -z
            ok &= okw
            out.append(wn)
        self.stats.steps += 1
        return xn, out, ok


def _as_field_array(init, grid, n_paths):
    if isinstance(init, Field):
        return np.broadcast_to(init.coeffs, (n_paths, grid.num_modes)).copy()
    if hasattr(init, "coeffs") and hasattr(init, "path_ids"):
        arr = np.asarray(init.coeffs, dtype=float)
    else:
        arr = np.asarray(init, dtype=float)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (n_paths, arr.size))
    if arr.shape != (n_paths, grid.num_modes):
        raise ConfigurationError(f"initial data has shape {arr.shape}, expected {(n_paths, grid.num_modes)}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("initial data must be finite")
    return np.array(arr)


def step(u: Field, t: float, cfg: IntegratorConfig, drift: DriftSpec, diff, dW) -> Field:
    """One implicit Euler-Maruyama step of a single field."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (diff.num_noise,):
        raise ConfigurationError(f"dW must have length {diff.num_noise}")
    kernel = StepKernel(drift, diff, cfg.solver, cfg.scheme)
    xn, _, ok = kernel.coupled_step(u.coeffs[None], [], t, cfg.dt, dW[None])
    if not ok[0]:
        r = u.coeffs + diff.increment(t, u.coeffs, dW)
        res = kernel.hnorm(kernel.residual(xn, r[None], float(drift.phi(t + cfg.dt)), None, cfg.dt))[0]
        raise StepError(f"implicit solve did not converge (residual {res:.3e})", residual=float(res), rows=[0])
    return Field(xn[0], u.pivot)


@dataclass(frozen=True)
class Companion:
    """A second path started at ``start`` from ``init`` and tracked through its
    difference from the reference path (reference minus companion)."""

    start: float
    init: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "init", np.asarray(self.init, dtype=float))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, P, K)
    path_ids: np.ndarray
    differences: list  # per companion, (T, P, K), NaN before start
    stats: dict
    noise_checksum: str
    pivot: object = None

    def companion_states(self, i):
        return self.states - self.differences[i]


def _lattice_level(cfg: IntegratorConfig, noise: NoiseLattice) -> int:
    ratio = noise.dt / cfg.dt
    level = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if level < 0 or abs(2**level * cfg.dt - noise.dt) > 1e-12 * noise.dt:
        raise ConfigurationError(
            f"integrator step {cfg.dt} must equal the lattice step {noise.dt} divided by a power of two"
        )
    return level


def _index(t, dt, what):
    k = round(t / dt)
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigurationError(f"{what} {t} is not on the time lattice with step {dt}")
    return int(k)


class _ChunkRunner:
    def __init__(self, kernel_args, cfg, noise, level):
        self.kernel_args = kernel_args
        self.cfg = cfg
        self.noise = noise
        self.level = level

    def __call__(self, paths, x0, comp_starts, comp_inits, i0, i1, out_idx):
        cfg, noise, L = self.cfg, self.noise, self.level
        kernel = StepKernel(*self.kernel_args)
        dt = cfg.dt
        x = x0.copy()
        ws = [None] * len(comp_starts)
        n_out = len(out_idx)
        P, K = x.shape
        states = np.full((n_out, P, K), np.nan)
        diffs = [np.full((n_out, P, K), np.nan) for _ in comp_starts]
        where = {k: j for j, k in enumerate(out_idx)}
        buf, buf_lo = None, None
        digests = []
        sub = 2**L
        for i in range(i0, i1 + 1):
            for c, st in enumerate(comp_starts):
                if st == i:
                    ws[c] = x - comp_inits[c]
            if i in where:
                states[where[i]] = x
                for c, w in enumerate(ws):
                    if w is not None:
                        diffs[c][where[i]] = w
            if i == i1:
                break
            j = i // sub
            if buf is None or not (buf_lo <= i < buf_lo + len(buf)):
                jb = j
                nb = min(noise.block - (jb % noise.block), (i1 - 1) // sub - jb + 1)
                buf = noise.fine_window(paths, jb, nb, L)
                buf_lo = jb * sub
                digests.append(checksum(buf))
            dW = buf[i - buf_lo]
            x, ws = self._advance(kernel, paths, x, ws, i * dt, dt, dW, j, sub + (i - j * sub), cfg.max_halvings)
        return states, diffs, kernel.stats, digests

    def _advance(self, kernel, paths, x, ws, t, dt, dW, j, node, halvings_left):
        xn, wn, ok = kernel.coupled_step(x, ws, t, dt, dW)
        if ok.all():
            return xn, wn
        bad = np.flatnonzero(~ok)
        if halvings_left == 0:
            raise SimulationError(
                f"step at t={t:.6g} failed after {self.cfg.max_halvings} halvings",
                diagnostics={"t": t, "dt": dt, "paths": paths[bad].tolist(), "states": x[bad].tolist()},
            )
        kernel.stats.halvings += 1
        left, right = self.noise.split(dW[bad], paths[bad], j, node)
        sub_ws = [None if w is None else w[bad] for w in ws]
        xm, wm = self._advance(kernel, paths[bad], x[bad], sub_ws, t, dt / 2, left, j, 2 * node, halvings_left - 1)
        xe, we = self._advance(kernel, paths[bad], xm, wm, t + dt / 2, dt / 2, right, j, 2 * node + 1,
                               halvings_left - 1)
        xn[bad] = xe
        for c in range(len(wn)):
            if wn[c] is not None:
                wn[c][bad] = we[c]
        return xn, wn


def simulate(init, s: float, t_end: float, cfg: IntegratorConfig, drift: DriftSpec, diff,
             noise: NoiseLattice, path_ids, output_times=None, companions: Sequence[Companion] = (),
             threads: int = 1) -> Trajectory:
    """Integrate an ensemble of paths from ``s`` to ``t_end``.

    Parameters
    ----------
    init : Field, Ensemble or array of shape ``(P, K)``
        Initial state(s) at time ``s``.
    output_times : sequence of float, optional
        Times (on the step lattice, within ``[s, t_end]``) at which the state is
        recorded; defaults to ``[s, t_end]``.
    companions : sequence of Companion
        Extra paths driven by the same noise, returned as differences.
    threads : int
        Worker threads.  Paths are processed in fixed chunks of 64, so the
        result does not depend on this value.
    """
    path_ids = np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
    if path_ids.size == 0:
        raise ConfigurationError("need at least one path")
    if diff.num_noise != noise.num_noise:
        raise ConfigurationError("noise lattice and diffusion disagree on the number of noise modes")
    level = _lattice_level(cfg, noise)
    i0, i1 = _index(s, cfg.dt, "start time"), _index(t_end, cfg.dt, "end time")
    if i1 < i0:
        raise ConfigurationError("end time precedes start time")
    if output_times is None:
        output_times = [s, t_end]
    out_idx = sorted({_index(t, cfg.dt, "output time") for t in output_times})
    if out_idx and (out_idx[0] < i0 or out_idx[-1] > i1):
        raise ConfigurationError("output times must lie within the simulation window")
    grid = drift.grid
    P = path_ids.size
    x0 = _as_field_array(init, grid, P)
    comp_starts, comp_inits = [], []
    for c in companions:
        k = _index(c.start, cfg.dt, "companion start")
        if not i0 <= k <= i1:
            raise ConfigurationError("companion start must lie within the simulation window")
        comp_starts.append(k)
        comp_inits.append(_as_field_array(c.init, grid, P))

    runner = _ChunkRunner((drift, diff, cfg.solver, cfg.scheme), cfg, noise, level)
    chunks = [slice(a, min(a + CHUNK, P)) for a in range(0, P, CHUNK)]

    def work(sl):
        return runner(path_ids[sl], x0[sl], comp_starts, [ci[sl] for ci in comp_inits], i0, i1, out_idx)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(sl) for sl in chunks]

    states = np.concatenate([r[0] for r in results], axis=1)
    diffs = [np.concatenate([r[1][c] for r in results], axis=1) for c in range(len(companions))]
    stats = SolverStats()
    for r in results:
        stats.merge(r[2])
    digest = checksum(np.frombuffer("".join(d for r in results for d in r[3]).encode(), dtype=np.uint8))
    return Trajectory(
        times=np.array(out_idx, dtype=float) * cfg.dt,
        states=states,
        path_ids=path_ids,
        differences=diffs,
        stats=stats.as_dict(),
        noise_checksum=digest,
        pivot=drift.pivot,
    )
