"""Drift and diffusion coefficients with recurrent time modulation.

Two drifts are supported, both written in sine coordinates as

    A(t, u) = (-l + phi(t)) u - c * d * N(u),     N(u) = P_K[ |u|^{p-2} u ],

where ``P_K`` is the collocation projection onto the retained modes:

* reaction-diffusion ``Delta u - a u|u|^{p-2} + phi(t) u``: ``l = lambda``, ``d = 1``, ``c = a``;
* porous media ``Delta(|u|^{p-2} u) + phi(t) u``: ``l = 0``, ``d = lambda``, ``c = 1``.

Diffusion is either additive, ``B(t) dW = sum_k b_k(t) dW_k f_k``, or linear
multiplicative, ``B(t, v) dW = B0(t) dW + sum_i phi_i(t) <dW, u_i> v``.  Here
``f_k`` is the k-th H-orthonormal basis vector of the active pivot, so the
Hilbert-Schmidt norm into H of the additive part is always ``sum_k b_k^2``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError
from .gelfand import Field, Pivot, SpectralGrid

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Time modulations
# ---------------------------------------------------------------------------

class TimeModulation:
    """Scalar function of time. Subclasses are frozen dataclasses with a ``shift``."""

    shift: float

    def __call__(self, t):
        return self._eval(np.asarray(t, dtype=float) + self.shift)

    def _eval(self, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def translate(self, tau: float) -> "TimeModulation":
        """``phi(.) -> phi(. + tau)``."""
        return dataclasses.replace(self, shift=self.shift + float(tau))

    def bound(self) -> float:
        """An upper bound ``C1`` on ``sup_t |phi(t)|``."""
        raise NotImplementedError  # pragma: no cover

    def sup(self) -> float:
        return self.bound()

    def inf(self) -> float:
        return -self.bound()

    @property
    def period(self) -> float | None:
        return None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = type(self).__name__
        return d


@dataclass(frozen=True)
class Constant(TimeModulation):
    value: float = 0.0
    shift: float = 0.0

    def _eval(self, t):
        return np.full_like(t, self.value, dtype=float) if np.ndim(t) else float(self.value)

    def bound(self):
        return abs(self.value)

    def sup(self):
        return float(self.value)

    def inf(self):
        return float(self.value)

    def translate(self, tau):
        return self

    @property
    def period(self):
        return 0.0


@dataclass(frozen=True)
class Periodic(TimeModulation):
    """``mean + sum_j a_j cos(2 pi j t / T) + b_j sin(2 pi j t / T)``."""

    period_length: float = 1.0
    mean: float = 0.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()
    shift: float = 0.0

    def __post_init__(self):
        if not self.period_length > 0:
            raise ConfigurationError(f"period must be positive, got {self.period_length}")
        object.__setattr__(self, "cos_coeffs", tuple(float(x) for x in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(x) for x in self.sin_coeffs))

    @property
    def period(self):
        return self.period_length

    def _eval(self, t):
        theta = 2 * np.pi * np.mod(t, self.period_length) / self.period_length
        out = self.mean + 0.0 * theta
        for j, a in enumerate(self.cos_coeffs, start=1):
            out = out + a * np.cos(j * theta)
        for j, b in enumerate(self.sin_coeffs, start=1):
            out = out + b * np.sin(j * theta)
        return out

    def bound(self):
        n = max(len(self.cos_coeffs), len(self.sin_coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.cos_coeffs)] = self.cos_coeffs
        b[: len(self.sin_coeffs)] = self.sin_coeffs
        return abs(self.mean) + float(np.sum(np.hypot(a, b)))

    def _extreme(self, sign):
        n = max(len(self.cos_coeffs), len(self.sin_coeffs), 1)
        ts = np.linspace(0.0, self.period_length, 64 * n * 4 + 1)
        vals = sign * self._eval(ts)
        i = int(np.argmax(vals))
        dt = ts[1] - ts[0]
        res = minimize_scalar(lambda s: -sign * self._eval(s), bounds=(ts[i] - dt, ts[i] + dt),
                              method="bounded", options={"xatol": 1e-12})
        return max(vals[i], -res.fun)

    def sup(self):
        return float(self._extreme(1.0))

    def inf(self):
        return float(-self._extreme(-1.0))


@dataclass(frozen=True)
class QuasiPeriodic(TimeModulation):
    """``offset + sum_i A_i cos(omega_i t + psi_i)``."""

    frequencies: tuple = (1.0, SQRT2)
    amplitudes: tuple = (1.0, 1.0)
    phases: tuple = ()
    offset: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        freq = tuple(float(x) for x in self.frequencies)
        amp = tuple(float(x) for x in self.amplitudes)
        ph = tuple(float(x) for x in self.phases) or (0.0,) * len(freq)
        if not (len(freq) == len(amp) == len(ph)) or not freq:
            raise ConfigurationError("frequencies, amplitudes and phases must have equal nonzero length")
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", ph)

    def _eval(self, t):
        out = self.offset + 0.0 * t
        for w, a, ph in zip(self.frequencies, self.amplitudes, self.phases):
            out = out + a * np.cos(w * t + ph)
        return out

    def bound(self):
        return abs(self.offset) + float(np.sum(np.abs(self.amplitudes)))

    def sup(self):
        return self.offset + float(np.sum(np.abs(self.amplitudes)))

    def inf(self):
        return self.offset - float(np.sum(np.abs(self.amplitudes)))


@dataclass(frozen=True)
class AlmostAutomorphic(TimeModulation):
    """``offset + beta * sin(1 / (2 + cos t + cos(sqrt(2) t)))``."""

    beta: float = 1.0
    offset: float = 0.0
    shift: float = 0.0

    def _eval(self, t):
        with np.errstate(divide="ignore"):
            return self.offset + self.beta * np.sin(1.0 / (2.0 + np.cos(t) + np.cos(SQRT2 * t)))

    def bound(self):
        return abs(self.offset) + abs(self.beta)

    def sup(self):
        return self.offset + abs(self.beta)

    def inf(self):
        return self.offset - abs(self.beta)


MODULATION_KINDS = {cls.__name__: cls for cls in (Constant, Periodic, QuasiPeriodic, AlmostAutomorphic)}


def modulation_from_dict(d: dict) -> TimeModulation:
    d = dict(d)
    kind = d.pop("kind", "Constant")
    if kind not in MODULATION_KINDS:
        raise ConfigurationError(f"unknown modulation kind {kind!r}")
    try:
        return MODULATION_KINDS[kind](**d)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {kind}: {exc}") from None


def common_period(mods: Sequence[TimeModulation]) -> float | None:
    """Shared period of a family (0 for all-constant, None if none exists)."""
    periods = {m.period for m in mods if m.period != 0.0}
    if not periods:
        return 0.0
    if None in periods or len(periods) > 1:
        return None
    return periods.pop()


# ---------------------------------------------------------------------------
# Drift
# ---------------------------------------------------------------------------

def power_nonlinearity(u, p):
    """``|u|^{p-2} u`` computed as ``sign(u) |u|^{p-1}``."""
    return np.sign(u) * np.abs(u) ** (p - 1)


def power_derivative(u, p):
    """``(p-1) |u|^{p-2}``; zero at ``u = 0`` when ``p > 2``."""
    if p == 2:
        return np.ones_like(u)
    return (p - 1) * np.abs(u) ** (p - 2)


@dataclass(frozen=True)
class DriftSpec:
    grid: SpectralGrid
    p: float
    phi: TimeModulation

    kind = "abstract"
    pivot = Pivot.L2

    # unified form; set by subclasses
    def _lin(self) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    def _outer(self) -> np.ndarray:
        raise NotImplementedError  # pragma: no cover

    @property
    def coupling(self) -> float:
        raise NotImplementedError  # pragma: no cover

    @property
    def lin(self):
        return self._lin()

    @property
    def outer(self):
        return self._outer()

    def nonlinear(self, coeffs):
        """Projected ``|u|^{p-2} u`` for stacked coefficients."""
        return self.grid.spectral(power_nonlinearity(self.grid.physical(coeffs), self.p))

    def evaluate(self, t, coeffs):
        """``A(t, u)`` in sine coordinates; ``t`` broadcasts against the leading axes."""
        coeffs = np.asarray(coeffs, dtype=float)
        phi = np.asarray(self.phi(t))[..., None] if np.ndim(t) else self.phi(t)
        out = (phi - self.lin) * coeffs
        if self.coupling != 0.0:
            out = out - self.coupling * self.outer * self.nonlinear(coeffs)
        return out

    def parts(self, t, coeffs):
        """Split ``A = A1 + A2`` into the linear and the p-power part."""
        coeffs = np.asarray(coeffs, dtype=float)
        phi = np.asarray(self.phi(t))[..., None] if np.ndim(t) else self.phi(t)
        a1 = (phi - self.lin) * coeffs
        return a1, self.evaluate(t, coeffs) - a1

    def translate(self, tau: float) -> "DriftSpec":
        return dataclasses.replace(self, phi=self.phi.translate(tau))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "p": self.p, "phi": self.phi.to_dict()}
        if hasattr(self, "a"):
            d["a"] = self.a
        return d


@dataclass(frozen=True)
class ReactionDiffusion(DriftSpec):
    a: float = 1.0
    require_stable: bool = False

    kind = "ReactionDiffusion"
    pivot = Pivot.L2

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigurationError(f"reaction coefficient a must be positive, got {self.a}")
        if not self.p >= 2:
            raise ConfigurationError(f"reaction-diffusion needs p >= 2, got {self.p}")
        if self.require_stable and self.stability_margin() <= 0:
            raise ConfigurationError(
                f"stability margin lambda_1 - C1 = {self.stability_margin():.4g} is not positive"
            )

    def _lin(self):
        return self.grid.eigenvalues

    def _outer(self):
        return np.ones(self.grid.num_modes)

    @property
    def coupling(self):
        return self.a

    def stability_margin(self) -> float:
        return self.grid.lambda1 - self.phi.bound()


@dataclass(frozen=True)
class PorousMedia(DriftSpec):
    kind = "PorousMedia"
    pivot = Pivot.DUAL_SOBOLEV

    def __post_init__(self):
        if not self.p > 2:
            raise ConfigurationError(f"porous media needs p > 2, got {self.p}")

    def _lin(self):
        return np.zeros(self.grid.num_modes)

    def _outer(self):
        return self.grid.eigenvalues

    @property
    def coupling(self):
        return 1.0

    @property
    def c2(self) -> float:
        """``C2 = -sup phi``; positive when the modulation is strictly negative."""
        return -self.phi.sup()


def eval_drift(spec: DriftSpec, t: float, u: Field) -> Field:
    """``A(t, u)`` as a field in the spec's pivot (a V* element)."""
    if u.pivot is not spec.pivot:
        raise ConfigurationError(f"{spec.kind} drift needs pivot {spec.pivot.value}")
    if u.coeffs.shape != (spec.grid.num_modes,):
        raise ConfigurationError("field does not match the drift's grid")
    return Field(spec.evaluate(t, u.coeffs), spec.pivot)


# ---------------------------------------------------------------------------
# Diffusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Additive:
    grid: SpectralGrid
    amplitudes: tuple
    pivot: Pivot = Pivot.L2

    kind = "Additive"

    def __post_init__(self):
        amps = tuple(self.amplitudes)
        if not amps or len(amps) > self.grid.num_modes:
            raise ConfigurationError(
                f"need 1 <= K_U <= K noise modes, got {len(amps)} with K={self.grid.num_modes}"
            )
        amps = tuple(a if isinstance(a, TimeModulation) else Constant(float(a)) for a in amps)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "pivot", Pivot(self.pivot))

    @property
    def num_noise(self) -> int:
        return len(self.amplitudes)

    @property
    def is_additive(self) -> bool:
        return True

    def b(self, t) -> np.ndarray:
        """Amplitudes ``b_k(t)``, shape ``(..., K_U)``."""
        return np.stack([np.asarray(m(t), dtype=float) for m in self.amplitudes], axis=-1)

    def column_scale(self) -> np.ndarray:
        return self.grid.basis_scale(self.pivot)[: self.num_noise]

    def increment(self, t, coeffs, dW):
        """``B(t, u) dW`` in sine coordinates for stacked states and increments."""
        dW = np.asarray(dW, dtype=float)
        if dW.shape[-1] != self.num_noise:
            raise ConfigurationError(f"dW must have {self.num_noise} entries, got {dW.shape[-1]}")
        shape = np.broadcast_shapes(np.shape(coeffs)[:-1], dW.shape[:-1]) + (self.grid.num_modes,)
        out = np.zeros(shape)
        out[..., : self.num_noise] = self.b(t) * self.column_scale() * dW
        return out

    def hs_sq(self, t, coeffs, weights) -> np.ndarray:
        """``||B(t, u)||^2_{L2(U, X)}`` where ``||x||_X^2 = sum w_k x_k^2``."""
        lead = np.shape(coeffs)[:-1]
        d2 = (self.b(t) * self.column_scale()) ** 2
        return np.broadcast_to(d2 @ weights[: self.num_noise], lead) + 0.0

    def bounds(self) -> dict:
        """Recorded ``M = sup sum b_k^2`` and ``M_hat = sup sum lambda_k b_k^2`` (upper bounds)."""
        c = np.array([m.bound() for m in self.amplitudes])
        lam = self.grid.eigenvalues[: self.num_noise]
        return {"M": float(np.sum(c**2)), "M_hat": float(np.sum(lam * c**2))}

    def hs_sq_difference(self, t, w, weights):
        """``||B(t, u) - B(t, v)||^2`` for ``w = u - v``; zero for additive noise."""
        return np.zeros(np.shape(w)[:-1])

    def lipschitz(self) -> float:
        return 0.0

    def translate(self, tau):
        return dataclasses.replace(self, amplitudes=tuple(m.translate(tau) for m in self.amplitudes))

    def modulations(self):
        return list(self.amplitudes)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitudes": [m.to_dict() for m in self.amplitudes]}


@dataclass(frozen=True)
class Coupling:
    phi: TimeModulation
    direction: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.direction, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ConfigurationError("coupling direction must be a finite vector")
        v.setflags(write=False)
        object.__setattr__(self, "direction", v)


@dataclass(frozen=True)
class LinearMultiplicative:
    base: Additive
    couplings: tuple

    kind = "LinearMultiplicative"

    def __post_init__(self):
        cps = tuple(self.couplings)
        for c in cps:
            if c.direction.shape != (self.base.num_noise,):
                raise ConfigurationError("coupling directions must live in the K_U-dimensional noise space")
        object.__setattr__(self, "couplings", cps)
        if self.base.pivot is not Pivot.L2:
            raise ConfigurationError("multiplicative noise is supported for the L2 pivot only")

    @property
    def grid(self):
        return self.base.grid

    @property
    def pivot(self):
        return self.base.pivot

    @property
    def num_noise(self):
        return self.base.num_noise

    @property
    def is_additive(self) -> bool:
        return not self.couplings

    def gain(self, t) -> np.ndarray:
        """``c(t) = sum_i phi_i(t) u_i``, shape ``(..., K_U)``."""
        out = 0.0
        for cp in self.couplings:
            out = out + np.asarray(cp.phi(t))[..., None] * cp.direction
        return np.broadcast_to(out, np.shape(t) + (self.num_noise,)) + 0.0

    def increment(self, t, coeffs, dW):
        coeffs = np.asarray(coeffs, dtype=float)
        dW = np.asarray(dW, dtype=float)
        out = self.base.increment(t, coeffs, dW)
        if self.couplings:
            s = np.sum(self.gain(t) * dW, axis=-1)
            out = out + np.asarray(s)[..., None] * coeffs
        return out

    def hs_sq(self, t, coeffs, weights):
        coeffs = np.asarray(coeffs, dtype=float)
        D = self.base.b(t) * self.base.column_scale()
        c = self.gain(t)
        n = self.num_noise
        w = weights[:n]
        vn2 = np.einsum("...k,k,...k->...", coeffs, weights, coeffs)
        return (D**2) @ w + 2 * np.sum(c * D * w * coeffs[..., :n], axis=-1) + np.sum(c**2, axis=-1) * vn2

    def hs_sq_difference(self, t, w, weights):
        w = np.asarray(w, dtype=float)
        return np.sum(self.gain(t) ** 2, axis=-1) * np.einsum("...k,k,...k->...", w, weights, w)

    def bounds(self):
        return self.base.bounds()

    def lipschitz(self) -> float:
        """``L_B = sum_i C_{1,i} ||u_i||``."""
        return float(sum(cp.phi.bound() * np.linalg.norm(cp.direction) for cp in self.couplings))

    def margin(self, drift: ReactionDiffusion) -> float:
        n = len(self.couplings)
        s = sum(cp.phi.bound() ** 2 * float(cp.direction @ cp.direction) for cp in self.couplings)
        return drift.grid.lambda1 - drift.phi.bound() - 0.5 * (n + 1) * s

    def translate(self, tau):
        cps = tuple(Coupling(cp.phi.translate(tau), cp.direction) for cp in self.couplings)
        return LinearMultiplicative(self.base.translate(tau), cps)

    def modulations(self):
        return self.base.modulations() + [cp.phi for cp in self.couplings]

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.to_dict(),
            "couplings": [{"phi": cp.phi.to_dict(), "direction": cp.direction.tolist()} for cp in self.couplings],
        }


DiffusionSpec = Union[Additive, LinearMultiplicative]


def eval_diffusion_increment(spec, t: float, u: Field, dW) -> Field:
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (spec.num_noise,):
        raise ConfigurationError(f"dW must have length {spec.num_noise}, got {dW.shape}")
    if not np.all(np.isfinite(dW)):
        raise ConfigurationError("dW must be finite")
    return Field(spec.increment(t, u.coeffs, dW), u.pivot)


def hs_norm_sq(spec, t: float, u: Field, target: str = "H", n: float | None = None) -> float:
    """Squared Hilbert-Schmidt norm of ``B(t, u)`` into ``H``, ``S`` or ``Hn``."""
    if target not in ("H", "S", "Hn"):
        raise ConfigurationError(f"unknown Hilbert-Schmidt target {target!r}")
    w = spec.grid.space_weights(target, spec.pivot, n)
    return float(spec.hs_sq(t, u.coeffs, w))


def translate(spec, tau: float):
    """Shift every time modulation of a drift or diffusion spec by ``tau``."""
    return spec.translate(tau)
