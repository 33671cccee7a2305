import json

import numpy as np
import pytest

from monospde import (
    Additive,
    ConfigurationError,
    Constant,
    Coupling,
    LinearMultiplicative,
    Periodic,
    PorousMedia,
    ReactionDiffusion,
    HypothesisConstants,
    reference_constants,
    probe_all,
    probe_boundedness,
    probe_coercivity,
    probe_dissipation_intercept,
    probe_h5,
    probe_hemicontinuity,
    probe_lipschitz_diffusion,
    probe_monotonicity,
)
from monospde.hypotheses import SCALES, dual_norms, hemicontinuity_jumps

from conftest import noise_amplitudes

PI2 = np.pi**2


def test_constants_validation():
    with pytest.raises(ConfigurationError):
        HypothesisConstants(r=1.5)
    with pytest.raises(ConfigurationError):
        HypothesisConstants(alpha1=1.0)
    with pytest.raises(ConfigurationError):
        HypothesisConstants(lam=1.0, eta=1.0)


def test_reference_constants(rd, rd_noise, pm, pm_noise):
    k = reference_constants(rd, rd_noise)
    assert k.lam == pytest.approx(2 * (PI2 - 1))
    assert (k.c1, k.c2, k.c2p, k.alpha1, k.alpha2) == (4.0, 2.0, 2.0, 2.0, 4.0)
    assert k.c3 == 2.0 and k.C == pytest.approx(2 * (PI2 - 1))
    kp = reference_constants(pm, pm_noise)
    assert kp.r == 4.0 and kp.lam == pytest.approx(0.5)
    assert kp.alpha1 == kp.alpha2 == 4.0 and kp.C == pytest.approx(2.0)


def test_scale_coverage():
    assert {1e-3, 1.0, 1e3} <= set(SCALES)


# ---------------------------------------------------------------------------
# monotonicity
# ---------------------------------------------------------------------------

def test_reaction_diffusion_h2prime(rd, rd_noise):
    rep = probe_monotonicity(rd, rd_noise, 10000, seed=1)
    assert rep.passed and rep.worst_margin >= -1e-8
    assert rep.estimates["lambda_est"] >= 2 * (PI2 - 1) - 1e-9
    assert rep.caveat and len(rep.adversarial) == 5


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_linear_drift_gap_is_exact(grid32, a):
    d = ReactionDiffusion(grid32, 2.0, Periodic(1.0, 0.0, (), (1.0,)), a=a)
    rep = probe_monotonicity(d, Additive(grid32, noise_amplitudes()), 2000, seed=3)
    assert rep.estimates["lambda_est"] == pytest.approx(2 * (PI2 - 1 + a), abs=1e-9)


def test_porous_media_h2doubleprime(pm, pm_noise):
    rep = probe_monotonicity(pm, pm_noise, 10000, seed=2, mode="H2''")
    assert rep.passed
    assert rep.claimed["r"] == 4.0 and rep.claimed["lambda"] == pytest.approx(0.5)
    assert rep.estimates["lambda_r_est"] >= 0.5 - 1e-9
    assert np.isfinite(rep.estimates["r_est"])


def test_violated_claim_fails(rd, rd_noise):
    k = reference_constants(rd, rd_noise)
    k.lam = 3 * k.lam
    assert not probe_monotonicity(rd, rd_noise, 1000, seed=0, claimed=k).passed


def test_unstable_claim_fails(grid32):
    d = ReactionDiffusion(grid32, 4.0, Constant(12.0))
    rep = probe_monotonicity(d, Additive(grid32, noise_amplitudes()), 500)
    assert not rep.passed
    assert "lambda" in rep.details["nonpositive_constants"]


def test_unknown_monotonicity_mode(rd, rd_noise):
    with pytest.raises(ConfigurationError):
        probe_monotonicity(rd, rd_noise, 10, mode="H2")


def test_reports_are_deterministic(rd, rd_noise):
    a = probe_monotonicity(rd, rd_noise, 500, seed=9).to_json()
    b = probe_monotonicity(rd, rd_noise, 500, seed=9).to_json()
    assert a == b
    parsed = json.loads(a)
    assert parsed["hypothesis"] == "H2'" and parsed["seed"] == 9
    assert probe_monotonicity(rd, rd_noise, 500, seed=10).to_json() != a


# ---------------------------------------------------------------------------
# coercivity, boundedness, H5
# ---------------------------------------------------------------------------

def test_coercivity(rd, rd_noise, pm, pm_noise):
    for drift, diff in ((rd, rd_noise), (pm, pm_noise)):
        rep = probe_coercivity(drift, diff, n_samples=10000, seed=4)
        assert rep.passed, rep.worst_margin


def test_coercivity_at_zero(rd, rd_noise):
    k = reference_constants(rd, rd_noise)
    ts = np.linspace(0, 1, 101)
    hs = rd_noise.hs_sq(ts, np.zeros((101, 32)), rd.grid.pivot_weights(rd.pivot))
    assert np.all((k.M0 - hs) / (1 + hs) >= -1e-8)


def test_coercivity_fit_when_claim_fails(rd, rd_noise):
    k = reference_constants(rd, rd_noise)
    k.M0 = 0.0
    rep = probe_coercivity(rd, rd_noise, k, 2000, seed=0)
    assert not rep.passed
    assert rep.estimates["M0_fit"] > 0


def test_boundedness(rd, rd_noise, pm, pm_noise):
    assert probe_boundedness(rd, diff=rd_noise, n_samples=10000, seed=5).passed
    assert probe_boundedness(pm, diff=pm_noise, n_samples=10000, seed=5).passed
    n1, n2 = dual_norms(rd, 0.3, np.zeros(32))
    assert n1 == 0 and n2 == 0
    with pytest.raises(ConfigurationError):
        probe_boundedness(rd, n_samples=10)


def test_porous_media_dual_norm_oracle(grid32):
    d = PorousMedia(grid32, 3.0, Constant(-1.0))
    rng = np.random.default_rng(0)
    lam = grid32.eigenvalues
    for _ in range(5):
        u = rng.standard_normal(32) / np.arange(1, 33) * np.sqrt(lam)
        _, n2 = dual_norms(d, 0.0, u)
        A = d.evaluate(0.0, u)
        # <A, v> in the dual-Sobolev pivot against ||v||_{L^3}
        V = rng.standard_normal((2000, 32)) / np.arange(1, 33)
        lp = grid32.integrate(np.abs(grid32.physical(V)) ** 3) ** (1 / 3)
        ratios = np.abs(V @ (A / lam)) / lp
        assert ratios.max() <= n2 * (1 + 1e-9)
        # Riesz representative rho and the near-maximizer |rho|^{q-1} sign(rho)
        rho = grid32.physical(A / lam)
        vstar = grid32.spectral(np.sign(rho) * np.abs(rho) ** 0.5)
        r_star = abs(vstar @ (A / lam)) / grid32.integrate(np.abs(grid32.physical(vstar)) ** 3) ** (1 / 3)
        assert r_star == pytest.approx(n2, rel=0.05)
    k = reference_constants(d, Additive(grid32, noise_amplitudes(), d.pivot))
    assert k.c3 == pytest.approx(1.5)
    assert probe_boundedness(d, k, 2000, seed=0).passed


def test_h5(rd, rd_noise, pm, pm_noise):
    rep = probe_h5(rd, rd_noise, (1, 10, 100), 10000, seed=6)
    assert rep.passed and rep.claimed["C"] == pytest.approx(2 * (PI2 - 1))
    assert set(rep.details["worst_margin_per_n"]) == {"1", "10", "100"}
    rep = probe_h5(pm, pm_noise, (1, 10, 100), 10000, seed=6)
    assert rep.passed and rep.claimed["C"] == pytest.approx(2.0)
    k = reference_constants(rd, rd_noise)
    for n in (1, 10, 100):
        Wn = rd.grid.space_weights("Hn", rd.pivot, n)
        hs = rd_noise.hs_sq(0.0, np.zeros(32), Wn)
        assert (k.M0_h5 - hs) / (1 + hs) >= -1e-8


# ---------------------------------------------------------------------------
# hemicontinuity
# ---------------------------------------------------------------------------

def test_hemicontinuity_passes(rd, pm):
    for d in (rd, pm):
        rep = probe_hemicontinuity(d, 500, seed=7)
        assert rep.passed
        assert 0.4 < rep.estimates["median_ratio"] < 0.6


def test_linear_map_jumps_scale_with_width(grid32, rng):
    d = ReactionDiffusion(grid32, 2.0, Constant(0.5))
    u, v, w = (rng.standard_normal((3, 32)) for _ in range(3))
    t = np.zeros(3)
    J = [hemicontinuity_jumps(d, t, u, v, w, n)[0] for n in (8, 16, 32)]
    np.testing.assert_allclose(J[1], J[0] / 2, rtol=1e-9)
    np.testing.assert_allclose(J[2], J[0] / 4, rtol=1e-9)


def test_cubic_map_matches_polynomial_oracle(rd, rng):
    u, v, w = (rng.standard_normal((4, 32)) / np.arange(1, 33) for _ in range(3))
    t = np.full(4, 0.3)
    _, vals = hemicontinuity_jumps(rd, t, u, v, w, 32)
    theta = np.linspace(-1, 1, 33)
    for i in range(4):
        nodes = np.array([-1.0, -1 / 3, 1 / 3, 1.0])
        f = [rd.grid.pivot_weights(rd.pivot) @ (rd.evaluate(0.3, u[i] + s * v[i]) * w[i]) for s in nodes]
        poly = np.polyfit(nodes, f, 3)
        np.testing.assert_allclose(vals[i], np.polyval(poly, theta), rtol=1e-9, atol=1e-9)
        # theta = 0 is the plain pairing
        assert vals[i][16] == pytest.approx(np.sum(rd.evaluate(0.3, u[i]) * w[i]), rel=1e-12)


# ---------------------------------------------------------------------------
# diffusion Lipschitz constant
# ---------------------------------------------------------------------------

def test_additive_lipschitz_is_zero(rd_noise):
    rep = probe_lipschitz_diffusion(rd_noise, 1000)
    assert rep.passed and rep.estimates["L_B_est"] == 0.0


def test_single_coupling_ratio(grid32):
    base = Additive(grid32, noise_amplitudes(4))
    e = np.zeros(4)
    e[1] = 1.0
    diff = LinearMultiplicative(base, (Coupling(Constant(0.7), e),))
    rep = probe_lipschitz_diffusion(diff, 1000, seed=0)
    assert rep.estimates["L_B_est"] == pytest.approx(0.7, rel=1e-12)
    assert rep.passed


def test_two_couplings_against_dense_operator(grid32):
    base = Additive(grid32, noise_amplitudes(3))
    e1, e2 = np.eye(3)[0], np.eye(3)[2]
    diff = LinearMultiplicative(base, (Coupling(Periodic(1.0, 0.0, (0.4,), ()), e1),
                                       Coupling(Constant(0.3), e2)))
    rng = np.random.default_rng(0)
    W = grid32.pivot_weights(diff.pivot)
    for t in rng.uniform(0, 1, 5):
        w = rng.standard_normal(32)
        # dense (K x K_U) matrix of B(u) - B(v) applied to the noise basis
        cols = [(0.4 * np.cos(2 * np.pi * t) if j == 0 else 0.3 if j == 2 else 0.0) * w for j in range(3)]
        Mx = np.stack(cols, axis=1) * np.sqrt(W)[:, None]
        assert diff.hs_sq_difference(t, w, W) == pytest.approx(np.sum(Mx**2), rel=1e-12)
    rep = probe_lipschitz_diffusion(diff, 2000, seed=0)
    assert rep.estimates["L_B_est"] <= np.hypot(0.4, 0.3) + 1e-12
    assert rep.passed


# ---------------------------------------------------------------------------
# dissipation intercept
# ---------------------------------------------------------------------------

def test_intercept_zero_for_linear_gap(grid32):
    d = ReactionDiffusion(grid32, 2.0, Constant(1.0), a=1.0)
    quiet = Additive(grid32, (0.0,) * 4)
    g = 2 * PI2
    res = probe_dissipation_intercept(d, quiet, g * (1 - 1e-9), 2000, seed=0)
    assert res["M0_eta"] == 0.0 and res["M1"] == 0.0
    assert res["lambda_est"] == pytest.approx(g, rel=1e-9)
    with pytest.raises(ConfigurationError):
        probe_dissipation_intercept(d, quiet, g * (1 + 1e-6), 100)


def test_intercept_stable_and_monotone(rd, rd_noise):
    lam = reference_constants(rd, rd_noise).lam
    small = probe_dissipation_intercept(rd, rd_noise, lam / 2, 1000, seed=0)
    large = probe_dissipation_intercept(rd, rd_noise, lam / 2, 10000, seed=0)
    assert 0 < large["M0_eta"] < np.inf
    assert small["M0_eta"] == pytest.approx(large["M0_eta"], rel=0.1)
    vals = [probe_dissipation_intercept(rd, rd_noise, e, 2000, seed=1, lam_est=2 * lam)["M0_eta"]
            for e in (0.1 * lam, 0.5 * lam, lam)]
    assert vals == sorted(vals)


def test_probe_all(rd, rd_noise, pm, pm_noise):
    out = probe_all(rd, rd_noise, 2000, seed=0)
    assert set(out) == {"H1", "H2'", "H3", "H4", "HL", "H5"}
    assert all(r.passed for r in out.values())
    out = probe_all(pm, pm_noise, 2000, seed=0)
    assert "H2''" in out and all(r.passed for r in out.values())

