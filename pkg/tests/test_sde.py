import numpy as np
import pytest

from monospde import (
    Additive,
    ConfigurationError,
    Constant,
    Field,
    Periodic,
    ReactionDiffusion,
    SimulationError,
    StepError,
    make_grid,
)
from monospde.sde import (
    Companion,
    Ensemble,
    IntegratorConfig,
    NewtonBacktracking,
    NoiseLattice,
    PicardRelaxation,
    StepKernel,
    jackknife_mean,
    pullback,
    second_moment,
    simulate,
    step,
)

from oracles import ou_exact


# ---------------------------------------------------------------------------
# noise lattice
# ---------------------------------------------------------------------------

def test_noise_moments():
    lat = NoiseLattice(11, 1e-3, 1)
    x = lat.window([0], 0, 10**6)[:, 0, 0]
    n = x.size
    assert abs(x.mean()) < 4 * np.sqrt(1e-3) / np.sqrt(n)
    assert x.var() == pytest.approx(1e-3, rel=0.05)


def test_noise_is_addressable_and_two_sided():
    lat = NoiseLattice(5, 0.01, 3, block=16)
    big = lat.window([2, 7], -40, 100)
    assert big.shape == (100, 2, 3)
    part = lat.window([7], -3, 5)
    np.testing.assert_array_equal(part[:, 0], big[37:42, 1])
    assert lat.increment(2, 1, -40) == big[0, 0, 1]
    assert not np.allclose(lat.window([0], 0, 4), NoiseLattice(6, 0.01, 3, block=16).window([0], 0, 4))


def test_bridge_refinement_is_consistent():
    lat = NoiseLattice(3, 0.1, 2)
    coarse = lat.window([0, 1], 5, 4)
    for level in (1, 2, 3):
        fine = lat.fine_window([0, 1], 5, 4, level)
        sums = fine.reshape(4, 2**level, 2, 2).sum(axis=1)
        np.testing.assert_allclose(sums, coarse, atol=1e-14)
    f2, f3 = lat.fine_window([0, 1], 5, 4, 2), lat.fine_window([0, 1], 5, 4, 3)
    np.testing.assert_allclose(f3.reshape(16, 2, 2, 2).sum(axis=1), f2, atol=1e-14)


def test_bridge_variance():
    lat = NoiseLattice(9, 1.0, 1)
    fine = lat.fine_window(np.arange(200), 0, 50, 3)
    assert fine.var() == pytest.approx(1.0 / 8, rel=0.05)


def test_noise_validation():
    with pytest.raises(ConfigurationError):
        NoiseLattice(-1, 0.1, 1)
    with pytest.raises(ConfigurationError):
        NoiseLattice(0, 0.0, 1)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def test_solver_validation():
    with pytest.raises(ConfigurationError):
        NewtonBacktracking(residual_tol=0.0)
    with pytest.raises(ConfigurationError):
        PicardRelaxation(damping=1.5)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(0.01, scheme="Explicit")


def test_zero_is_a_fixed_point(rd, rd_noise, grid32):
    out = step(Field.zeros(grid32), 0.0, IntegratorConfig(1e-3), rd, rd_noise, np.zeros(16))
    assert np.all(out.coeffs == 0)


def test_linear_step_closed_form(grid32, rng):
    phi = Periodic(1.0, 0.0, (), (1.0,))
    d = ReactionDiffusion(grid32, 2.0, phi, a=1.0)
    add = Additive(grid32, tuple(0.1 / k for k in range(1, 17)))
    u = Field(rng.standard_normal(32))
    dW = rng.standard_normal(16) * 0.03
    out = step(u, 0.1, IntegratorConfig(1e-3), d, add, dW)
    r = u.coeffs + add.increment(0.1, u.coeffs, dW)
    exact = r / (1 + 1e-3 * (grid32.eigenvalues + 1.0 - phi(0.1 + 1e-3)))
    np.testing.assert_allclose(out.coeffs, exact, atol=1e-12, rtol=0)


def _picard_oracle(d, r, t_next, dt, tol=1e-12):
    """Damped fixed-point iteration on the resolvent of the linear part."""
    lam = d.grid.eigenvalues
    phi = float(d.phi(t_next))
    z = r.copy()
    for _ in range(100000):
        nl = d.coupling * d.grid.spectral(np.sign(d.grid.physical(z)) * np.abs(d.grid.physical(z)) ** (d.p - 1))
        new = (r - dt * nl) / (1 + dt * (lam - phi))
        z_next = 0.5 * z + 0.5 * new
        if np.linalg.norm(z_next - z) < tol:
            return z_next
        z = z_next
    raise AssertionError("oracle did not converge")


@pytest.mark.parametrize("solver", [NewtonBacktracking(residual_tol=1e-11), PicardRelaxation(residual_tol=1e-11)])
def test_nonlinear_step_matches_oracle(rd, rd_noise, rng, solver):
    u = Field(rng.standard_normal(32) / np.arange(1, 33))
    dW = rng.standard_normal(16) * np.sqrt(1e-3)
    cfg = IntegratorConfig(1e-3, solver)
    out = step(u, 0.2, cfg, rd, rd_noise, dW)
    r = u.coeffs + rd_noise.increment(0.2, u.coeffs, dW)
    kernel = StepKernel(rd, rd_noise, solver)
    res = kernel.hnorm(kernel.residual(out.coeffs[None], r[None], float(rd.phi(0.201)), None, 1e-3))[0]
    assert res < 1e-10
    np.testing.assert_allclose(out.coeffs, _picard_oracle(rd, r, 0.201, 1e-3), atol=1e-8, rtol=0)


def test_step_error_carries_residual(rd, rd_noise, grid32):
    cfg = IntegratorConfig(0.5, PicardRelaxation(max_iter=1, residual_tol=1e-14))
    u = Field(10.0 * np.ones(32))
    with pytest.raises(StepError) as info:
        step(u, 0.0, cfg, rd, rd_noise, np.ones(16))
    assert info.value.residual > 0


def test_step_contraction_random_pairs(rd, rd_noise, pm, pm_noise, rng):
    for drift, diff in ((rd, rd_noise), (pm, pm_noise)):
        kernel = StepKernel(drift, diff, NewtonBacktracking())
        w = drift.grid.pivot_weights(drift.pivot)
        n = 10000
        scale = 10 ** rng.uniform(-2, 1, n)[:, None] * drift.grid.basis_scale(drift.pivot)
        u = rng.standard_normal((n, 32)) / np.arange(1, 33) * scale
        v = u + rng.standard_normal((n, 32)) / np.arange(1, 33) * scale * 0.3
        dW = rng.standard_normal((n, 16)) * np.sqrt(1e-3)
        t = 0.3
        (un, _, ok1), (vn, _, ok2) = (kernel.coupled_step(x, [], t, 1e-3, dW) for x in (u, v))
        assert ok1.all() and ok2.all()
        before = np.sqrt(np.einsum("nk,k,nk->n", u - v, w, u - v))
        after = np.sqrt(np.einsum("nk,k,nk->n", un - vn, w, un - vn))
        assert np.sum(after > before + 1e-12 * (1 + before)) == 0


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def test_zero_noise_zero_init(rd, grid32):
    add = Additive(grid32, (0.0,) * 4)
    lat = NoiseLattice(0, 1e-3, 4)
    tr = simulate(Field.zeros(grid32), 0.0, 0.05, IntegratorConfig(1e-3), rd, add, lat, np.arange(3))
    assert np.all(tr.states == 0)


def test_simulate_validation(rd, rd_noise, grid32):
    lat = NoiseLattice(0, 1e-3, 16)
    cfg = IntegratorConfig(1e-3)
    with pytest.raises(ConfigurationError):
        simulate(Field.zeros(grid32), 0.0, 0.01, IntegratorConfig(3e-4), rd, rd_noise, lat, [0])
    with pytest.raises(ConfigurationError):
        simulate(Field.zeros(grid32), 0.0, 0.01, cfg, rd, rd_noise, NoiseLattice(0, 1e-3, 4), [0])
    with pytest.raises(ConfigurationError):
        simulate(Field.zeros(grid32), 0.00025, 0.01, cfg, rd, rd_noise, lat, [0])
    with pytest.raises(ConfigurationError):
        simulate(Field.zeros(grid32), 0.0, 0.01, cfg, rd, rd_noise, lat, [0], output_times=[0.02])


def test_threads_do_not_change_results(rd, rd_noise, rng):
    lat = NoiseLattice(4, 1e-3, 16)
    init = rng.standard_normal((130, 32)) / np.arange(1, 33)
    a = simulate(init, 0.0, 0.02, IntegratorConfig(1e-3), rd, rd_noise, lat, np.arange(130), threads=1)
    b = simulate(init, 0.0, 0.02, IntegratorConfig(1e-3), rd, rd_noise, lat, np.arange(130), threads=3)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.noise_checksum == b.noise_checksum


def test_adaptedness(rd, rd_noise, grid32):
    """Perturbing noise after the output time leaves the output unchanged."""
    cfg = IntegratorConfig(1e-3)
    a = simulate(Field.zeros(grid32), 0.0, 0.05, cfg, rd, rd_noise, NoiseLattice(1, 1e-3, 16, block=20), [0, 1],
                 output_times=[0.0, 0.02, 0.05])
    b = simulate(Field.zeros(grid32), 0.0, 0.02, cfg, rd, rd_noise, NoiseLattice(1, 1e-3, 16, block=20), [0, 1],
                 output_times=[0.0, 0.02])
    np.testing.assert_array_equal(a.states[1], b.states[1])


def test_coupled_paths_contract(rd, rd_noise, rng):
    lat = NoiseLattice(2, 1e-3, 16)
    ids = np.arange(8)
    u = rng.standard_normal((8, 32)) / np.arange(1, 33)
    v = u + 0.5 * rng.standard_normal((8, 32)) / np.arange(1, 33)
    outs = [round(0.001 * i, 3) for i in range(31)]
    tr = simulate(u, 0.0, 0.03, IntegratorConfig(1e-3), rd, rd_noise, lat, ids, output_times=outs,
                  companions=[Companion(0.0, v)])
    d = np.linalg.norm(tr.differences[0], axis=2)  # (T, P)
    assert np.all(np.diff(d, axis=0) <= 1e-12 * (1 + d[:-1]))
    sep = simulate(v, 0.0, 0.03, IntegratorConfig(1e-3), rd, rd_noise, lat, ids, output_times=outs)
    np.testing.assert_allclose(tr.companion_states(0), sep.states, atol=1e-9)


def test_step_halving_keeps_noise_consistent(rd, rd_noise, rng):
    """A tight Picard budget forces halving; the result still solves the refined scheme."""
    lat = NoiseLattice(8, 1e-2, 16)
    init = rng.standard_normal((4, 32)) / np.arange(1, 33)
    loose = IntegratorConfig(1e-2, PicardRelaxation(max_iter=6, residual_tol=1e-10))
    tr = simulate(init, 0.0, 0.02, loose, rd, rd_noise, lat, np.arange(4))
    assert tr.stats["halvings"] > 0
    assert np.all(np.isfinite(tr.states))
    with pytest.raises(SimulationError):
        simulate(init, 0.0, 0.02, IntegratorConfig(1e-2, PicardRelaxation(max_iter=1), max_halvings=0), rd,
                 rd_noise, lat, np.arange(4))


def _ou_problem():
    g = make_grid(1.0, 1)
    d = ReactionDiffusion(g, 2.0, Constant(0.0), a=1.0)
    b = 0.5
    return g, d, Additive(g, (b,)), g.eigenvalues[0] + 1.0, b


def test_ou_moments():
    g, d, add, gamma, b = _ou_problem()
    P, T, x0 = 4000, 0.5, 1.0
    lat = NoiseLattice(21, 1e-3, 1)
    tr = simulate(np.full((P, 1), x0), 0.0, T, IntegratorConfig(1e-3), d, add, lat, np.arange(P))
    x = tr.states[-1, :, 0]
    mean = np.exp(-gamma * T) * x0
    var = b**2 * (1 - np.exp(-2 * gamma * T)) / (2 * gamma)
    se_mean = np.sqrt(var / P)
    se_var = var * np.sqrt(2 / (P - 1))
    bias = 1e-3 * gamma  # first-order scheme bias, relative
    assert abs(x.mean() - mean) <= 3 * se_mean + bias * abs(mean)
    assert abs(x.var() - var) <= 3 * se_var + bias * var


def test_strong_order_linear():
    g, d, add, gamma, b = _ou_problem()
    P, T, base = 64, 1.0, 2.0**-4
    lat = NoiseLattice(17, base, 1)
    ids = np.arange(P)
    fine_level = 12
    dW = lat.fine_window(ids, 0, int(T / base), fine_level)[:, :, 0]  # (N, P)
    exact = ou_exact(1.0, gamma, b, T, dW, base / 2**fine_level)
    dts, errs = [], []
    for level in range(0, 5):
        dt = base / 2**level
        tr = simulate(np.ones((P, 1)), 0.0, T, IntegratorConfig(dt), d, add, lat, ids)
        errs.append(np.sqrt(np.mean((tr.states[-1, :, 0] - exact) ** 2)))
        dts.append(dt)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 0.85


# ---------------------------------------------------------------------------
# ensembles and pull-back
# ---------------------------------------------------------------------------

def test_second_moment_examples(grid32, rng):
    z = Ensemble(grid32, 0.0, np.arange(4), np.zeros((4, 32)))
    assert second_moment(z) == (0.0, 0.0)
    e1 = np.zeros((4, 32))
    e1[:2, 0], e1[2:, 0] = 1.0, -1.0
    m, se = second_moment(Ensemble(grid32, 0.0, np.arange(4), e1), "H_L2")
    assert m == pytest.approx(1.0) and se == pytest.approx(0.0, abs=1e-15)
    c = np.zeros((10**4, 32))
    c[:, 0] = rng.standard_normal(10**4)
    m, se = second_moment(Ensemble(grid32, 0.0, np.arange(10**4), c))
    assert abs(m - 1.0) <= 4 * se
    with pytest.raises(ConfigurationError):
        jackknife_mean([])


def test_pullback_trivial_cases(rd, grid32):
    add = Additive(grid32, (0.0,) * 4)
    lat = NoiseLattice(0, 1e-3, 4)
    res = pullback(0.0, [0, 0.01, 0.02], IntegratorConfig(1e-3), rd, add, lat, np.arange(3))
    assert all(v[0] == 0 for v in res.distances.values())
    assert res.to_largest[0.02] == (0.0, 0.0)
    assert np.all(res.proxy.coeffs == 0)


def test_pullback_shares_noise(rd, rd_noise):
    lat = NoiseLattice(3, 1e-3, 16)
    ids = np.arange(4)
    res = pullback(0.0, [0.01, 0.03], IntegratorConfig(1e-3), rd, rd_noise, lat, ids)
    direct = simulate(np.zeros((4, 32)), -0.01, 0.0, IntegratorConfig(1e-3), rd, rd_noise, lat, ids)
    np.testing.assert_allclose(res.ensembles[0.01].coeffs, direct.states[-1], atol=1e-9)
