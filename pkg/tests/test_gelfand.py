import numpy as np
import pytest

from monospde import ConfigurationError, Field, Pivot, make_grid, norm, pairing, to_physical, to_spectral

LP4_MODE1 = 1.1066819197003215  # quadrature of (int_0^1 4 sin^4(pi x) dx)^(1/4)


def test_first_eigenvalue_unit_interval():
    g = make_grid(1.0, 1, 4)
    assert g.lambda1 == pytest.approx(np.pi**2, rel=1e-14)


def test_eigenvalues_closed_form():
    g = make_grid(2.0, 3, 8)
    np.testing.assert_allclose(g.eigenvalues, [(k * np.pi / 2) ** 2 for k in (1, 2, 3)], rtol=1e-14)
    assert np.all(np.diff(g.eigenvalues) > 0)


@pytest.mark.parametrize("args", [(1.0, 8, 12), (0.0, 4, 8), (1.0, 0, 8), (-1.0, 2, 4), (1.0, 2, 0)])
def test_invalid_grids(args):
    with pytest.raises(ConfigurationError):
        make_grid(*args)


def test_default_points_is_twice_modes():
    assert make_grid(1.0, 5).num_points == 10


def test_discrete_gram_is_identity(grid32):
    gram = (grid32.basis * grid32.weights[:, None]).T @ grid32.basis
    np.testing.assert_allclose(gram, np.eye(32), atol=1e-10)


def test_round_trip(grid32, rng):
    u = rng.standard_normal(32)
    back = to_spectral(grid32, to_physical(grid32, Field(u))).coeffs
    np.testing.assert_allclose(back, u, atol=1e-10)


def test_physical_of_first_mode(grid32):
    e1 = Field.mode(grid32, 1)
    np.testing.assert_allclose(to_physical(grid32, e1), np.sqrt(2) * np.sin(np.pi * grid32.nodes), atol=1e-14)
    assert np.all(to_physical(grid32, Field.zeros(grid32)) == 0)


def test_spectral_of_mode_two_and_projection():
    g = make_grid(1.0, 6, 12)
    np.testing.assert_allclose(to_spectral(g, to_physical(g, Field.mode(g, 2))).coeffs, np.eye(6)[1], atol=1e-12)
    above = np.sqrt(2) * np.sin(7 * np.pi * g.nodes)
    np.testing.assert_allclose(to_spectral(g, above).coeffs, 0.0, atol=1e-12)
    assert np.all(to_spectral(g, np.zeros(12)).coeffs == 0)


def test_size_mismatch(grid32):
    with pytest.raises(ConfigurationError):
        to_physical(grid32, np.zeros(5))


def test_field_rejects_nonfinite():
    with pytest.raises(ConfigurationError):
        Field(np.array([1.0, np.nan]))


def test_norms_of_zero(grid32):
    z = Field.zeros(grid32)
    for space, kw in [("H", {}), ("H_L2", {}), ("H_dual", {}), ("V1_sobolev", {}), ("V2_Lp", {"p": 4}),
                      ("Vdual", {}), ("S", {}), ("Hn", {"n": 10})]:
        assert norm(grid32, z, space, **kw) == 0.0


def test_hn_of_first_mode_increases_to_s():
    g = make_grid(1.0, 4)
    e1 = Field.mode(g, 1)
    vals = [norm(g, e1, "Hn", n=n) ** 2 for n in (1, 10, 100, 1000, 10000)]
    for n, v in zip((1, 10, 100, 1000, 10000), vals):
        assert v == pytest.approx(n * np.pi**2 / (n + np.pi**2), rel=1e-12)
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] < norm(g, e1, "S") ** 2 == pytest.approx(np.pi**2)


def test_lp_norm_of_first_mode():
    g = make_grid(1.0, 8)
    assert norm(g, Field.mode(g, 1), "V2_Lp", p=4) == pytest.approx(LP4_MODE1, abs=1e-8)


def test_norm_errors(grid32):
    u = Field.mode(grid32, 1)
    with pytest.raises(ConfigurationError):
        norm(grid32, u, "nope")
    with pytest.raises(ConfigurationError):
        norm(grid32, u, "V2_Lp", p=1.0)
    with pytest.raises(ConfigurationError):
        norm(grid32, u, "Hn", n=0.5)


def test_pairings():
    g = make_grid(1.0, 4)
    e1, e2 = Field.mode(g, 1), Field.mode(g, 2)
    assert pairing(g, Field.zeros(g), e1) == 0.0
    assert pairing(g, e1, e1) == pytest.approx(1.0)
    d2 = Field.mode(g, 2, pivot=Pivot.DUAL_SOBOLEV)
    assert pairing(g, d2, d2) == pytest.approx(1.0 / (4 * np.pi**2), rel=1e-14)
    with pytest.raises(ConfigurationError):
        pairing(g, e2, d2)


def test_parseval(grid32, rng):
    u = rng.standard_normal(32)
    vals = to_physical(grid32, u)
    assert norm(grid32, u, "H_L2") ** 2 == pytest.approx(grid32.integrate(vals**2), rel=1e-8)


def test_monotone_norm_family_and_equivalence(grid32, rng):
    lam = grid32.eigenvalues
    for _ in range(20):
        u = rng.standard_normal(32) / np.arange(1, 33) ** 2
        hn = [norm(grid32, u, "Hn", n=n) for n in (1, 10, 100, 1000, 10000)]
        s = norm(grid32, u, "S")
        assert all(a <= b for a, b in zip(hn, hn[1:])) and hn[-1] <= s
        gaps = [s - h for h in hn]
        assert all(b < 0.9 * a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 0.1 * gaps[0]
        h = norm(grid32, u, "H_L2")
        for n in (1, 10, 100):
            lo = np.sqrt(n * lam[0] / (n + lam[0])) * h
            hi = np.sqrt(n * lam[-1] / (n + lam[-1])) * h
            hnn = norm(grid32, u, "Hn", n=n)
            assert lo - 1e-10 <= hnn <= hi + 1e-10
        assert h**2 <= s**2 / lam[0] + 1e-12


def test_dual_sobolev_field_norms(grid32):
    u = Field.mode(grid32, 3, amplitude=2.0, pivot=Pivot.DUAL_SOBOLEV)
    assert norm(grid32, u, "H") == pytest.approx(2.0 / (3 * np.pi), rel=1e-14)
    assert norm(grid32, u, "H_dual") == norm(grid32, u, "H")
    assert norm(grid32, u, "V1_sobolev") == pytest.approx(2.0 * np.sqrt(1 + 9 * np.pi**2), rel=1e-14)
    assert norm(grid32, u, "Vdual") == pytest.approx(2.0 / np.sqrt(1 + 9 * np.pi**2), rel=1e-14)
