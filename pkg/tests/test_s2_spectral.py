"""Tests for quadrature, transforms and tensor calculus on the sphere."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma

from quasilocal import s2_spectral as s2
from quasilocal.asymptotics_evolution import k_minus3
from quasilocal.isometric_embedding import induced_metric_r3


def random_scalar(grid, rng, lmax=None, scale=1.0):
    """Random field of degree <= lmax; derivatives need two degrees of headroom."""
    lmax = grid.lmax - 2 if lmax is None else lmax
    a = rng.normal(size=grid.nbasis) * (grid.real_degrees() <= lmax)
    return scale * grid.synthesis(grid.from_real(a))


def monomial_integral(a, b, c):
    if a % 2 or b % 2 or c % 2:
        return 0.0
    ha, hb, hc = (a + 1) / 2, (b + 1) / 2, (c + 1) / 2
    return 2 * gamma(ha) * gamma(hb) * gamma(hc) / gamma(ha + hb + hc)


# ---------------------------------------------------------------------------
# build_grid
# ---------------------------------------------------------------------------


def test_area_of_unit_sphere(grid8):
    """Weights sum to 4 pi."""
    assert abs(s2.integrate(grid8, np.ones(grid8.shape)) - 4 * np.pi) < 1e-13


def test_odd_moment_vanishes(grid8):
    """The first coordinate function integrates to zero."""
    assert abs(s2.integrate(grid8, grid8.xt[0])) < 1e-13


def test_z_squared_moment(grid16):
    """int cos^2 theta dS = 4 pi / 3."""
    assert abs(s2.integrate(grid16, grid16.xt[2] ** 2) - 4 * np.pi / 3) < 1e-12


def test_node_count_and_rejection():
    """Grid has at least (L+1)(2L+1) nodes and lmax < 4 is rejected."""
    g = s2.build_grid(6)
    assert g.nodes.shape[0] >= 7 * 13
    with pytest.raises(ValueError):
        s2.build_grid(3)


@pytest.mark.parametrize("lmax", [8, 12])
def test_quadrature_exactness_all_pairs(lmax):
    """Products of harmonics with l + l' <= 2 lmax integrate exactly (Gram matrix)."""
    g = s2.build_grid(lmax)
    B = g.real_basis()
    gram = np.einsum("kab,nab,ab->kn", B, B, g.weights)
    assert np.max(np.abs(gram - np.eye(g.nbasis))) < 1e-12


@pytest.mark.parametrize("lmax", [8, 16])
def test_monomials_against_gamma_oracle(lmax):
    """Monomials of total degree 2 lmax match the Gamma-function formula."""
    g = s2.build_grid(lmax)
    x, y, z = g.xt
    for a in range(0, 2 * lmax + 1, 3):
        for b in range(0, 2 * lmax + 1 - a, 2):
            c = 2 * lmax - a - b
            assert abs(g.integrate(x**a * y**b * z**c) - monomial_integral(a, b, c)) < 1e-12


def test_transform_round_trip(grid12, rng):
    """Analysis followed by synthesis reproduces a band-limited field."""
    f = random_scalar(grid12, rng)
    assert np.max(np.abs(grid12.synthesis(grid12.analysis(f)) - f)) < 1e-12


# ---------------------------------------------------------------------------
# round operators
# ---------------------------------------------------------------------------


def test_laplacian_of_coordinate_functions(grid8):
    """Lap X~^i = -2 X~^i."""
    for i in range(3):
        assert np.max(np.abs(s2.laplacian_round(grid8, grid8.xt[i]) + 2 * grid8.xt[i])) < 1e-12


def test_laplacian_of_constant(grid8):
    """Constants are harmonic."""
    assert np.max(np.abs(s2.laplacian_round(grid8, 3.0 * np.ones(grid8.shape)))) < 1e-12


def test_laplacian_of_y20(grid8):
    """Y20 has eigenvalue -6."""
    y = grid8.ylm(2, 0)
    assert np.max(np.abs(s2.laplacian_round(grid8, y) + 6 * y)) < 1e-12


def test_helmholtz_on_y20(grid8):
    """(Lap + 2) u = Y20 gives u = -Y20/4 and no degree-1 moment."""
    u, mom = s2.solve_helmholtz_plus2(grid8, grid8.ylm(2, 0))
    assert np.max(np.abs(u + grid8.ylm(2, 0) / 4)) < 1e-12
    assert np.max(np.abs(mom)) < 1e-13


def test_helmholtz_kernel_projection(grid8):
    """rhs = X~^3 lies in the kernel: u = 0 and moment 4 pi / 3."""
    u, mom = s2.solve_helmholtz_plus2(grid8, grid8.xt[2])
    assert np.max(np.abs(u)) < 1e-13
    assert np.allclose(mom, [0, 0, 4 * np.pi / 3], atol=1e-12)


def test_helmholtz_zero(grid8):
    """Zero right side gives zero."""
    u, mom = s2.solve_helmholtz_plus2(grid8, np.zeros(grid8.shape))
    assert np.all(u == 0) and np.all(mom == 0)


@pytest.mark.parametrize("lmax", [8, 16])
def test_helmholtz_reproduces_non_kernel_part(lmax):
    """Applying (Lap + 2) to the solution returns rhs minus its degree-1 part."""
    g = s2.build_grid(lmax)
    rhs = random_scalar(g, np.random.default_rng(lmax))
    u, _ = s2.solve_helmholtz_plus2(g, rhs)
    c = g.analysis(rhs)
    expected = g.synthesis(np.where(g.degrees == 1, 0.0, c))
    assert np.max(np.abs(s2.laplacian_round(g, u) + 2 * u - expected)) < 1e-10


def test_bilaplacian_solver(grid12, rng):
    """Lap(Lap + 2) u = rhs on degrees >= 2; the low part is reported."""
    rhs = random_scalar(grid12, rng)
    u, low = s2.solve_bilaplacian_plus2(grid12, rhs)
    lap = s2.laplacian_round
    assert np.max(np.abs(lap(grid12, lap(grid12, u) + 2 * u) + low - rhs)) < 1e-9


# ---------------------------------------------------------------------------
# general-metric operators
# ---------------------------------------------------------------------------


def conformal_metric(grid, rng, amp=0.05):
    f = 1 + amp * random_scalar(grid, rng, lmax=4) / 3
    return f**2 * s2.round_metric(grid)


def test_gauss_curvature_round(grid8):
    """A sphere of radius r has K = 1/r^2."""
    for r in (1.0, 7.0, 300.0):
        K = s2.gauss_curvature(grid8, r * r * s2.round_metric(grid8))
        assert np.max(np.abs(K * r * r - 1)) < 1e-10


@pytest.mark.parametrize("lmax,degree", [(8, 2), (16, 3)])
def test_gauss_bonnet(lmax, degree):
    """int K dS_sigma = 4 pi for induced metrics of perturbed spheres resolved by the grid."""
    g = s2.build_grid(lmax)
    rng = np.random.default_rng(lmax)
    for _ in range(10):
        f = random_scalar(g, rng, lmax=degree)
        sigma = induced_metric_r3(g, (1 + 0.05 * f / np.max(np.abs(f))) * g.xt)
        K = s2.gauss_curvature(g, sigma)
        assert abs(s2.integrate(g, K, sigma) - 4 * np.pi) < 1e-8


def test_gauss_curvature_expansion_slope(grid12, rng):
    """K - 1/r^2 - K^(-3)/r^3 decays like r^-4 for sigma = r^2 sigma~ + r sigma1."""
    rnd = s2.round_metric(grid12)
    f = random_scalar(grid12, rng, lmax=3)
    h = random_scalar(grid12, rng, lmax=3)
    sigma1 = f * rnd + s2.hessian(grid12, rnd, h)
    K3 = k_minus3(grid12, sigma1)
    radii = np.geomspace(1e2, 1e5, 7)
    err = [np.max(np.abs(s2.gauss_curvature(grid12, r * r * rnd + r * sigma1) - 1 / r**2 - K3 / r**3))
           for r in radii]
    slope = np.polyfit(np.log(radii), np.log(err), 1)[0]
    assert abs(slope + 4) < 0.2


def test_gauss_curvature_rotation(grid12, rng):
    """Rotating the metric samples about the axis rotates K identically."""
    sigma = conformal_metric(grid12, rng)
    K = s2.gauss_curvature(grid12, sigma)
    shift = 5
    Kr = s2.gauss_curvature(grid12, np.roll(sigma, shift, axis=-1))
    assert np.max(np.abs(Kr - np.roll(K, shift, axis=-1))) < 1e-9
    # reflection through the equator (theta -> pi - theta) flips sigma_01
    flip = sigma[..., ::-1, :].copy()
    flip[0, 1] *= -1
    flip[1, 0] *= -1
    assert np.max(np.abs(s2.gauss_curvature(grid12, flip) - K[::-1])) < 1e-9


def test_non_positive_metric_rejected(grid8):
    """Indefinite metrics raise MetricError."""
    bad = s2.round_metric(grid8).copy()
    bad[1, 1] *= -1
    with pytest.raises(s2.MetricError):
        s2.gauss_curvature(grid8, bad)


def test_laplace_beltrami_scaling(grid12, rng):
    """Lap of r^2 sigma~ is the round Laplacian over r^2."""
    f = random_scalar(grid12, rng)
    r = 13.0
    lb = s2.laplace_beltrami(grid12, r * r * s2.round_metric(grid12), f)
    assert np.max(np.abs(lb - s2.laplacian_round(grid12, f) / r**2)) < 1e-12


def test_divergence_of_gradient(grid12, rng):
    """div grad g = Lap g on the round sphere."""
    f = random_scalar(grid12, rng)
    div = s2.divergence(grid12, s2.round_metric(grid12), grid12.partials(f))
    assert np.max(np.abs(div - s2.laplacian_round(grid12, f))) < 1e-11


def test_curl_of_gradient(grid12, rng):
    """The curl of an exact form vanishes pointwise."""
    f = random_scalar(grid12, rng)
    assert np.max(np.abs(s2.curl_moment(grid12, grid12.partials(f)))) < 1e-11


def test_divergence_integrates_to_zero(grid12, rng):
    """int div_sigma w dS_sigma = 0 for a general metric."""
    sigma = conformal_metric(grid12, rng)
    w = np.stack([random_scalar(grid12, rng, 5), grid12.sin * random_scalar(grid12, rng, 5)])
    assert abs(s2.integrate(grid12, s2.divergence(grid12, sigma, w), sigma)) < 1e-10


def test_christoffel_symmetry_and_round_values(grid8):
    """Round Christoffels: Gamma^theta_phiphi = -sin cos, Gamma^phi_thetaphi = cot."""
    G = s2.christoffel(grid8, s2.round_metric(grid8))
    assert np.allclose(G[0, 1, 1], -grid8.sin * grid8.cos, atol=1e-12)
    assert np.allclose(G[1, 0, 1], grid8.cos / grid8.sin, atol=1e-11)
    assert np.allclose(G[:, 0, 1], G[:, 1, 0])


def test_hessian_trace_is_laplacian(grid12, rng):
    """tr Hess f = Lap f for a perturbed metric."""
    sigma = conformal_metric(grid12, rng)
    f = random_scalar(grid12, rng, 6)
    H = s2.hessian(grid12, sigma, f)
    tr = np.einsum("ab...,ab...->...", s2.metric_inverse(sigma), H)
    assert np.max(np.abs(tr - s2.laplace_beltrami(grid12, sigma, f))) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_operators_are_linear(a, b, seed):
    """Spectral and metric operators are linear."""
    g = s2.build_grid(8)
    rng = np.random.default_rng(seed)
    f, h = random_scalar(g, rng), random_scalar(g, rng)
    sigma = conformal_metric(g, rng)
    for op in (
        lambda u: s2.laplacian_round(g, u),
        lambda u: s2.laplace_beltrami(g, sigma, u),
        lambda u: s2.solve_helmholtz_plus2(g, u)[0],
        lambda u: s2.curl_moment(g, g.partials(u) * np.array([1.0, 0.0])[:, None, None]),
    ):
        lhs = op(a * f + b * h)
        rhs = a * op(f) + b * op(h)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(rhs)))
