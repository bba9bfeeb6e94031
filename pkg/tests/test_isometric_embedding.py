"""Tests for the linearized and nonlinear isometric embedding into R^3."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_scalar, random_sigma1, spheroid, spheroid_mean_curvature
from quasilocal import s2_spectral as s2
from quasilocal.isometric_embedding import (
    EmbeddingError,
    align_rigid,
    embed_r3_newton,
    gauge_fix_linear,
    h0_minus2,
    induced_metric_r3,
    linearized_residual,
    mean_curvature_r3,
    solve_linearized,
)


def sigma1_of(grid, Y):
    """Forward map ``2 sym(dX~ . dY)``."""
    lin = np.einsum("ai...,bi...->ab...", grid.frame, grid.partials(Y))
    return lin + np.swapaxes(lin, 0, 1)


# ---------------------------------------------------------------------------
# solve_linearized
# ---------------------------------------------------------------------------


def test_zero_input(grid8):
    """sigma1 = 0 gives Y = 0, P = 0, F = 0."""
    sol = solve_linearized(grid8, np.zeros((2, 2) + grid8.shape))
    assert np.max(np.abs(sol.Y)) < 1e-15
    assert np.max(np.abs(sol.P)) < 1e-15 and np.max(np.abs(sol.F)) < 1e-15


def test_forward_constructed_deformation(grid12):
    """Y* = Y20 X~ is recovered from its own sigma1 up to gauge fixing."""
    Ystar = grid12.ylm(2, 0) * grid12.xt
    sol = solve_linearized(grid12, sigma1_of(grid12, Ystar))
    assert np.max(np.abs(sol.Y - gauge_fix_linear(grid12, Ystar))) < 1e-8


def test_rigid_motions_are_the_kernel(grid12, rng):
    """Translations plus rotations have sigma1 = 0 and are removed by the gauge."""
    W = rng.normal(size=(3, 3))
    W = W - W.T
    Y = np.einsum("ij,j...->i...", W, grid12.xt) + rng.normal(size=3)[:, None, None]
    s1 = sigma1_of(grid12, Y)
    # rounding of the spectral derivative scales with the size of Y
    scale = np.max(np.abs(Y))
    assert np.max(np.abs(s1)) < 1e-13 * scale
    assert np.max(np.abs(gauge_fix_linear(grid12, Y))) < 1e-14 * scale
    assert np.max(np.abs(solve_linearized(grid12, s1).Y)) < 1e-13 * scale


def test_asymmetric_input_rejected(grid8):
    """Non-symmetric sigma1 raises ValueError."""
    s1 = np.zeros((2, 2) + grid8.shape)
    s1[0, 1] = 1.0
    with pytest.raises(ValueError):
        solve_linearized(grid8, s1)


def test_linearity(grid12, rng):
    """solve_linearized is linear in sigma1."""
    for _ in range(3):
        a, b = rng.normal(size=2)
        s, t = random_sigma1(grid12, rng), random_sigma1(grid12, rng)
        lhs = solve_linearized(grid12, a * s + b * t).Y
        rhs = a * solve_linearized(grid12, s).Y + b * solve_linearized(grid12, t).Y
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_nirenberg_system_consistency(grid12, rng):
    """sym(dX~ . dY) reproduces sigma1 / 2 and the reconstruction is curl free."""
    s1 = random_sigma1(grid12, rng)
    sol = solve_linearized(grid12, s1)
    assert linearized_residual(grid12, s1, sol) < 1e-9
    assert sol.curl_residual < 1e-9


def test_divergence_of_p_moment(grid12, rng):
    """int X~^i div~ P = -1/2 int X~^i tr sigma1 for random sigma1."""
    for _ in range(3):
        s1 = random_sigma1(grid12, rng)
        sol = solve_linearized(grid12, s1)
        divP = s2.divergence(grid12, s2.round_metric(grid12), sol.P)
        tr = s1[0, 0] + s1[1, 1] / grid12.sin**2
        lhs = grid12.integrate(grid12.xt * divP)
        rhs = -0.5 * grid12.integrate(grid12.xt * tr)
        assert np.max(np.abs(lhs - rhs)) < 1e-9


# ---------------------------------------------------------------------------
# h0_minus2
# ---------------------------------------------------------------------------


def test_h0_zero_input(grid8):
    """sigma1 = 0 gives h0^(-2) = 0."""
    assert np.max(np.abs(h0_minus2(grid8, np.zeros((2, 2) + grid8.shape)))) < 1e-15


def test_h0_mean(grid12, rng):
    """int h0^(-2) = -1/2 int tr sigma1."""
    s1 = random_sigma1(grid12, rng)
    tr = s1[0, 0] + s1[1, 1] / grid12.sin**2
    assert abs(grid12.integrate(h0_minus2(grid12, s1)) + 0.5 * grid12.integrate(tr)) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_h0_first_moments_vanish(seed):
    """int X~^i h0^(-2) = 0 for random band-limited sigma1."""
    g = s2.build_grid(12)
    s1 = random_sigma1(g, np.random.default_rng(seed))
    assert np.max(np.abs(g.integrate(g.xt * h0_minus2(g, s1)))) < 1e-8


# ---------------------------------------------------------------------------
# embed_r3_newton and mean_curvature_r3
# ---------------------------------------------------------------------------


def test_round_metric_embeds_as_round_sphere(grid8):
    """r^2 sigma~ embeds as r X~."""
    r = 17.0
    res = embed_r3_newton(grid8, r * r * s2.round_metric(grid8))
    assert np.max(np.abs(res.X - r * grid8.xt)) < 1e-9 * r


def test_spheroid_recovered(grid16):
    """The induced metric of the (1, 1, 1.1) spheroid embeds back to it."""
    E = spheroid(grid16, 1.0, 1.1)
    sigma = induced_metric_r3(grid16, E)
    res = embed_r3_newton(grid16, sigma, grid16.xt)
    aligned = align_rigid(res.X, E, grid16.weights)
    assert np.max(np.linalg.norm(aligned - E, axis=0)) < 1e-7
    assert res.residual < 1e-9


def test_embedding_of_perturbed_metric_matches_linearization(grid12, rng):
    """X' - r X~ - Y(sigma1) decays like 1/r for sigma = r^2 sigma~ + r sigma1."""
    s1 = random_sigma1(grid12, rng, lmax=2, scale=0.2)
    Y = solve_linearized(grid12, s1).Y
    radii = np.array([50.0, 200.0, 800.0])
    err = []
    for r in radii:
        X = embed_r3_newton(grid12, r * r * s2.round_metric(grid12) + r * s1).X
        err.append(np.max(np.abs(X - r * grid12.xt - Y)))
    slope = np.polyfit(np.log(radii), np.log(err), 1)[0]
    assert slope < -0.8


def test_far_from_round_rejected(grid8):
    """Metrics outside the admission bound raise."""
    sigma = induced_metric_r3(grid8, spheroid(grid8, 1.0, 2.0))
    with pytest.raises(EmbeddingError):
        embed_r3_newton(grid8, sigma)


def test_negative_curvature_rejected(grid12):
    """A metric with a negatively curved region raises."""
    f = 1 + 0.15 * grid12.ylm(6, 0) / np.max(np.abs(grid12.ylm(6, 0)))
    sigma = f**2 * s2.round_metric(grid12)
    assert np.any(s2.gauss_curvature(grid12, sigma) <= 0)
    with pytest.raises(EmbeddingError):
        embed_r3_newton(grid12, sigma)


def test_mean_curvature_round(grid8):
    """Round sphere has mean curvature 2/r."""
    assert np.max(np.abs(mean_curvature_r3(grid8, 3.0 * grid8.xt) - 2 / 3)) < 1e-13


def test_mean_curvature_spheroid(grid16):
    """Spheroid mean curvature matches the symbolic fundamental-form oracle."""
    E = spheroid(grid16, 1.0, 1.1)
    H = spheroid_mean_curvature(1.0, 1.1)(grid16.TH, grid16.PH)
    assert np.max(np.abs(mean_curvature_r3(grid16, E) - np.abs(H))) < 1e-7


def test_mean_curvature_expansion_gives_h0(grid12, rng):
    """(h0 - 2/r) r^2 of nonlinear embeddings tends to h0^(-2)."""
    s1 = random_sigma1(grid12, rng, lmax=2, scale=0.2)
    target = h0_minus2(grid12, s1)
    radii = np.array([100.0, 400.0, 1600.0])
    err = []
    for r in radii:
        sigma = r * r * s2.round_metric(grid12) + r * s1
        X = embed_r3_newton(grid12, sigma).X
        err.append(np.max(np.abs((mean_curvature_r3(grid12, X, sigma) - 2 / r) * r * r - target)))
    assert err[-1] < err[0]
    slope = np.polyfit(np.log(radii), np.log(err), 1)[0]
    assert slope < -0.8


def test_random_scalar_helper_band_limit(grid8, rng):
    """The helper produces fields of the requested degree."""
    f = random_scalar(grid8, rng, 2)
    c = grid8.to_real(grid8.analysis(f))
    assert np.max(np.abs(c[grid8.real_degrees() > 2])) < 1e-13
