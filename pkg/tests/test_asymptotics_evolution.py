"""Tests for radial fits, finiteness moments, total quantities and the evolution checks."""

import dataclasses

import numpy as np
import pytest

from conftest import MODELS, SWEEP
from oracles import random_sigma1
from quasilocal import s2_spectral as s2
from quasilocal.asymptotics_evolution import (
    MomentError,
    evolution_identities,
    extract_expansions,
    extrapolate,
    finiteness_moments,
    fit_inverse_powers,
    h0_moment_check,
    hhat_moment_check,
    k_minus3,
    kerr_invariance_experiment,
    slow_decay_growth_check,
    total_quantities,
)
from quasilocal.isometric_embedding import h0_minus2


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def test_fit_inverse_powers_exact(rng):
    """A polynomial in 1/r is recovered exactly."""
    radii = np.geomspace(10, 1000, 7)
    c = rng.normal(size=(4, 3))
    samples = np.array([sum(c[k] * r**-k for k in range(4)) for r in radii])
    coef, misfit = fit_inverse_powers(radii, samples, 4)
    assert np.max(np.abs(np.array(coef) - c)) < 1e-9
    assert misfit < 1e-12


def test_extrapolate_error_bar():
    """The error bar has the size of the error from an unmodelled 1/r^3 term."""
    radii = np.geomspace(50, 1600, 8)
    clean, err_clean = extrapolate(radii, 2.0 + 3.0 / radii - 1.0 / radii**2)
    assert abs(clean - 2.0) < 1e-12 and err_clean < 1e-12
    dirty, err = extrapolate(radii, 2.0 + 3.0 / radii + 500.0 / radii**3)
    assert 0.3 < err / abs(dirty - 2.0) < 3.0


def test_expansions_need_five_radii(grid8):
    """Too few radii raise ValueError."""
    with pytest.raises(ValueError):
        extract_expansions(MODELS["minkowski"], [10.0, 20.0, 40.0], grid8)


def test_expansions_minkowski(grid8):
    """Minkowski coordinate spheres have vanishing corrections."""
    series = extract_expansions(MODELS["minkowski"], SWEEP, grid8)
    for s in series.values():
        # the subleading fit amplifies rounding of r^2 (h - 2/r) at large r
        assert np.max(np.abs(s.coeffs[0])) < 1e-10
        assert np.max(np.abs(s.coeffs[1])) < 1e-8


def test_expansions_schwarzschild(grid8):
    """Isotropic Schwarzschild: sigma1 = 2M sigma~, h^(-2) = -4M, alpha = 0."""
    series = extract_expansions(MODELS["schwarzschild"], SWEEP, grid8)
    assert np.max(np.abs(series["sigma"].coefficient(1) - 2 * s2.round_metric(grid8))) < 1e-8
    assert np.max(np.abs(series["hnorm"].coefficient(-2) + 4.0)) < 1e-8
    assert np.max(np.abs(series["alpha"].coefficient(-1))) < 1e-12
    # (2/r + 4 psi'/psi) / psi^2 with psi = 1 + M/2r is 2/r - 4M/r^2 + 9M^2/(2r^3) + ...
    assert np.max(np.abs(series["hhat"].coefficient(-3) - 4.5)) < 1e-5


# ---------------------------------------------------------------------------
# finiteness moments
# ---------------------------------------------------------------------------


def test_moments_vanish_for_models(grid12):
    """Both finiteness moments vanish for the vacuum models."""
    for name in ("schwarzschild", "boosted"):
        series = extract_expansions(MODELS[name], SWEEP, grid12)
        s1 = series["sigma"].coefficient(1)
        rho_m, curl_m = finiteness_moments(
            grid12, series["hnorm"].coefficient(-2), h0_minus2(grid12, s1),
            series["alpha"].coefficient(-1),
        )
        assert np.max(np.abs(rho_m)) < 1e-7 and np.max(np.abs(curl_m)) < 1e-7


def test_constructed_rho_violation(grid8):
    """An X~^3 component in h0 - h has moment 4 pi c / 3."""
    c = 0.7
    zero = np.zeros(grid8.shape)
    rho_m, curl_m = finiteness_moments(grid8, zero, c * grid8.xt[2], np.zeros((2,) + grid8.shape))
    assert np.max(np.abs(rho_m - [0, 0, 4 * np.pi * c / 3])) < 1e-13
    assert np.max(np.abs(curl_m)) < 1e-15


def test_constructed_curl_violation(grid8):
    """The l = 1 rotational covector sin^2 dphi has curl moment of size 8 pi / 3."""
    zero = np.zeros(grid8.shape)
    alpha = np.stack([zero, grid8.sin**2])
    _, curl_m = finiteness_moments(grid8, zero, zero, alpha)
    assert np.max(np.abs(curl_m[:2])) < 1e-13
    assert abs(abs(curl_m[2]) - 8 * np.pi / 3) < 1e-12


def test_total_quantities_rejects_violation(grid12):
    """A series with a non-zero rho moment raises MomentError."""
    series = extract_expansions(MODELS["schwarzschild"], SWEEP, grid12)
    h = series["hnorm"]
    bad = dataclasses.replace(h, coeffs=[h.coeffs[0] + 0.1 * grid12.xt[2], h.coeffs[1]])
    series = dict(series, hnorm=bad)
    with pytest.raises(MomentError):
        total_quantities(MODELS["schwarzschild"], SWEEP, grid12, series=series)


def test_k_minus3_round_rescaling(grid8):
    """sigma1 = c sigma~ rescales the radius, so K^(-3) = -c."""
    assert np.max(np.abs(k_minus3(grid8, 0.8 * s2.round_metric(grid8)) + 0.8)) < 1e-12


def test_hhat_moment_routes_agree(grid12):
    """Direct fit and the K^(-3) route give the same hhat^(-2) moment."""
    for name in ("schwarzschild", "boosted"):
        direct, via_k = hhat_moment_check(grid12, extract_expansions(MODELS[name], SWEEP, grid12))
        assert np.max(np.abs(direct - via_k)) < 1e-8


def test_h0_moment_routes_agree(grid12, rng):
    """Linearized and nonlinear h0^(-2) moments agree for r^2 sigma~ + r sigma1."""
    s1 = random_sigma1(grid12, rng, lmax=2, scale=0.2)
    rnd = s2.round_metric(grid12)
    out = h0_moment_check(grid12, lambda r: r * r * rnd + r * s1, np.geomspace(100, 3200, 6))
    assert np.max(np.abs(out["linear"])) < 1e-8
    assert np.max(np.abs(out["linear"] - out["nonlinear"])) < 1e-8


# ---------------------------------------------------------------------------
# total quantities and evolution
# ---------------------------------------------------------------------------


def test_minkowski_totals_vanish(sweeps):
    """Minkowski: e, p, C and J all vanish and the massless branch is taken."""
    tq = sweeps.totals("minkowski")
    assert tq.diagnostics["massless"]
    assert abs(tq.adm.e) < 1e-9 and np.max(np.abs(tq.adm.p)) < 1e-9
    assert np.max(np.abs(tq.C)) < 1e-9 and np.max(np.abs(tq.J)) < 1e-9


def test_table_rows_carry_diagnostics(sweeps):
    """Each row records r, t and solver diagnostics."""
    tq = sweeps.totals("schwarzschild")
    assert [row["r"] for row in tq.table] == list(SWEEP)
    for row in tq.table:
        assert row["t"] == 0.0 and row["residual"] < row["threshold"]
        assert row["embedding_residual"] < 1e-7


def test_static_evolution_is_trivial(grid8):
    """Schwarzschild totals do not move in time."""
    ev = evolution_identities(MODELS["schwarzschild"], SWEEP, grid8)
    assert np.max(np.abs(ev["dC"])) < 1e-10 and np.max(np.abs(ev["dJ"])) < 1e-10
    assert np.max(np.abs(ev["h0_m3_drift"])) < 1e-10
    assert np.max(np.abs(ev["h_m3_rate"])) < 1e-10


def test_boosted_lemma_checks(sweeps):
    """d/dt of the h0^(-3) moment vanishes and that of h^(-3) equals -8 pi p."""
    ev = sweeps.evolution()
    assert np.max(np.abs(ev["h0_m3_drift"])) < 1e-4
    assert np.max(np.abs(ev["h_m3_rate"] - ev["minus_p"])) < 1e-4


def test_kerr_profile_must_be_sublinear(grid8):
    """A profile growing like R is rejected."""
    with pytest.raises(ValueError):
        kerr_invariance_experiment(1.0, 0.5, SWEEP, grid8, profiles={"lin": lambda R: R * grid8.xt[2] * 1.2})


# ---------------------------------------------------------------------------
# slow decay
# ---------------------------------------------------------------------------


def test_slow_decay_minkowski(grid8):
    """Minkowski: both integrals vanish identically."""
    out = slow_decay_growth_check(MODELS["minkowski"], SWEEP, grid8)
    assert np.all(out["h_moment"] <= out["floors"]) and np.all(out["j_moment"] <= out["floors"])


@pytest.mark.parametrize("name", ["schwarzschild", "boosted"])
def test_slow_decay_at_most_logarithmic(grid12, name):
    """Fitted growth exponents of both integrals stay below 0.1."""
    out = slow_decay_growth_check(MODELS[name], SWEEP, grid12)
    assert out["h_exponent"] < 0.1 and out["j_exponent"] < 0.1
