"""Total conserved quantities at spatial infinity and their time evolution.

Expansion coefficients in ``1/r`` are fitted node by node from sweeps of
coordinate spheres.  Total angular momentum and center of mass come from
optimal embeddings at a sweep of radii, evaluated on the Killing fields
carried along by the pure boost ``A(r)`` with ``A(r) d0 = T0(r)``, and
extrapolated with ``c0 + c1/r + c2/r^2``.  Time derivatives use a five-point stencil over
slices of an exact solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import s2_spectral as s2
from .conserved_quantities import dual_element, evaluate, lorentz_generators
from .isometric_embedding import embed_r3_newton, h0_minus2, mean_curvature_r3
from .optimal_embedding import (
    AdmQuantities,
    LeadingOrderSolution,
    OptimalEmbeddingError,
    adm_from_leading,
    leading_order_residual,
    solve_leading_order,
    solve_optimal_finite_r,
    spatial_embedding,
)
from .spacetime_samplers import (
    KerrBL,
    coordinate_sphere_mean_curvature,
    coordinate_sphere_surface_data,
    kerr_slice_surface_data,
)
from .surface_geometry import Embedding31, boost_matrix, energy_terms, reference_data_from_embedding

__all__ = [
    "AsymptoticSeries",
    "TotalQuantities",
    "MomentError",
    "fit_inverse_powers",
    "extrapolate",
    "extract_expansions",
    "leading_solution",
    "finiteness_moments",
    "k_minus3",
    "hhat_moment_check",
    "h0_moment_check",
    "total_quantities",
    "kerr_profiles",
    "kerr_invariance_experiment",
    "evolution_identities",
    "slow_decay_growth_check",
]


class MomentError(RuntimeError):
    """Raised when the finiteness moments fail, so totals are undetermined."""


@dataclass
class AsymptoticSeries:
    """Coefficients of ``r^power`` for a field, fitted from a radial sweep.

    ``coeffs[k]`` multiplies ``r^powers[k]``; ``residual`` is the sup misfit of
    the fitted reconstruction over the sweep, in units of the scaled samples.
    """

    name: str
    powers: list
    coeffs: list
    residual: float
    radii: np.ndarray

    def coefficient(self, power):
        return self.coeffs[self.powers.index(power)]


@dataclass
class TotalQuantities:
    C: np.ndarray
    J: np.ndarray
    adm: AdmQuantities
    C_err: np.ndarray
    J_err: np.ndarray
    table: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


# --- fitting ----------------------------------------------------------------


def fit_inverse_powers(radii, samples, nterms):
    """Least-squares fit ``samples(r) = sum_k c_k r^-k`` for ``k < nterms``.

    ``samples`` has the radius on axis 0.  Returns the coefficient arrays and
    the sup misfit.
    """
    radii = np.asarray(radii, dtype=float)
    samples = np.asarray(samples, dtype=float)
    nterms = min(nterms, len(radii))
    A = np.vstack([radii ** (-k) for k in range(nterms)]).T
    flat = samples.reshape(len(radii), -1)
    # column scaling keeps the normal equations well conditioned
    scale = np.max(np.abs(A), axis=0)
    coef = np.linalg.lstsq(A / scale, flat, rcond=None)[0] / scale[:, None]
    misfit = float(np.max(np.abs(A @ coef - flat))) if flat.size else 0.0
    return [c.reshape(samples.shape[1:]) for c in coef], misfit


def extrapolate(radii, values, nterms=3):
    """Limit ``c0`` of ``c0 + c1/r + c2/r^2`` with a residual-based error bar.

    The error bar is the larger of the fit misfit and the change of ``c0``
    when the smallest radius is dropped.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    coef, misfit = fit_inverse_powers(radii, values, nterms)
    order = np.argsort(radii)
    coef2, _ = fit_inverse_powers(radii[order[1:]], values[order[1:]], nterms)
    err = np.maximum(misfit, np.abs(coef[0] - coef2[0]))
    return coef[0], err


def extract_expansions(model, radii, grid, t=0.0, nterms=6, tol=1e-6):
    """Fit the expansions of ``sigma``, ``|H|``, ``alpha_H`` and the slice mean curvature.

    Returns a dict of :class:`AsymptoticSeries` keyed by ``sigma`` (powers 1,
    0), ``hnorm`` (-2, -3), ``alpha`` (-1, -2) and ``hhat`` (-2, -3).  Fits
    whose misfit exceeds ``tol`` relative to the samples signal data that are
    not of order one and raise ``ValueError``.  At least one radius more
    than the number of fitted powers is kept so the misfit stays meaningful.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if len(radii) < 5:
        raise ValueError("at least 5 radii are needed")
    nterms = min(nterms, len(radii) - 1)
    rnd = s2.round_metric(grid)
    sig, hn, al, hh = [], [], [], []
    for r in radii:
        d = coordinate_sphere_surface_data(model, t, r, grid)
        sig.append((d.sigma - r * r * rnd) / r)
        hn.append(r * r * (d.hnorm - 2.0 / r))
        al.append(r * d.alpha)
        hh.append(r * r * (coordinate_sphere_mean_curvature(model, t, r, grid) - 2.0 / r))
    out = {}
    for name, samples, powers in (
        ("sigma", sig, [1, 0]),
        ("hnorm", hn, [-2, -3]),
        ("alpha", al, [-1, -2]),
        ("hhat", hh, [-2, -3]),
    ):
        samples = np.array(samples)
        coef, misfit = fit_inverse_powers(radii, samples, nterms)
        size = max(1.0, float(np.max(np.abs(samples))))
        if misfit > tol * size:
            raise ValueError(f"{name}: fit misfit {misfit:.2e}, data are not of order one")
        out[name] = AsymptoticSeries(name, powers, coef[:2], misfit, radii)
    return out


def leading_solution(grid, series, tol=1e-9):
    """Leading-order optimal embedding and the coefficients it was built from."""
    sigma1 = series["sigma"].coefficient(1)
    h_m2 = series["hnorm"].coefficient(-2)
    h0_m2 = h0_minus2(grid, sigma1)
    alpha_m1 = series["alpha"].coefficient(-1)
    sol = solve_leading_order(grid, h_m2, h0_m2, alpha_m1, tol=tol)
    return sol, h_m2, h0_m2, alpha_m1


# --- finiteness moments -------------------------------------------------------


def finiteness_moments(grid, h_m2, h0_m2, alpha_m1, a0=1.0):
    """``int X~^i rho^(-2)`` and ``int X~^i eps~^{ab} nabla~_b alpha^(-1)_a``."""
    rho = (h0_m2 - h_m2) / a0
    rho_moment = grid.integrate(grid.xt * rho)
    curl = -s2.curl_moment(grid, alpha_m1)
    curl_moment = grid.integrate(grid.xt * curl)
    return rho_moment, curl_moment


def k_minus3(grid, sigma1):
    """``K^(-3) = (-tr sigma1 + nabla~^a nabla~^b sigma1_ab - Lap~ tr sigma1) / 2``.

    The coefficient of ``r^-3`` in the Gauss curvature of ``r^2 sigma~ + r sigma1``.
    """
    rnd = s2.round_metric(grid)
    tr = sigma1[0, 0] + sigma1[1, 1] / grid.sin**2
    ddiv = s2.divergence(grid, rnd, s2.divergence_tensor(grid, rnd, sigma1))
    return 0.5 * (-tr + ddiv - s2.laplacian_round(grid, tr))


def hhat_moment_check(grid, series):
    """Moment ``int X~^i hhat^(-2)`` from the fitted mean curvature and via ``K^(-3)``."""
    direct = grid.integrate(grid.xt * series["hhat"].coefficient(-2))
    via_k = grid.integrate(grid.xt * k_minus3(grid, series["sigma"].coefficient(1)))
    return direct, via_k


def h0_moment_check(grid, sigma_of_r, radii):
    """Moment ``int X~^i h0^(-2)`` from the linearized system and from nonlinear embeddings.

    ``sigma_of_r(r)`` returns the metric of the surface at radius r.  The
    second route embeds each metric into R^3, fits the mean curvature and
    also returns the fitted ``h0^(-3)``.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    rnd = s2.round_metric(grid)
    sig, h0 = [], []
    X, X_r = None, None
    for r in radii:
        sigma = sigma_of_r(r)
        sig.append((sigma - r * r * rnd) / r)
        init = None if X is None else X * (r / X_r)
        res = embed_r3_newton(grid, sigma, init, fail_tol=1e-7)
        X, X_r = res.X, r
        h0.append(r * r * (mean_curvature_r3(grid, res.X, sigma) - 2.0 / r))
    sig_c, _ = fit_inverse_powers(radii, np.array(sig), 4)
    h0_c, misfit = fit_inverse_powers(radii, np.array(h0), 4)
    linear = grid.integrate(grid.xt * h0_minus2(grid, sig_c[0]))
    nonlinear = grid.integrate(grid.xt * h0_c[0])
    return dict(linear=linear, nonlinear=nonlinear, h0_m2=h0_c[0], h0_m3=h0_c[1], misfit=misfit)


# --- total quantities ------------------------------------------------------------


def _moment_tolerance(scale):
    return 1e-7 * max(1.0, scale)


def _rest_init(grid, sol, r):
    X = np.concatenate([sol.X0_0[None], r * grid.xt])
    return Embedding31(X, sol.a)


def _leading_or_rest(grid, series, mtol):
    """Leading-order solution, or the rest observer with ``X0 = 0`` for massless data."""
    sigma1 = series["sigma"].coefficient(1)
    h_m2 = series["hnorm"].coefficient(-2)
    h0_m2 = h0_minus2(grid, sigma1)
    alpha_m1 = series["alpha"].coefficient(-1)
    massless = abs(grid.integrate(h0_m2 - h_m2)) / (8 * np.pi) < mtol
    if massless:
        zero = np.zeros(grid.shape)
        sol = LeadingOrderSolution(zero, np.array([1.0, 0, 0, 0]), h0_m2 - h_m2, zero)
    else:
        sol = solve_leading_order(grid, h_m2, h0_m2, alpha_m1)
    return sol, h_m2, h0_m2, alpha_m1, massless


def _per_radius(grid, data, init, tol, scale, pushforward=False):
    emb = solve_optimal_finite_r(grid, data, init, tol=tol, scale=scale)
    A = boost_matrix(emb.T0)
    if pushforward:
        gens = [K.transform(A) for K in lorentz_generators()]
    else:
        gens = [K.frame_map(A) for K in lorentz_generators()]
    ref = reference_data_from_embedding(grid, emb)
    vals = np.array([evaluate(grid, data, emb, K, ref) for K in gens])
    dual = dual_element(grid, data, emb, ref)
    return emb, vals, dual


def total_quantities(model, radii, grid, t=0.0, tol=1e-8, series=None, check_moments=True,
                     pushforward=False):
    """Total center of mass ``C``, angular momentum ``J`` and ADM data of a slice.

    For each radius the optimal embedding is solved starting from the
    leading-order solution.  ``A(r)`` acts on the coordinate vectors of each
    generator, ``K^a(X) A d_a``; with ``pushforward=True`` the Lorentz
    pushforward ``A K(A^-1 X)`` is used instead, which rescales the center
    of mass of a moving system by its Lorentz factor.  ``J_1, J_2, J_3`` pair with the rotations
    ``X^2 d3 - X^3 d2``, ``X^3 d1 - X^1 d3``, ``X^1 d2 - X^2 d1`` and
    ``C^i m`` with ``X^i d0 + X^0 d_i``.  Raises :class:`MomentError` when the
    finiteness moments fail.  Data without a positive energy direction (the
    Minkowski slices) keep the rest observer; ``C`` then holds the limits of
    the mass-weighted integrals ``m C`` since ``m`` vanishes.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    scale = model.mass_scale
    if series is None:
        series = extract_expansions(model, radii, grid, t)
    mtol = _moment_tolerance(scale)
    sol, h_m2, h0_m2, alpha_m1, massless = _leading_or_rest(grid, series, mtol)
    rho_mom, curl_mom = finiteness_moments(grid, h_m2, h0_m2, alpha_m1, sol.a[0])
    if check_moments and max(np.max(np.abs(rho_mom)), np.max(np.abs(curl_mom))) > mtol:
        raise MomentError(
            f"finiteness moments fail: rho {np.max(np.abs(rho_mom)):.2e}, curl {np.max(np.abs(curl_mom)):.2e}"
        )
    if massless:
        adm_leading = AdmQuantities(0.0, np.zeros(3), 0.0)
    else:
        adm_leading = adm_from_leading(grid, sol, h_m2, h0_m2, alpha_m1)
    table, vals, pvec = [], [], []
    for r in radii:
        data = coordinate_sphere_surface_data(model, t, r, grid)
        emb, v, dual = _per_radius(grid, data, _rest_init(grid, sol, r), tol, scale, pushforward)
        vals.append(v)
        pvec.append(dual.p)
        table.append(dict(r=float(r), t=float(t), values=v, p=dual.p, T0=emb.T0,
                          iterations=emb.info["iterations"], residual=emb.info["residual"],
                          threshold=emb.info["threshold"],
                          embedding_residual=emb.info["embedding_residual"]))
    vals = np.array(vals)
    pvec = np.array(pvec)
    lim, err = extrapolate(radii, vals)
    p_lim, p_err = extrapolate(radii, pvec)
    e = float(p_lim[0])
    p = p_lim[1:]
    m = float(np.sqrt(max(e * e - p @ p, 0.0)))
    J, J_err = lim[:3], err[:3]
    if massless:
        C, C_err = lim[3:], err[3:]
    elif m <= 0:
        raise OptimalEmbeddingError("extrapolated energy-momentum is not timelike")
    else:
        C, C_err = lim[3:] / m, err[3:] / m
    diag = dict(
        rho_moment=rho_mom,
        curl_moment=curl_mom,
        adm_leading=adm_leading,
        leading_residual=leading_order_residual(grid, sol, alpha_m1),
        p_err=p_err,
        a=sol.a,
        massless=massless,
    )
    return TotalQuantities(C, J, AdmQuantities(e, p, m), C_err, J_err, table, diag)


# --- Kerr slice invariance ---------------------------------------------------------


def kerr_profiles(grid):
    """Slice profiles ``f(R, .)``: zero, a constant, ``sqrt(R) Y20`` and ``R^0.9 X~^3``."""
    y20 = np.real(grid.ylm(2, 0))
    y20 = y20 / np.max(np.abs(y20))
    return {
        "zero": lambda R: np.zeros(grid.shape),
        "const10": lambda R: np.full(grid.shape, 10.0),
        "sqrtR_Y20": lambda R: np.sqrt(R) * y20,
        "R0.9_X3": lambda R: R**0.9 * grid.xt[2],
    }


def kerr_invariance_experiment(m, a, radii, grid, profiles=None, tol=1e-6):
    """Extrapolated angular momentum of ``{t = f, r = R}`` in Kerr for several profiles.

    Each surface is solved for its optimal embedding starting from
    ``X0 = sqrt(1 - 2m/R) f`` and the round spatial sphere; the observer
    starts at rest.  Returns per-profile limits, the largest pairwise
    deviation and the per-radius deviation from the first profile.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    profiles = kerr_profiles(grid) if profiles is None else profiles
    scale = KerrBL(m, a).mass_scale
    out, per_r = {}, {}
    for name, prof in profiles.items():
        ratio = max(float(np.max(np.abs(prof(R)))) / R for R in radii)
        growth = float(np.max(np.abs(prof(radii[-1])))) / radii[-1]
        if growth >= 1.0 or ratio >= 1.0:
            raise ValueError(f"profile {name} is not o(r) over the sweep")
        rows = []
        for R in radii:
            f = prof(R)
            data = kerr_slice_surface_data(m, a, R, f, grid)
            X0 = np.sqrt(1.0 - 2.0 * m / R) * f
            init = Embedding31(np.concatenate([X0[None], R * grid.xt]), np.array([1.0, 0, 0, 0]))
            emb, v, _ = _per_radius(grid, data, init, tol, scale)
            rows.append(v)
        rows = np.array(rows)
        lim, err = extrapolate(radii, rows)
        out[name] = dict(J=lim[:3], J_err=err[:3], C_times_m=lim[3:], per_radius=rows)
        per_r[name] = rows[:, :3]
    names = list(out)
    J = np.array([out[n]["J"] for n in names])
    dev = float(max(np.max(np.abs(J[i] - J[k])) for i in range(len(J)) for k in range(len(J))))
    base = per_r[names[0]]
    decay = {n: np.max(np.abs(per_r[n] - base), axis=1) for n in names[1:]}
    return dict(profiles=out, max_deviation=dev, per_radius_deviation=decay, radii=radii)


# --- evolution ------------------------------------------------------------------------


def _five_point(vals, dt):
    v = np.asarray(vals, dtype=float)
    return (v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * dt)


def evolution_identities(model, radii, grid, t0=0.0, dt=None, tol=1e-8, pushforward=False):
    """Time derivatives of ``C`` and ``J`` against ``p/e``, with the lemma-level checks.

    ``dt`` defaults to ``0.1`` times the mass scale.  The lemma checks are the
    drift of ``int X~^i h0^(-3)`` and the comparison of
    ``1/8pi int X~^i d_t h^(-3)`` with ``-p^i``.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    scale = model.mass_scale
    dt = 0.1 * scale if dt is None else dt
    times = t0 + dt * np.arange(-2, 3)
    totals, h3, h03 = [], [], []
    for t in times:
        series = extract_expansions(model, radii, grid, t)
        totals.append(total_quantities(model, radii, grid, t, tol=tol, series=series,
                                      pushforward=pushforward))
        h3.append(grid.integrate(grid.xt * series["hnorm"].coefficient(-3)))
        h0c = h0_moment_check(grid, lambda r, t=t: coordinate_sphere_surface_data(model, t, r, grid).sigma,
                              radii)
        h03.append(grid.integrate(grid.xt * h0c["h0_m3"]))
    C = np.array([q.C for q in totals])
    J = np.array([q.J for q in totals])
    mid = totals[2]
    return dict(
        times=times,
        dC=_five_point(C, dt),
        dJ=_five_point(J, dt),
        p_over_e=mid.adm.p / mid.adm.e,
        adm=mid.adm,
        C=C,
        J=J,
        h0_m3_drift=_five_point(np.array(h03), dt),
        h_m3_rate=_five_point(np.array(h3), dt) / (8 * np.pi),
        minus_p=-mid.adm.p,
        totals=totals,
    )


# --- slow decay -------------------------------------------------------------------------


def _power_fit(radii, vals, floors):
    """Log-log slope of ``vals``; ``-inf`` when every value is below its rounding floor."""
    vals = np.abs(np.asarray(vals, dtype=float))
    if np.all(vals <= floors):
        return float("-inf")
    A = np.vstack([np.log(radii), np.ones_like(radii)]).T
    return float(np.linalg.lstsq(A, np.log(vals + floors), rcond=None)[0][0])


def slow_decay_growth_check(model, radii, grid, t=0.0):
    """Growth of ``int X^i (|H0| - |H|)`` and ``int (X^i d_a X^j - X^j d_a X^i) sigma^{ab} j_b``.

    The embedding at each radius is the leading-order time component with
    the matching spatial isometric embedding and observer; massless data
    keep the rest observer and ``X0 = 0``.  Returns the
    per-radius sup norms and fitted power exponents; values below ``1e-12``
    times the size of the cancelling terms count as rounding noise.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    series = extract_expansions(model, radii, grid, t)
    sol = _leading_or_rest(grid, series, _moment_tolerance(model.mass_scale))[0]
    i1, i2, size = [], [], []
    for r in radii:
        data = coordinate_sphere_surface_data(model, t, r, grid)
        sp = spatial_embedding(grid, data.sigma, sol.X0_0, r * grid.xt, align_to=r * grid.xt)
        emb = Embedding31(np.concatenate([sol.X0_0[None], sp.X]), sol.a)
        ref = reference_data_from_embedding(grid, emb)
        terms = energy_terms(grid, data, emb, ref)
        w = terms.area
        Xs = emb.X[1:]
        i1.append(grid.integrate(Xs * (ref.h0norm - data.hnorm) * w))
        # magnitude of the cancelling terms sets the rounding floor
        size.append(grid.integrate(np.linalg.norm(Xs, axis=0) * data.hnorm * w))
        dX = grid.partials(Xs)
        jup = np.einsum("ab...,b...->a...", terms.sinv, terms.j)
        dj = np.einsum("ai...,a...->i...", dX, jup)
        mom = np.einsum("i...,j...->ij...", Xs, dj)
        mom = mom - np.swapaxes(mom, 0, 1)
        i2.append(grid.integrate(mom * w))
    i1 = np.array(i1)
    i2 = np.array(i2)
    n1 = np.max(np.abs(i1.reshape(len(radii), -1)), axis=1)
    n2 = np.max(np.abs(i2.reshape(len(radii), -1)), axis=1)
    floors = 1e-12 * np.array(size)
    return dict(
        radii=radii,
        h_moment=n1,
        j_moment=n2,
        floors=floors,
        h_exponent=_power_fit(radii, n1, floors),
        j_exponent=_power_fit(radii, n2, floors),
    )
