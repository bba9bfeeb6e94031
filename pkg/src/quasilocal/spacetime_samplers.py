"""Analytic spacetime models and their 3+1 initial data.

Each model provides its 4-metric in quasi-Cartesian coordinates
``(t, x1, x2, x3)`` as a closed-form expression evaluated on :class:`Jet`
objects, so that first and second coordinate derivatives are exact.  The
Cartesian labeling matches the sphere grid: x1 = r sin(th) sin(ph),
x2 = r sin(th) cos(ph), x3 = r cos(th).

Extrinsic curvature follows k_ij = (d_t g_ij - (L_shift g)_ij) / (-2N), which
equals -N Gamma^t_ij of the 4-metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from . import s2_spectral as s2
from .surface_geometry import SurfaceData, SurfaceGeometryError, embedded_surface

__all__ = [
    "Minkowski",
    "SchwarzschildIsotropic",
    "BoostedSchwarzschild",
    "KerrBL",
    "ExteriorError",
    "InitialData",
    "InitialDataSample",
    "metric_arrays",
    "initial_data",
    "sample_initial_data",
    "conjugate_momentum",
    "constraint_residual",
    "constraint_divergence_check",
    "coordinate_sphere_surface_data",
    "coordinate_sphere_mean_curvature",
    "kerr_slice_surface_data",
    "model_from_name",
]


class ExteriorError(ValueError):
    """Raised when a sample point lies inside the excluded strong-field region."""


# --- models ---------------------------------------------------------------


@dataclass(frozen=True)
class Minkowski:
    name = "minkowski"

    def metric(self, t, x1, x2, x3):
        return _diag(-1.0, 1.0, 1.0, 1.0)

    def check_exterior(self, t, pts):
        return None

    @property
    def mass_scale(self):
        return 1.0


@dataclass(frozen=True)
class SchwarzschildIsotropic:
    """Schwarzschild in isotropic coordinates with conformal factor 1 + M/2rho."""

    M: float
    name = "schwarzschild"

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("mass must be positive")

    def metric(self, t, x1, x2, x3):
        rho = jets.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
        q = (self.M / 2.0) / rho
        psi = 1.0 + q
        lapse = (1.0 - q) / psi
        psi4 = psi**4
        return _diag(-(lapse * lapse), psi4, psi4, psi4)

    def check_exterior(self, t, pts):
        rho = np.sqrt(np.sum(np.asarray(pts) ** 2, axis=0))
        if np.any(rho <= 3 * self.M):
            raise ExteriorError("point within rho <= 3M")

    @property
    def mass_scale(self):
        return self.M


@dataclass(frozen=True)
class BoostedSchwarzschild:
    """Isotropic Schwarzschild seen by observers boosted along x3.

    The coordinates satisfy y0 = g t + b g x3 and y3 = g x3 + b g t, so the
    hole moves with velocity -b along x3.
    """

    M: float
    beta: float
    name = "boosted-schwarzschild"

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("mass must be positive")
        if not abs(self.beta) < 1:
            raise ValueError("|beta| must be < 1")

    @property
    def gamma(self):
        return 1.0 / np.sqrt(1.0 - self.beta**2)

    def rest_radius(self, t, x1, x2, x3):
        gm, b = self.gamma, self.beta
        y3 = gm * x3 + b * gm * t
        return x1 * x1 + x2 * x2 + y3 * y3

    def metric(self, t, x1, x2, x3):
        gm, b = self.gamma, self.beta
        rho = jets.sqrt(self.rest_radius(t, x1, x2, x3))
        q = (self.M / 2.0) / rho
        inv_f2 = ((1.0 - q) / (1.0 + q)) ** 2
        inv_g2 = (1.0 + q) ** 4
        g = _diag(
            (inv_f2 * -1.0 + inv_g2 * b * b) * gm * gm,
            inv_g2,
            inv_g2,
            (inv_f2 * (-b * b) + inv_g2) * gm * gm,
        )
        g[0][3] = g[3][0] = (inv_g2 - inv_f2) * (b * gm * gm)
        return g

    def check_exterior(self, t, pts):
        pts = np.asarray(pts)
        rho2 = self.rest_radius(t, pts[0], pts[1], pts[2])
        if np.any(np.sqrt(rho2) <= 3 * self.M):
            raise ExteriorError("point within rest-frame rho <= 3M")

    @property
    def mass_scale(self):
        return self.M


@dataclass(frozen=True)
class KerrBL:
    """Kerr in Boyer-Lindquist form, written on quasi-Cartesian coordinates.

    With r = |x|, cos(th) = x3/r and sin^2(th) dphi = w/r^2 where
    w = x2 dx1 - x1 dx2, every term is smooth away from the origin.
    """

    m: float
    a: float
    name = "kerr"

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if not abs(self.a) < self.m:
            raise ValueError("|a| must be < m")

    def metric(self, t, x1, x2, x3):
        m, a = self.m, self.a
        r2 = x1 * x1 + x2 * x2 + x3 * x3
        r = jets.sqrt(r2)
        cth = x3 / r
        big_sigma = r2 + (cth * cth) * (a * a)
        delta = r2 - r * (2 * m) + a * a
        xs = (x1, x2, x3)
        dr = [x / r for x in xs]
        # d(x1/r), d(x2/r): components along dx_j
        u = []
        for k in range(2):
            row = []
            for j in range(3):
                term = -(xs[k] * xs[j]) / (r2 * r)
                if j == k:
                    term = term + 1.0 / r
                row.append(term)
            u.append(row)
        w = [x2, -1.0 * x1, None]
        mr_s = (r * m) / big_sigma
        coef_rr = big_sigma / delta - 1.0
        coef_ww = mr_s * (2 * a * a) / (r2 * r2)
        g = [[None] * 4 for _ in range(4)]
        g[0][0] = (1.0 - mr_s * 2.0) * -1.0
        for i in range(3):
            wi = w[i]
            g[0][i + 1] = g[i + 1][0] = 0.0 if wi is None else wi * (mr_s * (-2.0 * a) / r2)
            for j in range(i, 3):
                val = coef_rr * (dr[i] * dr[j])
                if i == j:
                    val = val + 1.0
                val = val + (u[0][i] * u[0][j] + u[1][i] * u[1][j]) * (a * a)
                if w[i] is not None and w[j] is not None:
                    val = val + coef_ww * (w[i] * w[j])
                g[i + 1][j + 1] = g[j + 1][i + 1] = val
        return g

    @property
    def horizon_radius(self):
        return self.m + np.sqrt(self.m**2 - self.a**2)

    def check_exterior(self, t, pts):
        r = np.sqrt(np.sum(np.asarray(pts) ** 2, axis=0))
        if np.any(r <= 2 * self.horizon_radius):
            raise ExteriorError("point within r <= 2 r_+")

    @property
    def mass_scale(self):
        return self.m


def _diag(a, b, c, d):
    g = [[0.0] * 4 for _ in range(4)]
    g[0][0], g[1][1], g[2][2], g[3][3] = a, b, c, d
    return g


def model_from_name(name, **params):
    """Construct a model from its CLI name and parameters."""
    key = name.lower().replace("_", "-")
    if key == "minkowski":
        return Minkowski()
    if key in ("schwarzschild", "schwarzschild-isotropic"):
        return SchwarzschildIsotropic(params.get("mass", 1.0))
    if key == "boosted-schwarzschild":
        return BoostedSchwarzschild(params.get("mass", 1.0), params.get("beta", 0.0))
    if key in ("kerr", "kerr-bl"):
        return KerrBL(params.get("mass", 1.0), params.get("spin", 0.0))
    raise ValueError(f"unknown model {name!r}")


# --- metric evaluation -----------------------------------------------------


def metric_arrays(model, coords, order=1):
    """Metric and coordinate derivatives at points ``coords`` of shape ``(4, ...)``.

    Returns ``(g, dg, ddg)`` with ``dg[l, m, n] = d_l g_mn`` and
    ``ddg[l, k, m, n] = d_l d_k g_mn``; ``ddg`` is ``None`` for order 1.
    """
    coords = np.asarray(coords, dtype=float)
    shape = coords.shape[1:]
    flat = coords.reshape(4, -1)
    n = flat.shape[1]
    var = jets.variables(flat, order=order)
    comps = model.metric(*var)
    g = np.zeros((4, 4, n))
    dg = np.zeros((4, 4, 4, n))
    ddg = np.zeros((4, 4, 4, 4, n)) if order >= 2 else None
    for mu in range(4):
        for nu in range(mu, 4):
            c = comps[mu][nu]
            if isinstance(c, jets.Jet):
                for (a, b) in {(mu, nu), (nu, mu)}:
                    g[a, b] = c.val
                    dg[:, a, b] = c.grad
                    if ddg is not None:
                        ddg[:, :, a, b] = c.hess
            else:
                g[mu, nu] = g[nu, mu] = c
    g = g.reshape((4, 4) + shape)
    dg = dg.reshape((4, 4, 4) + shape)
    if ddg is not None:
        ddg = ddg.reshape((4, 4, 4, 4) + shape)
    return g, dg, ddg


def _inv(m):
    """Pointwise inverse of matrices stored as ``(n, n, ...)``."""
    a = np.moveaxis(np.moveaxis(m, 0, -1), 0, -1)
    return np.moveaxis(np.moveaxis(np.linalg.inv(a), -1, 0), -1, 0)


@dataclass
class InitialData:
    """3+1 data at an array of spatial points (spatial indices 0..2)."""

    g: np.ndarray
    dg: np.ndarray
    k: np.ndarray
    lapse: np.ndarray
    shift: np.ndarray
    ddg: np.ndarray | None = None
    dk: np.ndarray | None = None
    dlapse: np.ndarray | None = None
    dshift: np.ndarray | None = None
    dtg: np.ndarray | None = None


def initial_data(model, t, points, order=1):
    """Slice data ``(g, k)`` of ``model`` at time ``t`` on points ``(3, ...)``.

    With ``order=2`` the spatial derivatives of k and second derivatives of
    g are included.
    """
    points = np.asarray(points, dtype=float)
    model.check_exterior(t, points)
    coords = np.concatenate([np.full((1,) + points.shape[1:], float(t)), points])
    g4, dg4, ddg4 = metric_arrays(model, coords, order=order)
    gi4 = _inv(g4)
    # lower Christoffel Gamma_{m n l}
    G = 0.5 * (np.einsum("nml...->mnl...", dg4) + np.einsum("lmn...->mnl...", dg4) - dg4)
    gtt = gi4[0, 0]
    lapse = 1.0 / np.sqrt(-gtt)
    Gt = np.einsum("m...,mij...->ij...", gi4[0], G)[1:, 1:]
    k = -lapse * Gt
    data = InitialData(
        g=g4[1:, 1:].copy(),
        dg=dg4[1:, 1:, 1:].copy(),
        k=k,
        lapse=lapse,
        shift=g4[0, 1:].copy(),
        dshift=dg4[1:, 0, 1:].copy(),
        dtg=dg4[0, 1:, 1:].copy(),
    )
    dgi = -np.einsum("ma...,lab...,bn...->lmn...", gi4, dg4, gi4)
    data.dlapse = 0.5 * lapse**3 * dgi[1:, 0, 0]
    if order >= 2:
        # dG[l, m, n, q] = d_l Gamma_{m n q}
        dG = 0.5 * (
            np.einsum("lnmq...->lmnq...", ddg4)
            + np.einsum("lqmn...->lmnq...", ddg4)
            - ddg4
        )
        dGt = (
            np.einsum("lm...,mij...->lij...", dgi[:, 0], G)
            + np.einsum("m...,lmij...->lij...", gi4[0], dG)
        )[1:, 1:, 1:]
        data.dk = -data.dlapse[:, None, None] * Gt - lapse * dGt
        data.ddg = ddg4[1:, 1:, 1:, 1:].copy()
    return data


@dataclass
class InitialDataSample:
    """Slice data at a single point, with first and second derivatives."""

    g: np.ndarray
    k: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray | None = None
    dk: np.ndarray | None = None


def sample_initial_data(model, t, point):
    """Exact ``(g, k, dg, ddg, dk)`` of ``model`` at one spatial point."""
    p = np.asarray(point, dtype=float).reshape(3, 1)
    d = initial_data(model, t, p, order=2)
    return InitialDataSample(
        g=d.g[..., 0], k=d.k[..., 0], dg=d.dg[..., 0], ddg=d.ddg[..., 0], dk=d.dk[..., 0]
    )


def conjugate_momentum(g, k):
    """``pi = k - (tr_g k) g`` pointwise for arrays shaped ``(3, 3, ...)``."""
    gi = _inv(g)
    tr = np.einsum("ij...,ij...->...", gi, k)
    return k - tr * g


def _spatial_ricci_scalar(g, dg, ddg):
    gi = _inv(g)
    G = 0.5 * (np.einsum("jki...->kij...", dg) + np.einsum("ikj...->kij...", dg) - dg)
    # G[k, i, j] = Gamma_{k i j}
    Gam = np.einsum("km...,mij...->kij...", gi, G)
    # d_l Gamma_{k i j} = 1/2 (d_l d_i g_kj + d_l d_j g_ki - d_l d_k g_ij)
    dGlow = 0.5 * (
        np.einsum("likj...->lkij...", ddg)
        + np.einsum("ljki...->lkij...", ddg)
        - np.einsum("lkij...->lkij...", ddg)
    )
    dgi = -np.einsum("ka...,lab...,bm...->lkm...", gi, dg, gi)
    dGam = np.einsum("lkm...,mij...->lkij...", dgi, G) + np.einsum(
        "km...,lmij...->lkij...", gi, dGlow
    )
    ric = (
        np.einsum("kkij...->ij...", dGam)
        - np.einsum("jkik...->ij...", dGam)
        + np.einsum("kkl...,lij...->ij...", Gam, Gam)
        - np.einsum("kjl...,lik...->ij...", Gam, Gam)
    )
    return np.einsum("ij...,ij...->...", gi, ric), Gam


def constraint_residual(sample):
    """Hamiltonian and momentum constraint residuals of a sample.

    Returns ``(R + (tr k)^2 - |k|^2, D^j (k_ij - tr k g_ij))``.
    """
    g, dg, ddg, k, dk = sample.g, sample.dg, sample.ddg, sample.k, sample.dk
    if ddg is None or dk is None:
        raise ValueError("second derivatives required")
    R, Gam = _spatial_ricci_scalar(g, dg, ddg)
    gi = _inv(g)
    tr = np.einsum("ij...,ij...->...", gi, k)
    kup = np.einsum("ia...,ab...,bj...->ij...", gi, k, gi)
    ham = R + tr**2 - np.einsum("ij...,ij...->...", kup, k)
    dgi = -np.einsum("ka...,lab...,bm...->lkm...", gi, dg, gi)
    dtr = np.einsum("lij...,ij...->l...", dgi, k) + np.einsum("ij...,lij...->l...", gi, dk)
    pi = k - tr * g
    dpi = dk - dtr[:, None, None] * g - tr * dg
    cov = (
        dpi
        - np.einsum("mli...,mj...->lij...", Gam, pi)
        - np.einsum("mlj...,im...->lij...", Gam, pi)
    )
    mom = np.einsum("jl...,lij...->i...", gi, cov)
    return ham, mom


# --- surfaces in the slice -------------------------------------------------


def _sphere_points(grid, r):
    return r * grid.xt


def _slice_sphere(model, t, r, grid):
    x = _sphere_points(grid, r)
    d = initial_data(model, t, x, order=1)
    g, dg, k = d.g, d.dg, d.k
    gi = _inv(g)
    e = r * grid.frame  # d_a x
    de = r * grid.frame_derivatives  # d_a d_b x
    sigma = np.einsum("ai...,ij...,bj...->ab...", e, g, e)
    G = 0.5 * (np.einsum("jki...->kij...", dg) + np.einsum("ikj...->kij...", dg) - dg)
    Gam = np.einsum("km...,mij...->kij...", gi, G)
    nab = de + np.einsum("kij...,ai...,bj...->abk...", Gam, e, e)
    nu_low = grid.xt
    norm = np.sqrt(np.einsum("i...,ij...,j...->...", nu_low, gi, nu_low))
    nu_low = nu_low / norm
    nu = np.einsum("ij...,j...->i...", gi, nu_low)
    h2 = -np.einsum("abk...,k...->ab...", nab, nu_low)
    sinv = s2.metric_inverse(sigma)
    hmean = np.einsum("ab...,ab...->...", sinv, h2)
    return sigma, sinv, hmean, e, k, nu


def coordinate_sphere_mean_curvature(model, t, r, grid):
    """Mean curvature of the coordinate sphere of radius r inside the slice."""
    return _slice_sphere(model, t, r, grid)[2]


def coordinate_sphere_surface_data(model, t, r, grid):
    """Surface data ``(sigma, |H|, alpha_H)`` of the coordinate sphere of radius r.

    Uses the slice route: mean curvature of the sphere in the slice from its
    second fundamental form, ``|H| = sqrt(h^2 - (tr_S k)^2)`` and
    ``alpha_H = k(nu, .) - d asinh(tr_S k / |H|)``.
    """
    sigma, sinv, hmean, e, k, nu = _slice_sphere(model, t, r, grid)
    kab = np.einsum("ai...,ij...,bj...->ab...", e, k, e)
    trk = np.einsum("ab...,ab...->...", sinv, kab)
    disc = hmean**2 - trk**2
    if np.any(disc <= 0) or np.any(hmean <= 0):
        raise SurfaceGeometryError("mean curvature vector is not spacelike")
    hnorm = np.sqrt(disc)
    knu = np.einsum("i...,ij...,aj...->a...", nu, k, e)
    psi = np.arcsinh(trk / hnorm)
    alpha = knu - grid.partials(psi)
    return SurfaceData(sigma=sigma, hnorm=hnorm, alpha=alpha)


def kerr_slice_surface_data(m, a, R, f, grid, grid_f=None):
    """Surface data of ``{t = f(u), r = R}`` inside Kerr.

    ``f`` is an array of node values (band-limited), the time coordinate of
    the surface.  The surface is treated as a general spacelike 2-surface in
    the 4-dimensional spacetime, with the normal frame built from the mean
    curvature vector.
    """
    model = KerrBL(m, a)
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    X = np.concatenate([f[None], R * grid.xt])
    model.check_exterior(0.0, X[1:])
    return embedded_surface(grid, X, lambda c: metric_arrays(model, c, order=1)[:2]).surface_data()


# --- constraint-divergence expansions -------------------------------------


def _pi_on_sphere(model, t, r, grid):
    """Spherical components of pi and its radial derivative data on a sphere."""
    x = _sphere_points(grid, r)
    d = initial_data(model, t, x, order=2)
    pi = conjugate_momentum(d.g, d.k)
    gi = _inv(d.g)
    tr = np.einsum("ij...,ij...->...", gi, d.k)
    dgi = -np.einsum("ka...,lab...,bm...->lkm...", gi, d.dg, gi)
    dtr = np.einsum("lij...,ij...->l...", dgi, d.k) + np.einsum("ij...,lij...->l...", gi, d.dk)
    dpi = d.dk - dtr[:, None, None] * d.g - tr * d.dg
    n = grid.xt
    e = r * grid.frame
    return d, pi, dpi, n, e


def divergence_expansions(model, t, r, grid):
    """Both sides of the radial and angular divergence expansions of pi at radius r.

    Returns a dict with the full divergences (which vanish in vacuum) and the
    truncated expressions ``d_r pi_rr + nabla^a pi_ar + 2 pi_rr/r - g^ab pi_ab/r``
    and ``d_r pi_ar + 2 pi_ar/r + nabla_sigma^b pi_ba``, plus the spherical
    components of pi.
    """
    d, pi, dpi, n, e = _pi_on_sphere(model, t, r, grid)
    pi_rr = np.einsum("i...,ij...,j...->...", n, pi, n)
    pi_ar = np.einsum("ai...,ij...,j...->a...", e, pi, n)
    pi_ab = np.einsum("ai...,ij...,bj...->ab...", e, pi, e)
    dr_pi_rr = np.einsum("l...,i...,j...,lij...->...", n, n, n, dpi)
    dr_pi_ar = pi_ar / r + np.einsum("l...,ai...,j...,lij...->a...", n, e, n, dpi)
    sigma = np.einsum("ai...,ij...,bj...->ab...", e, d.g, e)
    sinv = s2.metric_inverse(sigma)
    div_ar = s2.divergence(grid, sigma, pi_ar)
    radial_trunc = dr_pi_rr + div_ar + 2 * pi_rr / r - np.einsum("ab...,ab...->...", sinv, pi_ab) / r
    angular_trunc = dr_pi_ar + 2 * pi_ar / r + s2.divergence_tensor(grid, sigma, pi_ab)
    # full divergence from the 3-dimensional momentum constraint
    sample = InitialDataSample(g=d.g, k=d.k, dg=d.dg, ddg=d.ddg, dk=d.dk)
    _, mom = constraint_residual(sample)
    full_r = np.einsum("i...,i...->...", mom, n)
    full_a = np.einsum("i...,ai...->a...", mom, e)
    return dict(
        radial_full=full_r,
        radial_truncated=radial_trunc,
        angular_full=full_a,
        angular_truncated=angular_trunc,
        pi_rr=pi_rr,
        pi_ar=pi_ar,
        pi_ab=pi_ab,
        sigma=sigma,
    )


def _slope(rs, vals):
    rs = np.asarray(rs, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if np.all(vals == 0):
        return float("-inf")
    A = np.vstack([np.log(rs), np.ones_like(rs)]).T
    return float(np.linalg.lstsq(A, np.log(vals), rcond=None)[0][0])


def constraint_divergence_check(model, radii, grid, t=0.0):
    """Decay exponents of the truncation errors in the divergence expansions.

    For each radius the sup norms of (full - truncated) are recorded; the
    fitted log-log slopes are returned together with the extraction check
    ``pi_ar^(-1) + nabla~^b pi^(0)_ab``, the leading angular constraint.
    """
    radii = np.asarray(radii, dtype=float)
    rad, ang = [], []
    pars, pabs = [], []
    for r in radii:
        ex = divergence_expansions(model, t, r, grid)
        rad.append(np.max(np.abs(ex["radial_full"] - ex["radial_truncated"])))
        diff = ex["angular_full"] - ex["angular_truncated"]
        ang.append(np.max(np.hypot(diff[0], diff[1] / grid.sin)))
        pars.append(ex["pi_ar"])
        pabs.append(ex["pi_ab"])
    # leading coefficients: pi_ar ~ pi_ar^(-1)/r * r (coordinate comps carry r)
    pars = np.array(pars)
    pabs = np.array(pabs)
    coef_ar = _leading_fit(radii, pars, power=-1)
    coef_ab = _leading_fit(radii, pabs, power=0)
    div0 = s2.divergence_tensor(grid, s2.round_metric(grid), coef_ab)
    extraction = np.max(np.abs(coef_ar + div0))
    return dict(
        radii=radii,
        radial_error=np.array(rad),
        angular_error=np.array(ang),
        radial_exponent=_slope(radii, rad),
        angular_exponent=_slope(radii, ang),
        extraction_residual=float(extraction),
    )


def _leading_fit(radii, samples, power, nterms=4):
    """Leading coefficient of ``samples(r) = r^power (c0 + c1/r + ...)``."""
    radii = np.asarray(radii, dtype=float)
    scaled = samples / radii.reshape((-1,) + (1,) * (samples.ndim - 1)) ** power
    nterms = min(nterms, len(radii))
    A = np.vstack([radii ** (-j) for j in range(nterms)]).T
    flat = scaled.reshape(len(radii), -1)
    coef = np.linalg.lstsq(A, flat, rcond=None)[0]
    return coef[0].reshape(samples.shape[1:])
