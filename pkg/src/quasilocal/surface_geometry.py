"""Geometry of spacelike 2-surfaces and the quasi-local energy integrands.

Conventions: signature (-,+,+,+); covectors carry lower coordinate indices
(theta, phi); the normal frame of a surface with spacelike mean curvature
vector H is ``e3 = -H/|H|`` (outward) and ``e4`` the future unit normal
orthogonal to ``e3``; the connection one-form in mean curvature gauge is
``alpha_H(v) = <nabla_v e3, e4> = -<nabla_v e4, e3>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import s2_spectral as s2

__all__ = [
    "ETA",
    "SurfaceGeometryError",
    "SurfaceData",
    "Embedding31",
    "ReferenceData",
    "EmbeddedSurface",
    "embedded_surface",
    "boost_matrix",
    "check_observer",
    "tau",
    "theta_field",
    "rho_field",
    "j_covector",
    "optimal_residual",
    "reference_data_from_embedding",
    "quasilocal_energy",
    "energy_terms",
]

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])


class SurfaceGeometryError(ValueError):
    """Raised for degenerate surfaces or non-spacelike mean curvature."""


@dataclass
class SurfaceData:
    """The physical triple ``(sigma, |H|, alpha_H)`` on a sphere grid."""

    sigma: np.ndarray
    hnorm: np.ndarray
    alpha: np.ndarray
    grid: s2.SphereGrid | None = None

    def __post_init__(self):
        if np.any(self.hnorm <= 0):
            raise SurfaceGeometryError("|H| must be positive")
        s2.metric_inverse(self.sigma)


@dataclass
class Embedding31:
    """Map ``X: S^2 -> R^{3,1}`` (node values, shape ``(4, nlat, nphi)``) with observer T0."""

    X: np.ndarray
    T0: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.T0 = np.asarray(self.T0, dtype=float)
        check_observer(self.T0)


@dataclass
class ReferenceData:
    h0norm: np.ndarray
    alpha0: np.ndarray
    sigma_hat: np.ndarray
    h_hat: np.ndarray
    H_hat: np.ndarray


def check_observer(T0, tol=1e-12):
    T0 = np.asarray(T0, dtype=float)
    if T0.shape != (4,) or T0[0] <= 0 or abs(T0 @ ETA @ T0 + 1) > tol * max(1.0, T0[0] ** 2):
        raise ValueError("observer must be a future timelike unit 4-vector")
    return T0


def boost_matrix(T0):
    """Pure boost ``A`` with ``A (1,0,0,0) = T0``."""
    T0 = check_observer(T0)
    a0, a = T0[0], T0[1:]
    A = np.empty((4, 4))
    A[0, 0] = a0
    A[0, 1:] = a
    A[1:, 0] = a
    A[1:, 1:] = np.eye(3) + np.outer(a, a) / (1.0 + a0)
    return A


# --- embedded surfaces -----------------------------------------------------


@dataclass
class EmbeddedSurface:
    """Intrinsic and normal-bundle geometry of a surface in a 4-metric."""

    grid: s2.SphereGrid
    X: np.ndarray
    dX: np.ndarray
    ddX: np.ndarray
    g: np.ndarray
    sigma: np.ndarray
    H: np.ndarray
    hnorm: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    alpha: np.ndarray

    def surface_data(self):
        return SurfaceData(self.sigma, self.hnorm, self.alpha, self.grid)


def _inner(g, u, v):
    return np.einsum("mn...,m...,n...->...", g, u, v)


def embedded_surface(grid, X, metric=None):
    """Geometry of the surface with quasi-Cartesian node values ``X`` (4 components).

    ``metric`` maps coordinates of shape ``(4, ...)`` to ``(g, dg)`` with
    ``dg[l, m, n] = d_l g_mn``; ``None`` means Minkowski space.
    """
    X = np.asarray(X, dtype=float)
    c = grid.analysis(X)
    dX = grid.partials_from_coeffs(c)  # [a, mu]
    ddX = grid.second_partials_from_coeffs(c)  # [a, b, mu]
    shape = grid.shape
    if metric is None:
        g = np.broadcast_to(ETA[:, :, None, None], (4, 4) + shape)
        gi = g
        Gam = None
        n = np.zeros((4,) + shape)
        n[0] = 1.0
    else:
        g, dg = metric(X)
        gi = np.moveaxis(np.moveaxis(np.linalg.inv(np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)), -1, 0), -1, 0)
        low = 0.5 * (np.einsum("nml...->mnl...", dg) + np.einsum("lmn...->mnl...", dg) - dg)
        Gam = np.einsum("km...,mnl...->knl...", gi, low)
        n = -gi[:, 0] / np.sqrt(-gi[0, 0])
    sigma = np.einsum("mn...,am...,bn...->ab...", g, dX, dX)
    sinv = s2.metric_inverse(sigma)
    nab = ddX.copy()
    if Gam is not None:
        nab = nab + np.einsum("knl...,an...,bl...->abk...", Gam, dX, dX)
    low_t = np.einsum("mn...,abm...,cn...->abc...", g, nab, dX)
    up_t = np.einsum("cd...,abc...->abd...", sinv, low_t)
    normal = nab - np.einsum("abd...,dm...->abm...", up_t, dX)
    H = np.einsum("ab...,abm...->m...", sinv, normal)
    hh = _inner(g, H, H)
    if np.any(hh <= 0):
        raise SurfaceGeometryError("mean curvature vector is not spacelike")
    hnorm = np.sqrt(hh)
    e3 = -H / hnorm
    nt = np.einsum("mn...,m...,an...->a...", g, n, dX)
    v = n - np.einsum("ab...,a...,bm...->m...", sinv, nt, dX)
    v = v - _inner(g, v, e3) * e3
    vv = -_inner(g, v, v)
    if np.any(vv <= 0):
        raise SurfaceGeometryError("surface is not spacelike")
    e4 = v / np.sqrt(vv)
    de4 = grid.partials(e4)  # [a, mu]
    if Gam is not None:
        de4 = de4 + np.einsum("knl...,an...,l...->ak...", Gam, dX, e4)
    alpha = -np.einsum("mn...,am...,n...->a...", g, de4, e3)
    return EmbeddedSurface(grid, X, dX, ddX, np.asarray(g), sigma, H, hnorm, e3, e4, alpha)


# --- reference quantities --------------------------------------------------


def tau(emb):
    """Time function ``tau = -<X, T0>``."""
    return -np.einsum("m...,mn,n->...", emb.X, ETA, emb.T0)


def reference_data_from_embedding(grid, emb):
    """``|H0|``, ``alpha_H0`` and the projected-surface data of the image of X."""
    surf = embedded_surface(grid, emb.X, None)
    B = boost_matrix(emb.T0 * np.array([1.0, -1.0, -1.0, -1.0]))
    Xp = np.einsum("mn,n...->m...", B, emb.X)
    Xhat = Xp[1:]
    c = grid.analysis(Xhat)
    d1 = grid.partials_from_coeffs(c)
    d2 = grid.second_partials_from_coeffs(c)
    sig_hat = np.einsum("ai...,bi...->ab...", d1, d1)
    nrm = np.cross(d1[0], d1[1], axis=0)
    nrm = nrm / np.linalg.norm(nrm, axis=0)
    centre = grid.integrate(Xhat)[:, None, None] / (4 * np.pi)
    if grid.integrate(np.einsum("i...,i...->...", nrm, Xhat - centre)) < 0:
        nrm = -nrm
    h_hat = -np.einsum("abi...,i...->ab...", d2, nrm)
    H_hat = np.einsum("ab...,ab...->...", s2.metric_inverse(sig_hat), h_hat)
    return ReferenceData(surf.hnorm, surf.alpha, sig_hat, h_hat, H_hat)


# --- energy functionals ----------------------------------------------------


def _grad_lap(grid, sigma, f):
    c = grid.analysis(f)
    d1 = grid.partials_from_coeffs(c)
    d2 = grid.second_partials_from_coeffs(c)
    gam = s2.christoffel(grid, sigma)
    hess = d2 - np.einsum("cab...,c...->ab...", gam, d1)
    sinv = s2.metric_inverse(sigma)
    lap = np.einsum("ab...,ab...->...", sinv, hess)
    grad2 = np.einsum("ab...,a...,b...->...", sinv, d1, d1)
    return d1, grad2, lap, sinv


def theta_field(grid, tau_f, sigma, hnorm):
    """``theta = asinh(-Lap tau / (|H| sqrt(1 + |grad tau|^2)))``."""
    _, g2, lap, _ = _grad_lap(grid, sigma, tau_f)
    return np.arcsinh(-lap / (hnorm * np.sqrt(1.0 + g2)))


def _rho(g2, lap, hnorm, h0norm):
    q = lap**2 / (1.0 + g2)
    num = h0norm**2 - hnorm**2
    return num / (np.sqrt(h0norm**2 + q) + np.sqrt(hnorm**2 + q)) / np.sqrt(1.0 + g2)


def rho_field(grid, tau_f, sigma, hnorm, h0norm):
    """Mass density, evaluated in a cancellation-free form of its closed expression."""
    _, g2, lap, _ = _grad_lap(grid, sigma, tau_f)
    return _rho(g2, lap, hnorm, h0norm)


@dataclass
class EnergyTerms:
    tau: np.ndarray
    dtau: np.ndarray
    grad2: np.ndarray
    lap: np.ndarray
    rho: np.ndarray
    sinh_term: np.ndarray
    j: np.ndarray
    sinv: np.ndarray
    area: np.ndarray


def energy_terms(grid, data, emb, ref=None):
    """All pointwise ingredients of the energy and current for ``(data, emb)``."""
    if ref is None:
        ref = reference_data_from_embedding(grid, emb)
    t = tau(emb)
    d1, g2, lap, sinv = _grad_lap(grid, data.sigma, t)
    rho = _rho(g2, lap, data.hnorm, ref.h0norm)
    sh = np.arcsinh(rho * lap / (ref.h0norm * data.hnorm))
    j = rho * d1 - grid.partials(sh) - ref.alpha0 + data.alpha
    area = np.sqrt(s2.metric_det(data.sigma)) / grid.sin
    return EnergyTerms(t, d1, g2, lap, rho, sh, j, sinv, area)


def j_covector(grid, data, emb, ref=None):
    """Current ``j_a = rho d_a tau - d_a asinh(rho Lap tau/(|H0||H|)) - alpha_H0 + alpha_H``."""
    return energy_terms(grid, data, emb, ref).j


def optimal_residual(grid, data, emb, ref=None):
    """``div_sigma j``; it vanishes for an optimal isometric embedding."""
    return s2.divergence(grid, data.sigma, j_covector(grid, data, emb, ref))


def quasilocal_energy(grid, data, emb, ref=None, terms=None):
    """Quasi-local energy of ``data`` relative to the embedding ``emb``."""
    if terms is None:
        terms = energy_terms(grid, data, emb, ref)
    if ref is None:
        ref = reference_data_from_embedding(grid, emb)
    dtau_up = np.einsum("ab...,b...->a...", terms.sinv, terms.dtau)
    integrand = (
        terms.rho * (1.0 + terms.grad2)
        + terms.lap * terms.sinh_term
        + np.einsum("a...,a...->...", data.alpha - ref.alpha0, dtau_up)
    )
    return float(grid.integrate(integrand * terms.area) / (8 * np.pi))
