"""Spectral calculus on the unit 2-sphere.

Fields live on a Gauss-Legendre (in cos theta) by uniform (in phi) grid.
Scalar fields are arrays of shape ``(nlat, nphi)``; covector fields are
``(2, nlat, nphi)`` with coordinate components ``(theta, phi)``; symmetric
2-tensors are ``(2, 2, nlat, nphi)``.  Leading batch axes are allowed for the
transforms.

The round-sphere embedding uses x1 = sin(th) sin(ph), x2 = sin(th) cos(ph),
x3 = cos(th).

Coordinate partial derivatives of tensor components are singular at the
poles, so covariant derivatives are taken on the smooth Cartesian lift of a
tangent tensor: for a covector with ambient representative ``W`` one has
``nabla~_a w_b = e_b . d_a W`` with ``e_a = d_a X~``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SphereGrid",
    "build_grid",
    "laplacian_round",
    "solve_helmholtz_plus2",
    "solve_bilaplacian_plus2",
    "inverse_laplacian_round",
    "gauss_curvature",
    "christoffel",
    "laplace_beltrami",
    "hessian",
    "divergence",
    "divergence_tensor",
    "curl_moment",
    "integrate",
    "gradient_round",
    "round_metric",
    "area_form",
    "metric_inverse",
    "metric_det",
    "lift_covector",
    "lift_tensor",
    "drop_covector",
    "drop_tensor",
    "nabla_round_covector",
    "nabla_round_tensor",
    "MetricError",
]


class MetricError(ValueError):
    """Raised when a metric is not positive definite at some node."""


def _normalized_legendre(lmax, x):
    """Orthonormal associated Legendre functions and their theta derivatives.

    Returns ``(P, dP)`` of shape ``(lmax+1, lmax+1, len(x))`` indexed
    ``[m, l, j]`` with ``int_{-1}^{1} P_lm^2 dx = 1`` and no Condon-Shortley
    phase; ``dP`` is the derivative with respect to colatitude.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(1.0 - x * x)
    n = lmax + 1
    P = np.zeros((n, n, x.size))
    P[0, 0] = np.sqrt(0.5)
    for m in range(1, n):
        P[m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(n - 1):
        P[m, m + 1] = np.sqrt(2 * m + 3.0) * x * P[m, m]
    for m in range(n):
        for l in range(m + 2, n):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt((4.0 * (l - 1) ** 2 - 1.0) / ((l - 1) ** 2 - m * m))
            P[m, l] = a * (x * P[m, l - 1] - P[m, l - 2] / b)
    # sin(th) dP/dth = l x P_l - c_lm P_{l-1}
    dP = np.zeros_like(P)
    for m in range(n):
        for l in range(m, n):
            c = np.sqrt((2 * l + 1.0) * (l * l - m * m) / (2 * l - 1.0)) if l > m else 0.0
            prev = P[m, l - 1] if l > m else 0.0
            dP[m, l] = (l * x * P[m, l] - c * prev) / s
    return P, dP


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Quadrature grid and transform tables on the unit sphere."""

    lmax: int
    nlat: int
    nphi: int
    x: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    lat_weights: np.ndarray
    weights: np.ndarray
    P: np.ndarray = field(repr=False)
    dP: np.ndarray = field(repr=False)
    d2P: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return (self.nlat, self.nphi)

    @property
    def nodes(self):
        """Array of (theta, phi) pairs, shape ``(nlat*nphi, 2)``."""
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.stack([th.ravel(), ph.ravel()], axis=1)

    @property
    def TH(self):
        return np.broadcast_to(self.theta[:, None], self.shape)

    @property
    def PH(self):
        return np.broadcast_to(self.phi[None, :], self.shape)

    @property
    def sin(self):
        return np.broadcast_to(np.sin(self.theta)[:, None], self.shape)

    @property
    def cos(self):
        return np.broadcast_to(self.x[:, None], self.shape)

    @property
    def xt(self):
        """Round embedding X~ as an array of shape ``(3, nlat, nphi)``."""
        s, c = self.sin, self.cos
        return np.stack([s * np.sin(self.PH), s * np.cos(self.PH), c])

    @property
    def frame(self):
        """Coordinate tangent vectors ``e_a = d_a X~``, shape ``(2, 3, nlat, nphi)``."""
        s, c, ph = self.sin, self.cos, self.PH
        e_th = np.stack([c * np.sin(ph), c * np.cos(ph), -s])
        e_ph = np.stack([s * np.cos(ph), -s * np.sin(ph), np.zeros(self.shape)])
        return np.stack([e_th, e_ph])

    @property
    def coframe(self):
        """Dual vectors ``E^a`` (round metric raised), shape ``(2, 3, nlat, nphi)``."""
        e = self.frame
        return np.stack([e[0], e[1] / self.sin**2])

    @property
    def frame_derivatives(self):
        """``d_c e_a`` as array ``[c, a, i, ...]``."""
        s, c, ph = self.sin, self.cos, self.PH
        sp, cp = np.sin(ph), np.cos(ph)
        z = np.zeros(self.shape)
        d = np.empty((2, 2, 3) + self.shape)
        d[0, 0] = np.stack([-s * sp, -s * cp, -c])
        d[0, 1] = np.stack([c * cp, -c * sp, z])
        d[1, 0] = d[0, 1]
        d[1, 1] = np.stack([-s * sp, -s * cp, z])
        return d

    # --- transforms -------------------------------------------------------

    def analysis(self, f):
        """Complex coefficients ``c[..., l, m]`` (m >= 0) of a real field."""
        f = np.asarray(f, dtype=float)
        F = np.fft.rfft(f, axis=-1)[..., : self.lmax + 1] / self.nphi
        Pw = self.P * self.lat_weights
        return np.einsum("mlj,...jm->...lm", Pw, F)

    def _synth(self, c, table):
        F = np.einsum("mlj,...lm->...jm", table, c)
        pad = np.zeros(F.shape[:-1] + (self.nphi // 2 + 1,), dtype=complex)
        pad[..., : self.lmax + 1] = F * self.nphi
        return np.fft.irfft(pad, n=self.nphi, axis=-1)

    def synthesis(self, c):
        """Field values from coefficients produced by :meth:`analysis`."""
        return self._synth(c, self.P)

    @property
    def degrees(self):
        """Degree l of each coefficient slot, shape ``(lmax+1, lmax+1)``."""
        l = np.arange(self.lmax + 1)
        return np.broadcast_to(l[:, None], (self.lmax + 1, self.lmax + 1))

    @property
    def orders(self):
        m = np.arange(self.lmax + 1)
        return np.broadcast_to(m[None, :], (self.lmax + 1, self.lmax + 1))

    def partials(self, f):
        """First coordinate partials ``(d_theta f, d_phi f)`` stacked on axis 0."""
        c = self.analysis(f)
        return self.partials_from_coeffs(c)

    def partials_from_coeffs(self, c):
        im = 1j * self.orders
        return np.stack([self._synth(c, self.dP), self._synth(c * im, self.P)])

    def second_partials(self, f):
        """Second partials as array ``[a, b, ...]`` in coordinates (theta, phi)."""
        c = self.analysis(f)
        return self.second_partials_from_coeffs(c)

    def second_partials_from_coeffs(self, c):
        im = 1j * self.orders
        ftt = self._synth(c, self.d2P)
        ftp = self._synth(c * im, self.dP)
        fpp = self._synth(c * im * im, self.P)
        return np.stack([np.stack([ftt, ftp]), np.stack([ftp, fpp])])

    def integrate(self, f):
        """Integral over the unit sphere with the round measure."""
        return np.sum(np.asarray(f) * self.weights, axis=(-2, -1))

    def project(self, f):
        """Band-limit a field to degree ``lmax``."""
        return self.synthesis(self.analysis(f))

    # --- real orthonormal basis -------------------------------------------

    @property
    def nbasis(self):
        return (self.lmax + 1) ** 2

    def real_index(self):
        """List of (l, m) for the real basis ordering; m < 0 means sine."""
        return [(l, m) for l in range(self.lmax + 1) for m in range(-l, l + 1)]

    def to_real(self, c):
        """Real orthonormal coefficients from complex coefficients."""
        c = np.asarray(c)
        out = np.empty(c.shape[:-2] + (self.nbasis,))
        k = 0
        for l in range(self.lmax + 1):
            for m in range(-l, l + 1):
                if m == 0:
                    out[..., k] = np.sqrt(2 * np.pi) * c[..., l, 0].real
                elif m > 0:
                    out[..., k] = 2 * np.sqrt(np.pi) * c[..., l, m].real
                else:
                    out[..., k] = -2 * np.sqrt(np.pi) * c[..., l, -m].imag
                k += 1
        return out

    def from_real(self, a):
        """Complex coefficients from real orthonormal coefficients."""
        a = np.asarray(a, dtype=float)
        c = np.zeros(a.shape[:-1] + (self.lmax + 1, self.lmax + 1), dtype=complex)
        k = 0
        for l in range(self.lmax + 1):
            for m in range(-l, l + 1):
                if m == 0:
                    c[..., l, 0] += a[..., k] / np.sqrt(2 * np.pi)
                elif m > 0:
                    c[..., l, m] += a[..., k] / (2 * np.sqrt(np.pi))
                else:
                    c[..., l, -m] += -1j * a[..., k] / (2 * np.sqrt(np.pi))
                k += 1
        return c

    def real_basis(self):
        """Real orthonormal harmonics at the nodes, shape ``(nbasis, nlat, nphi)``."""
        return self.synthesis(self.from_real(np.eye(self.nbasis)))

    def real_basis_partials(self):
        """Coordinate partials of the real basis, shape ``(2, nbasis, nlat, nphi)``."""
        return self.partials_from_coeffs(self.from_real(np.eye(self.nbasis)))

    def real_degrees(self):
        return np.array([l for l, _ in self.real_index()])

    def ylm(self, l, m):
        """Real orthonormal harmonic of degree l and signed order m."""
        a = np.zeros(self.nbasis)
        a[l * l + l + m] = 1.0
        return self.synthesis(self.from_real(a))


def build_grid(lmax):
    """Gauss-Legendre by equiangular grid resolving degrees up to ``lmax``."""
    if int(lmax) != lmax or lmax < 4:
        raise ValueError("lmax must be an integer >= 4")
    lmax = int(lmax)
    nlat = lmax + 1
    nphi = 2 * lmax + 2
    xg, wg = np.polynomial.legendre.leggauss(nlat)
    # north pole first
    x = xg[::-1].copy()
    w = wg[::-1].copy()
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    P, dP = _normalized_legendre(lmax, x)
    s2 = 1.0 - x * x
    ll = np.arange(lmax + 1)[None, :, None] * (np.arange(lmax + 1)[None, :, None] + 1)
    mm = np.arange(lmax + 1)[:, None, None] ** 2
    d2P = -(x / np.sqrt(s2)) * dP + (mm / s2 - ll) * P
    # zero the unused l < m slots
    mask = (np.arange(lmax + 1)[None, :] >= np.arange(lmax + 1)[:, None])[:, :, None]
    d2P = np.where(mask, d2P, 0.0)
    weights = np.broadcast_to(w[:, None] * (2 * np.pi / nphi), (nlat, nphi)).copy()
    return SphereGrid(lmax, nlat, nphi, x, theta, phi, w, weights, P, dP, d2P)


# --- round-sphere operators ----------------------------------------------


def integrate(grid, f, sigma=None):
    """Integral of ``f`` with the round measure, or with ``dS_sigma`` if given."""
    if sigma is None:
        return grid.integrate(f)
    return grid.integrate(np.asarray(f) * np.sqrt(metric_det(sigma)) / grid.sin)


def laplacian_round(grid, f):
    """Round Laplacian; eigenvalue ``-l(l+1)`` on degree-l harmonics."""
    c = grid.analysis(f)
    ll = grid.degrees * (grid.degrees + 1)
    return grid.synthesis(-ll * c)


def gradient_round(grid, f):
    """Coordinate components ``(d_theta f, d_phi f)`` of the differential of ``f``."""
    return grid.partials(f)


def _moments(grid, f):
    return grid.integrate(grid.xt * f)


def solve_helmholtz_plus2(grid, rhs):
    """Solve ``(Lap~ + 2) u = rhs - P1(rhs)`` with ``u`` free of degree 1.

    Returns ``(u, moments)`` where ``moments[k] = int X~^k rhs dS``.
    """
    c = grid.analysis(rhs)
    ll = grid.degrees * (grid.degrees + 1)
    denom = 2.0 - ll
    denom = np.where(grid.degrees == 1, np.inf, denom)
    return grid.synthesis(c / denom), _moments(grid, rhs)


def solve_bilaplacian_plus2(grid, rhs):
    """Solve ``Lap~(Lap~ + 2) u = rhs`` on degrees >= 2; ``u`` has no l <= 1 part.

    Returns ``(u, residual)`` where ``residual`` is the l <= 1 part of ``rhs``
    that cannot be matched.
    """
    c = grid.analysis(rhs)
    ll = grid.degrees * (grid.degrees + 1.0)
    denom = ll * (ll - 2.0)
    low = grid.degrees <= 1
    denom = np.where(low, np.inf, denom)
    return grid.synthesis(c / denom), grid.synthesis(np.where(low, c, 0.0))


def inverse_laplacian_round(grid, f):
    """Solve ``Lap~ u = f - mean(f)`` with zero mean."""
    c = grid.analysis(f)
    ll = grid.degrees * (grid.degrees + 1.0)
    ll = np.where(grid.degrees == 0, np.inf, ll)
    return grid.synthesis(-c / ll)


def round_metric(grid):
    """The round metric ``diag(1, sin^2 theta)``."""
    s2 = grid.sin**2
    z = np.zeros(grid.shape)
    return np.array([[np.ones(grid.shape), z], [z, s2]])


def area_form(grid, sigma=None):
    """Area form ``eps_ab`` of ``sigma`` (round metric by default)."""
    if sigma is None:
        vol = grid.sin.copy()
    else:
        vol = np.sqrt(metric_det(sigma))
    z = np.zeros(grid.shape)
    return np.array([[z, vol], [-vol, z]])


def metric_det(sigma):
    return sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0]


def metric_inverse(sigma):
    """Pointwise inverse of a 2x2 metric; raises on loss of definiteness."""
    det = metric_det(sigma)
    if np.any(sigma[0, 0] <= 0) or np.any(det <= 0):
        raise MetricError("metric is not positive definite at some node")
    inv = np.empty_like(sigma)
    inv[0, 0] = sigma[1, 1] / det
    inv[1, 1] = sigma[0, 0] / det
    inv[0, 1] = -sigma[0, 1] / det
    inv[1, 0] = inv[0, 1]
    return inv


# --- Cartesian lift --------------------------------------------------------


def lift_covector(grid, w):
    """Ambient representative ``W = w_a E^a`` of a tangent covector."""
    return np.einsum("a...,ai...->i...", w, grid.coframe)


def drop_covector(grid, W):
    return np.einsum("i...,ai...->a...", W, grid.frame)


def lift_tensor(grid, T):
    """Ambient representative of a 2-tensor, shape ``(3, 3, nlat, nphi)``."""
    E = grid.coframe
    return np.einsum("ab...,ai...,bj...->ij...", T, E, E)


def drop_tensor(grid, T):
    e = grid.frame
    return np.einsum("ij...,ai...,bj...->ab...", T, e, e)


def _ambient_partials(grid, F):
    """Coordinate partials of each Cartesian component: ``[c, ...]``."""
    return grid.partials(F)


def nabla_round_covector(grid, w):
    """Round covariant derivative ``nabla~_a w_b`` as array ``[a, b, ...]``."""
    dW = _ambient_partials(grid, lift_covector(grid, w))
    return np.einsum("ai...,bi...->ab...", dW, grid.frame)


def nabla_round_tensor(grid, T):
    """Round covariant derivative ``nabla~_c T_ab`` as array ``[c, a, b, ...]``."""
    dT = _ambient_partials(grid, lift_tensor(grid, T))
    e = grid.frame
    return np.einsum("cij...,ai...,bj...->cab...", dT, e, e)


def _nabla_round_connection_difference(grid, C):
    """Round covariant derivative of a (1,2) tensor ``C^a_bc``: ``[d, a, b, c]``."""
    e, E = grid.frame, grid.coframe
    amb = np.einsum("abc...,ai...,bj...,ck...->ijk...", C, e, E, E)
    d = grid.partials(amb)
    return np.einsum("dijk...,ai...,bj...,ck...->dabc...", d, E, e, e)


def _round_christoffel(grid):
    s, c = grid.sin, grid.cos
    g = np.zeros((2, 2, 2) + grid.shape)
    g[0, 1, 1] = -s * c
    g[1, 0, 1] = c / s
    g[1, 1, 0] = c / s
    return g


def _connection_difference(grid, sigma, inv=None):
    """Difference tensor ``C^a_bc`` between the Levi-Civita connections of sigma and the round metric."""
    if inv is None:
        inv = metric_inverse(sigma)
    ds = nabla_round_tensor(grid, sigma)  # [c, a, b]
    low = 0.5 * (np.einsum("bdc...->dbc...", ds) + np.einsum("cdb...->dbc...", ds)
                 - ds)
    # low[d, b, c] = 1/2 (nabla_b s_dc + nabla_c s_db - nabla_d s_bc)
    return np.einsum("ad...,dbc...->abc...", inv, low)


def christoffel(grid, sigma):
    """Christoffel symbols ``gamma^a_bc`` of ``sigma`` at the nodes."""
    return _round_christoffel(grid) + _connection_difference(grid, sigma)


def hessian(grid, sigma, f):
    """Covariant Hessian of a scalar with respect to ``sigma``."""
    c = grid.analysis(f)
    d1 = grid.partials_from_coeffs(c)
    d2 = grid.second_partials_from_coeffs(c)
    gam = christoffel(grid, sigma)
    return d2 - np.einsum("cab...,c...->ab...", gam, d1)


def laplace_beltrami(grid, sigma, f):
    """Laplace-Beltrami operator of ``sigma`` applied to ``f``."""
    inv = metric_inverse(sigma)
    return np.einsum("ab...,ab...->...", inv, hessian(grid, sigma, f))


def divergence(grid, sigma, w):
    """``div_sigma w = sigma^{ab} nabla_a w_b`` for a covector ``w``."""
    inv = metric_inverse(sigma)
    nw = nabla_round_covector(grid, w) - np.einsum(
        "cab...,c...->ab...", _connection_difference(grid, sigma, inv), w
    )
    return np.einsum("ab...,ab...->...", inv, nw)


def divergence_tensor(grid, sigma, T):
    """``sigma^{bc} nabla_c T_ba`` for a symmetric 2-tensor ``T``."""
    inv = metric_inverse(sigma)
    C = _connection_difference(grid, sigma, inv)
    nT = (
        nabla_round_tensor(grid, T)
        - np.einsum("dcb...,da...->cba...", C, T)
        - np.einsum("dca...,bd...->cba...", C, T)
    )
    return np.einsum("bc...,cba...->a...", inv, nT)


def curl_moment(grid, w):
    """Curl ``eps~^{ab} nabla~_a w_b`` of a covector for the round metric."""
    nw = nabla_round_covector(grid, w)  # [b, a]
    return (nw[0, 1] - nw[1, 0]) / grid.sin


def gauss_curvature(grid, sigma):
    """Gauss curvature from the Ricci contraction of the Christoffel formula.

    Uses ``2K = sigma^{bd}(d_a g^a_bd - d_d g^a_ba + g^a_af g^f_db - g^a_df g^f_ab)``
    written for the smooth difference tensor against the round connection,
    whose own Ricci tensor is the round metric.
    """
    inv = metric_inverse(sigma)
    C = _connection_difference(grid, sigma, inv)
    nC = _nabla_round_connection_difference(grid, C)  # [d, a, b, c]
    ric = (
        round_metric(grid)
        + np.einsum("aabd...->bd...", nC)
        - np.einsum("daab...->bd...", nC)
        + np.einsum("aaf...,fdb...->bd...", C, C)
        - np.einsum("adf...,fab...->bd...", C, C)
    )
    return 0.5 * np.einsum("bd...,bd...->...", inv, ric)
