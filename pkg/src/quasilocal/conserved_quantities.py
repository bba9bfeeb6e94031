"""Quasi-local conserved quantities from Minkowski Killing fields.

A Killing field of R^{3,1} is stored as ``K^b(X) = L[b, a] X^a + t^b``.  Its
covariant Lorentz part is ``K_ac = L[b, a] eta_bc``, antisymmetric.  With
this convention the evaluation splits as ``E(K) = K_ac Phi^{ac} - <t, p>``
(full double sum), where ``Phi`` and ``p`` form the dual element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import s2_spectral as s2
from .surface_geometry import ETA, Embedding31, energy_terms, quasilocal_energy

__all__ = [
    "KillingField",
    "AffineField",
    "ConservedDual",
    "translation",
    "rotation",
    "boost",
    "lorentz_generators",
    "random_lorentz",
    "evaluate",
    "dual_element",
    "pair",
    "translate_embedding_law",
    "boost_energy_derivative",
    "komar_angular_momentum",
]


@dataclass(frozen=True)
class KillingField:
    """``K^b(X) = L[b, a] X^a + t^b``."""

    L: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        t = np.asarray(self.t, dtype=float)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "t", t)
        Kl = self.lower()
        if np.max(np.abs(Kl + Kl.T)) > 1e-12 * max(1.0, np.max(np.abs(Kl))):
            raise ValueError("Lorentz part is not antisymmetric")

    def lower(self):
        """``K_ac = L[b, a] eta_bc``."""
        return self.L.T @ ETA

    def __call__(self, X):
        return np.einsum("ba,a...->b...", self.L, X) + self.t.reshape((4,) + (1,) * (X.ndim - 1))

    def transform(self, A):
        """Push forward by the Lorentz map ``A``: ``K'(Y) = A K(A^-1 Y)``."""
        A = np.asarray(A, dtype=float)
        return KillingField(A @ self.L @ np.linalg.inv(A), A @ self.t)

    def frame_map(self, A):
        """``K^a(X) A d_a``: ``A`` acts on the coordinate vectors, the coefficients stay.

        The result is affine but in general not Killing.
        """
        A = np.asarray(A, dtype=float)
        return AffineField(A @ self.L, A @ self.t)

    def __add__(self, other):
        return KillingField(self.L + other.L, self.t + other.t)

    def __mul__(self, c):
        return KillingField(c * self.L, c * self.t)

    __rmul__ = __mul__


@dataclass(frozen=True)
class AffineField:
    """Affine vector field ``V^b(X) = L[b, a] X^a + t^b`` without the Killing condition."""

    L: np.ndarray
    t: np.ndarray

    def __call__(self, X):
        return np.einsum("ba,a...->b...", self.L, X) + self.t.reshape((4,) + (1,) * (X.ndim - 1))


def translation(v):
    return KillingField(np.zeros((4, 4)), v)


def rotation(i, j):
    """``X^i d_j - X^j d_i`` for spatial indices 1..3."""
    L = np.zeros((4, 4))
    L[j, i] = 1.0
    L[i, j] = -1.0
    return KillingField(L, np.zeros(4))


def boost(i):
    """``X^i d_0 + X^0 d_i`` for a spatial index 1..3."""
    L = np.zeros((4, 4))
    L[0, i] = 1.0
    L[i, 0] = 1.0
    return KillingField(L, np.zeros(4))


def lorentz_generators():
    """The three rotations (cyclic order) followed by the three boosts."""
    return [rotation(2, 3), rotation(3, 1), rotation(1, 2), boost(1), boost(2), boost(3)]


def random_lorentz(rng, max_rapidity=0.8):
    """Random proper orthochronous Lorentz matrix: rotation times boost."""
    from scipy.spatial.transform import Rotation

    R = np.eye(4)
    R[1:, 1:] = Rotation.random(random_state=rng).as_matrix()
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    s = rng.uniform(0, max_rapidity)
    a = np.sinh(s) * n
    B = np.eye(4)
    B[0, 0] = np.cosh(s)
    B[0, 1:] = a
    B[1:, 0] = a
    B[1:, 1:] += np.outer(a, a) / (1 + np.cosh(s))
    return R @ B


@dataclass
class ConservedDual:
    Phi: np.ndarray
    p: np.ndarray


def _common(grid, data, emb, ref=None):
    t = energy_terms(grid, data, emb, ref)
    dX = grid.partials(emb.X)  # [a, mu]
    grad_up = np.einsum("ab...,bm...->am...", t.sinv, dX)  # nabla^a X^mu
    jX = np.einsum("am...,a...->m...", grad_up, t.j)  # nabla^a X^mu j_a
    return t, dX, jX


def evaluate(grid, data, emb, K, ref=None):
    """``E(Sigma, X, T0, K) = -1/8pi int [<K, T0> rho + <K, d_a X> sigma^{ab} j_b] dSigma``.

    ``K`` is any callable mapping node values of ``X`` to a vector field.
    """
    t, dX, jX = _common(grid, data, emb, ref)
    KX = K(emb.X)
    KT = np.einsum("m...,mn,n->...", KX, ETA, emb.T0)
    Kj = np.einsum("m...,mn,n...->...", KX, ETA, jX)
    return float(-grid.integrate((KT * t.rho + Kj) * t.area) / (8 * np.pi))


def dual_element(grid, data, emb, ref=None):
    """``Phi^{ac}`` and ``p^c`` by quadrature."""
    t, dX, jX = _common(grid, data, emb, ref)
    X, T0, w = emb.X, emb.T0, t.area
    XT = np.einsum("a...,c->ac...", X, T0) * t.rho
    XJ = np.einsum("a...,c...->ac...", X, jX)
    integrand = XT - np.swapaxes(XT, 0, 1) + XJ - np.swapaxes(XJ, 0, 1)
    Phi = -grid.integrate(integrand * w) / (16 * np.pi)
    p = grid.integrate((T0[:, None, None] * t.rho + jX) * w) / (8 * np.pi)
    Phi = 0.5 * (Phi - Phi.T)
    return ConservedDual(Phi, p)


def pair(dual, K):
    """``K_ac Phi^{ac} - <t, p>``."""
    return float(np.sum(K.lower() * dual.Phi) - K.t @ ETA @ dual.p)


def translate_embedding_law(grid, data, emb, b, ref=None):
    """Dual element after ``X -> X + b`` and its deviation from the translation law."""
    b = np.asarray(b, dtype=float)
    d = dual_element(grid, data, emb, ref)
    shifted = Embedding31(emb.X + b[:, None, None], emb.T0)
    d2 = dual_element(grid, data, shifted, ref)
    law = d.Phi - 0.5 * np.outer(b, d.p) + 0.5 * np.outer(d.p, b)
    return d2.Phi, float(np.max(np.abs(d2.Phi - law)))


def _boosted_observer(i, s):
    T = np.zeros(4)
    T[0] = np.cosh(s)
    T[i] = np.sinh(s)
    return T


def boost_energy_derivative(grid, data, emb, i, h=1e-3):
    """Five-point derivative of ``f(s) = E(Sigma, X, T0(s))`` at 0 against ``E(Sigma, X, d0, d_i)``.

    ``T0(s) = cosh(s) d0 + sinh(s) d_i``; ``emb.T0`` must be ``d0``.
    """
    if np.max(np.abs(emb.T0 - np.array([1.0, 0, 0, 0]))) > 1e-14:
        raise ValueError("observer must be d/dX0")
    from .surface_geometry import reference_data_from_embedding

    def f(s):
        e = Embedding31(emb.X, _boosted_observer(i, s))
        return quasilocal_energy(grid, data, e, reference_data_from_embedding(grid, e))

    fd = (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)
    v = np.zeros(4)
    v[i] = 1.0
    return fd, evaluate(grid, data, emb, translation(v))


def komar_angular_momentum(grid, m, a, R, f=None, frame_rapidity=None):
    """Komar angular momentum ``1/8pi int <nabla_phi e3, e4> dSigma`` in Kerr.

    The surface is ``{t = f, r = R}`` in Boyer-Lindquist form with the grid
    longitude as the Killing coordinate.  ``frame_rapidity`` (node values)
    rotates the normal frame hyperbolically; the integral does not depend on
    it.  The covariant derivative uses the exact Kerr Christoffel symbols.
    """
    from .spacetime_samplers import KerrBL, metric_arrays
    from .surface_geometry import embedded_surface

    model = KerrBL(m, a)
    f = np.zeros(grid.shape) if f is None else np.broadcast_to(f, grid.shape)
    X = np.concatenate([f[None], R * grid.xt])
    model.check_exterior(0.0, X[1:])

    def metric(c):
        return metric_arrays(model, c, order=1)[:2]

    surf = embedded_surface(grid, X, metric)
    e3, e4 = surf.e3, surf.e4
    if frame_rapidity is not None:
        psi = np.broadcast_to(frame_rapidity, grid.shape)
        e3, e4 = np.cosh(psi) * e3 + np.sinh(psi) * e4, np.sinh(psi) * e3 + np.cosh(psi) * e4
    g, dg = metric(X)
    gi = np.moveaxis(np.linalg.inv(np.moveaxis(g, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    low = 0.5 * (np.einsum("nml...->mnl...", dg) + np.einsum("lmn...->mnl...", dg) - dg)
    Gam = np.einsum("km...,mnl...->knl...", gi, low)
    dphi_X = grid.partials(X)[1]
    de3 = grid.partials(e3)[1] + np.einsum("knl...,n...,l...->k...", Gam, dphi_X, e3)
    integrand = np.einsum("mn...,m...,n...->...", g, de3, e4)
    area = np.sqrt(s2.metric_det(surf.sigma)) / grid.sin
    return float(grid.integrate(integrand * area) / (8 * np.pi))
