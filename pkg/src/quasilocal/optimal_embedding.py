"""Optimal isometric embeddings: the leading-order system at spatial infinity
and a Newton-type corrector at finite radius.

Sign conventions follow :mod:`quasilocal.surface_geometry`.  With them the
reference connection form of ``X = (f, r X~)`` is
``alpha_H0 = grad~ (Lap~ + 2) f / (2 r) + O(r^-3)``, so the leading-order
equation for the time component reads

    1/2 Lap~(Lap~ + 2) X0 = div~(rho grad~ tau1) - 1/4 Lap~(rho Lap~ tau1) + div~ alpha

with ``tau1 = -a_i X~^i`` and ``rho = (h0 - h) / a0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import s2_spectral as s2
from .isometric_embedding import admission_distance, embed_r3_newton
from .surface_geometry import (
    Embedding31,
    SurfaceData,
    boost_matrix,
    energy_terms,
    quasilocal_energy,
    reference_data_from_embedding,
)

__all__ = [
    "OptimalEmbeddingError",
    "LeadingOrderSolution",
    "AdmQuantities",
    "solve_leading_order",
    "leading_order_residual",
    "adm_from_leading",
    "spatial_embedding",
    "solve_optimal_finite_r",
]


class OptimalEmbeddingError(RuntimeError):
    """Raised for ill-posed inputs or solver failure."""


@dataclass
class LeadingOrderSolution:
    X0_0: np.ndarray
    a: np.ndarray
    rho_m2: np.ndarray
    tau_1: np.ndarray
    solvability_residual: float = 0.0


@dataclass
class AdmQuantities:
    e: float
    p: np.ndarray
    m: float


def _rhs_parts(grid, rho, tau1, alpha):
    rnd = s2.round_metric(grid)
    dtau = grid.partials(tau1)
    lap_tau = s2.laplacian_round(grid, tau1)
    return (
        s2.divergence(grid, rnd, rho * dtau)
        - 0.25 * s2.laplacian_round(grid, rho * lap_tau)
        + s2.divergence(grid, rnd, alpha)
    )


def _momentum_moments(grid, alpha):
    """``q_k = -int X~^k div~ alpha`` (equal to ``8 pi p_k``)."""
    div = s2.divergence(grid, s2.round_metric(grid), alpha)
    return -grid.integrate(grid.xt * div)


def solve_leading_order(grid, h_m2, h0_m2, alphaH_m1, tol=1e-9):
    """Leading-order optimal embedding ``(X0^(0), a)`` from the expansion coefficients."""
    e8 = float(grid.integrate(h0_m2 - h_m2))
    if not e8 > 0:
        raise OptimalEmbeddingError("no positive energy direction: int (h0 - h) <= 0")
    q = _momentum_moments(grid, alphaH_m1)
    v = q / e8
    if np.dot(v, v) >= 1.0:
        raise OptimalEmbeddingError("total momentum is not timelike")
    a0 = 1.0 / np.sqrt(1.0 - np.dot(v, v))
    a = np.concatenate([[a0], a0 * v])
    rho = (h0_m2 - h_m2) / a0
    tau1 = -np.einsum("i,i...->...", a[1:], grid.xt)
    rhs = 2.0 * _rhs_parts(grid, rho, tau1, alphaH_m1)
    X0, low = s2.solve_bilaplacian_plus2(grid, rhs)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    res = float(np.max(np.abs(low)))
    if res > tol * scale:
        raise OptimalEmbeddingError(f"solvability residual {res:.3e} after fitting a")
    return LeadingOrderSolution(X0, a, rho, tau1, res)


def leading_order_residual(grid, sol, alphaH_m1):
    """L2 norm of the leading-order equation after substitution."""
    lap = s2.laplacian_round
    lhs = -0.5 * lap(grid, lap(grid, sol.X0_0) + 2 * sol.X0_0) + _rhs_parts(
        grid, sol.rho_m2, sol.tau_1, alphaH_m1
    )
    return float(np.sqrt(grid.integrate(lhs**2)))


def adm_from_leading(grid, sol, h_m2, h0_m2, alphaH_m1):
    """ADM energy, momentum and mass from the leading-order data."""
    e = float(grid.integrate(h0_m2 - h_m2)) / (8 * np.pi)
    p = _momentum_moments(grid, alphaH_m1) / (8 * np.pi)
    return AdmQuantities(e, p, e / sol.a[0])


# --- finite radius ------------------------------------------------------------


def spatial_embedding(grid, sigma, X0, X_init, pinv=None, align_to=None, fail_tol=1e-7):
    """Spatial part of ``X`` so that ``(X0, X)`` induces ``sigma`` in Minkowski space.

    The tolerance is looser than for exact band-limited metrics since physical
    data carry a spectral truncation floor.  The admission bound is wider
    than for ``sigma`` itself since a tilted sphere projects to an ellipsoid.
    """
    d0 = grid.partials(X0)
    sig = sigma + np.einsum("a...,b...->ab...", d0, d0)
    return embed_r3_newton(grid, sig, X_init, chord=pinv is not None, damped_steps=0,
                           pinv=pinv, align_to=align_to, check_curvature=False,
                           fail_tol=fail_tol, admission=0.6)


def solve_optimal_finite_r(grid, data: SurfaceData, init: Embedding31, tol=1e-8,
                           scale=1.0, maxit=50, fd_step=1e-6, admission=0.5):
    """Optimal isometric embedding of ``data`` near ``init``.

    Works in the rest frame of ``init.T0``.  The degree 0 and 1 parts of the
    time component stay at their initial values (translation and boost gauge);
    the unknowns are its higher modes and the spatial velocity of the observer.
    Each residual evaluation re-embeds ``sigma + dX0^2`` into R^3.  The update
    uses the diagonal model ``-1/2 l(l+1)(l(l+1) - 2) / r^3`` for the higher
    modes and finite differences for the observer.  Convergence means
    ``sup |div j| < tol * scale / r^3``.  The result is mapped back to the
    frame of ``init``, so the solver commutes with Lorentz maps of ``init``.
    ``admission`` bounds the distance of ``sigma / r^2`` from the round
    metric; tilted slices need more room than coordinate spheres.
    """
    T0i = init.T0
    B = boost_matrix(T0i * np.array([1.0, -1.0, -1.0, -1.0]))  # T0i -> d0
    Binv = boost_matrix(T0i)
    Xr = np.einsum("mn,n...->m...", B, init.X)
    dist, r = admission_distance(grid, data.sigma)
    if dist > admission:
        raise OptimalEmbeddingError(f"data not near-round (distance {dist:.3f})")
    deg = grid.real_degrees()
    hi = deg >= 2
    x0 = grid.to_real(grid.analysis(Xr[0]))
    lam = deg * (deg + 1.0)
    diag = np.where(hi, -0.5 * lam * (lam - 2.0) / r**3, 1.0)
    thresh = tol * scale / r**3

    align = Xr[1:]
    emb0 = spatial_embedding(grid, data.sigma, Xr[0], Xr[1:], align_to=align)
    pinv = emb0.info["pinv"]
    cache = {"X": emb0.X}

    def evaluate(x0c, a):
        X0 = grid.synthesis(grid.from_real(x0c))
        sp = spatial_embedding(grid, data.sigma, X0, cache["X"], pinv=pinv, align_to=align)
        a0 = np.sqrt(1.0 + a @ a)
        emb = Embedding31(np.concatenate([X0[None], sp.X]), np.concatenate([[a0], a]))
        ref = reference_data_from_embedding(grid, emb)
        t = energy_terms(grid, data, emb, ref)
        res = s2.divergence(grid, data.sigma, t.j)
        return emb, ref, t, res, sp

    def project(res):
        c = grid.to_real(grid.analysis(res))
        return c[hi], c[(deg == 1)]

    a = np.zeros(3)
    x0c = x0.copy()
    emb, ref, terms, res, sp = evaluate(x0c, a)
    cache["X"] = sp.X
    e_init = quasilocal_energy(grid, data, emb, ref, terms)
    history = [float(np.max(np.abs(res)))]
    Ja = None
    it = 0
    for it in range(1, maxit + 1):
        if history[-1] < thresh:
            break
        rh, r1 = project(res)
        if Ja is None or it % 5 == 0:
            cols = []
            for k in range(3):
                da = np.zeros(3)
                da[k] = fd_step
                _, _, _, rp, _ = evaluate(x0c, a + da)
                _, _, _, rm, _ = evaluate(x0c, a - da)
                cols.append(np.concatenate(project((rp - rm) / (2 * fd_step))))
            Ja = np.array(cols).T  # rows: (hi modes, l=1 modes), columns: a
        nh = int(hi.sum())
        # block solve: l=1 rows depend only on a in this model
        try:
            da = -np.linalg.solve(Ja[nh:], r1)
        except np.linalg.LinAlgError as exc:
            raise OptimalEmbeddingError("singular observer block") from exc
        dxh = -(rh + Ja[:nh] @ da) / diag[hi]
        x0c = x0c.copy()
        x0c[hi] += dxh
        a = a + da
        emb, ref, terms, res, sp = evaluate(x0c, a)
        cache["X"] = sp.X
        history.append(float(np.max(np.abs(res))))
        if not np.isfinite(history[-1]):
            raise OptimalEmbeddingError("iteration diverged")
    else:
        if history[-1] >= thresh:
            raise OptimalEmbeddingError(
                f"no convergence after {maxit} iterations (residual {history[-1]:.3e})"
            )
    energy = quasilocal_energy(grid, data, emb, ref, terms)
    X = np.einsum("mn,n...->m...", Binv, emb.X)
    T0 = Binv @ emb.T0
    info = {
        "iterations": it,
        "residual": history[-1],
        "threshold": thresh,
        "history": history,
        "energy": energy,
        "energy_init": e_init,
        "energy_decreased": energy <= e_init,
        "embedding_residual": sp.residual,
        "radius": r,
    }
    return Embedding31(X, T0, info)
