"""Isometric embeddings of near-round metrics into Euclidean 3-space.

Contains the linearized (Nirenberg) system about the unit sphere, the
resulting expansion coefficient of the reference mean curvature, and a
Gauss-Newton solver for the full nonlinear problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import s2_spectral as s2

__all__ = [
    "EmbeddingError",
    "LinearizedSolution",
    "EmbeddingResult",
    "solve_linearized",
    "linearized_residual",
    "h0_minus2",
    "gauge_fix_linear",
    "gauge_fix",
    "align_rigid",
    "admission_distance",
    "embed_r3_newton",
    "mean_curvature_r3",
    "induced_metric_r3",
]


class EmbeddingError(RuntimeError):
    """Raised when an isometric embedding cannot be found."""


@dataclass
class LinearizedSolution:
    """Solution of ``2 dX~ . dY = sigma1``: displacement ``Y`` (3 components), ``P_a`` and ``F``."""

    Y: np.ndarray
    P: np.ndarray
    F: np.ndarray
    curl_residual: float = 0.0


def _eps_up(grid):
    inv = 1.0 / grid.sin
    z = np.zeros(grid.shape)
    return np.array([[z, inv], [-inv, z]])


def _check_symmetric(sigma1, tol=1e-12):
    scale = max(1.0, float(np.max(np.abs(sigma1))))
    if np.max(np.abs(sigma1[0, 1] - sigma1[1, 0])) > tol * scale:
        raise ValueError("sigma1 must be symmetric")


def gauge_fix_linear(grid, Y):
    """Remove translations and infinitesimal rotations from a displacement field.

    Enforces ``int Y^i = 0`` and a symmetric moment matrix ``int X~^i Y^j``.
    """
    Y = Y - grid.integrate(Y)[:, None, None] / (4 * np.pi)
    xt = grid.xt
    M = np.einsum("iab,jab->ij", xt * grid.weights, Y)  # int X~^i Y^j
    A = 0.5 * (M - M.T)
    # the rotation Y = W X~ has moment (4 pi / 3) W^T
    W = -(3.0 / (4 * np.pi)) * A
    return Y - np.einsum("ij,j...->i...", W, xt)


def solve_linearized(grid, sigma1, tol=1e-6):
    """Solve the linearized isometric embedding equation about the unit sphere.

    Uses the ansatz ``nabla~_a Y = P_a X~ + (sigma1_ab/2 + F eps_ab) sigma~^{bc} d_c X~``.
    Its compatibility conditions reduce to ``(Lap~ + 2) F = div V / 2`` with
    ``V^c = eps^{ba} nabla~_b sigma1_a^c``, and ``P`` follows algebraically.
    ``Y`` is rebuilt from its gradient by inverting the round Laplacian.
    """
    sigma1 = np.asarray(sigma1, dtype=float)
    _check_symmetric(sigma1)
    sigma1 = 0.5 * (sigma1 + np.swapaxes(sigma1, 0, 1))
    rnd = s2.round_metric(grid)
    eps = s2.area_form(grid)
    epsu = _eps_up(grid)
    inv = s2.metric_inverse(rnd)
    ns = s2.nabla_round_tensor(grid, sigma1)  # [b, a, c]
    # U_c = eps^{ba} nabla~_b sigma1_ac, a covector; V^c is its raised form
    U = np.einsum("ba...,bac...->c...", epsu, ns)
    rhs = 0.5 * s2.divergence(grid, rnd, U)
    F, _ = s2.solve_helmholtz_plus2(grid, rhs)
    dF = grid.partials(F)
    # P^e = eps^{ec} (U_c / 2 - d_c F)
    Pup = np.einsum("ec...,c...->e...", epsu, 0.5 * U - dF)
    P = np.einsum("ab...,b...->a...", rnd, Pup)
    S = 0.5 * sigma1 + F * eps  # S_ab
    Smix = np.einsum("ab...,bc...->ac...", S, inv)
    frame = grid.frame  # [c, i]: d_c X~
    G = P[:, None] * grid.xt[None] + np.einsum("ac...,ci...->ai...", Smix, frame)
    curl_res = float(max(np.max(np.abs(s2.curl_moment(grid, G[:, i]))) for i in range(3)))
    divG = np.stack([s2.divergence(grid, rnd, G[:, i]) for i in range(3)])
    Y = np.stack([s2.inverse_laplacian_round(grid, divG[i]) for i in range(3)])
    Y = gauge_fix_linear(grid, Y)
    dY = grid.partials(Y)  # [a, i]
    P = np.einsum("ai...,i...->a...", dY, grid.xt)
    F = 0.5 * np.einsum("ab...,ai...,bi...->...", epsu, dY, frame)
    sol = LinearizedSolution(Y, P, F, curl_res)
    scale = max(1.0, float(np.max(np.abs(sigma1))))
    if curl_res > tol * scale:
        raise EmbeddingError(f"reconstruction curl residual {curl_res:.3e} (inconsistent input)")
    return sol


def linearized_residual(grid, sigma1, sol):
    """Sup-norm of ``2 sym(dX~ . dY) - sigma1`` in an orthonormal frame."""
    dY = grid.partials(sol.Y)
    lin = np.einsum("ai...,bi...->ab...", grid.frame, dY)
    lin = lin + np.swapaxes(lin, 0, 1)
    return _frame_sup(grid, lin - sigma1)


def _frame_sup(grid, T):
    s = grid.sin
    return float(max(np.max(np.abs(T[0, 0])), np.max(np.abs(T[0, 1] / s)), np.max(np.abs(T[1, 1] / s**2))))


def h0_minus2(grid, sigma1, sol=None):
    """Coefficient of ``r^-2`` in the mean curvature of the reference embedding.

    ``h0 = -X~ . Lap~ Y - sigma~^{ab} sigma1_ab``.
    """
    if sol is None:
        sol = solve_linearized(grid, sigma1)
    lapY = np.stack([s2.laplacian_round(grid, sol.Y[i]) for i in range(3)])
    tr = sigma1[0, 0] + sigma1[1, 1] / grid.sin**2
    return -np.einsum("i...,i...->...", grid.xt, lapY) - tr


# --- nonlinear embedding ----------------------------------------------------


@dataclass
class EmbeddingResult:
    X: np.ndarray
    residual: float
    iterations: int
    info: dict = field(default_factory=dict)


def induced_metric_r3(grid, X):
    dX = grid.partials(X)
    return np.einsum("ai...,bi...->ab...", dX, dX)


def admission_distance(grid, sigma):
    """``|sigma / r^2 - sigma~|`` in the round frame, with ``r^2`` the area radius squared."""
    area = grid.integrate(np.sqrt(s2.metric_det(sigma)) / grid.sin)
    r2 = area / (4 * np.pi)
    return _frame_sup(grid, sigma / r2 - s2.round_metric(grid)), float(np.sqrt(r2))


def gauge_fix(grid, X):
    """Translate to zero mean and rotate so the moment ``int X~^i X^j`` is symmetric."""
    X = X - grid.integrate(X)[:, None, None] / (4 * np.pi)
    M = np.einsum("iab,jab->ij", grid.xt * grid.weights, X)
    U, _ = scipy.linalg.polar(M)
    # X -> R X gives moment M R^T; R = U makes it U P U^T
    return np.einsum("ij,j...->i...", U, X)


def _jacobian(Bp, dX, s):
    """Jacobian of the frame components of ``dX . dX`` with respect to real coefficients."""
    # Bp[a, n, ...], dX[a, i, ...]; rows (00, 01, 11) x nodes, columns (i, n)
    J00 = 2 * np.einsum("i...,n...->...in", dX[0], Bp[0])
    J01 = (np.einsum("i...,n...->...in", dX[0], Bp[1]) + np.einsum("i...,n...->...in", dX[1], Bp[0]))
    J11 = 2 * np.einsum("i...,n...->...in", dX[1], Bp[1])
    J01 = J01 / s[..., None, None]
    J11 = J11 / (s**2)[..., None, None]
    nn = J00.shape[-1] * 3
    return np.concatenate([J00.reshape(-1, nn), J01.reshape(-1, nn), J11.reshape(-1, nn)])


def _resid(dX, sigma, s):
    m = np.einsum("ai...,bi...->ab...", dX, dX) - sigma
    return np.concatenate([m[0, 0].ravel(), (m[0, 1] / s).ravel(), (m[1, 1] / s**2).ravel()])


def align_rigid(X, Xref, weights):
    """Rigid motion of ``X`` that best matches ``Xref`` in the weighted least squares sense."""
    w = weights / weights.sum()
    cx = np.einsum("iab,ab->i", X, w)
    cr = np.einsum("iab,ab->i", Xref, w)
    M = np.einsum("iab,jab,ab->ij", Xref - cr[:, None, None], X - cx[:, None, None], w)
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    R = U @ D @ Vt
    return np.einsum("ij,jab->iab", R, X - cx[:, None, None]) + cr[:, None, None]


def embed_r3_newton(grid, sigma, X_init=None, tol=1e-11, maxit=40, chord=False,
                    admission=0.2, check_curvature=True, damped_steps=2, pinv=None,
                    align_to=None, fail_tol=1e-9):
    """Isometric embedding of ``sigma`` into R^3 by damped Gauss-Newton.

    Unknowns are real harmonic coefficients of the three components up to
    ``lmax``.  Rigid motions span the kernel of the linearization; the least
    squares minimum-norm step ignores them and the result is gauge fixed
    afterwards, or rigidly aligned with ``align_to`` when given.  With
    ``chord=True`` the first pseudo-inverse (or the supplied ``pinv``) is
    reused for every step.  Iteration stops once the metric residual drops
    below ``tol * r^2`` or stagnates; ``fail_tol`` bounds the accepted result.
    """
    sigma = np.asarray(sigma, dtype=float)
    dist, r = admission_distance(grid, sigma)
    if dist > admission:
        raise EmbeddingError(f"metric is not near-round (distance {dist:.3f})")
    if check_curvature and np.any(s2.gauss_curvature(grid, sigma) <= 0):
        raise EmbeddingError("Gauss curvature is not positive")
    if X_init is None:
        X_init = r * grid.xt
    coeff = grid.to_real(grid.analysis(np.asarray(X_init, dtype=float)))
    Bp = grid.real_basis_partials()
    s = grid.sin
    scale = r * r
    lu = pinv
    if pinv is not None:
        chord = True
    best = np.inf
    stall = 0
    it = 0
    for it in range(1, maxit + 1):
        dX = np.einsum("in,an...->ai...", coeff, Bp)
        R = _resid(dX, sigma, s)
        res = float(np.max(np.abs(R)))
        if res < tol * scale:
            break
        if res < 0.5 * best:
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                break
        best = min(best, res)
        if lu is None or not chord:
            J = _jacobian(Bp, dX, s)
            lu = scipy.linalg.pinv(J, atol=1e-12 * np.max(np.abs(J)))
        step = -(lu @ R).reshape(3, -1)
        damp = 0.5 if it <= damped_steps else 1.0
        coeff = coeff + damp * step
    dX = np.einsum("in,an...->ai...", coeff, Bp)
    res = float(np.max(np.abs(_resid(dX, sigma, s))))
    if res >= fail_tol * scale:
        raise EmbeddingError(f"no convergence after {it} iterations (residual {res / scale:.3e})")
    X = grid.synthesis(grid.from_real(coeff))
    if align_to is None:
        X = gauge_fix(grid, X)
    else:
        X = align_rigid(X, align_to, grid.weights)
    return EmbeddingResult(X, res / scale, it, {"radius": r, "admission": dist, "pinv": lu})


def mean_curvature_r3(grid, X, sigma=None):
    """Euclidean mean curvature of an isometric image, ``|Lap_sigma X|``."""
    if sigma is None:
        sigma = induced_metric_r3(grid, X)
    lap = np.stack([s2.laplace_beltrami(grid, sigma, X[i]) for i in range(3)])
    return np.sqrt(np.einsum("i...,i...->...", lap, lap))
