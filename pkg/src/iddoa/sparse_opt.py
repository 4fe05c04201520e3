"""Convex solvers for on-grid sparse recovery with real nonnegative weights.

The complex model ``y ~ D x`` with real ``x`` is handled through the
real-stacked system ``[Re D; Im D] x ~ [Re y; Im y]``, which has the same
residual norm and gradient ``2 Re(D^H (D x - y))``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DomainError, NumericalFailure

__all__ = [
    "LassoSolution",
    "LCurveResult",
    "StlsSolution",
    "nonneg_lasso",
    "lasso_objective",
    "lambda_max",
    "default_lambda_grid",
    "select_lambda_lcurve",
    "gamma_update",
    "stls_objective",
    "stls_alternating",
]


@dataclass
class LassoSolution:
    coeffs: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)


def _as_matrix(D):
    return np.asarray(getattr(D, "columns", D))


def _stack(D, y):
    D = _as_matrix(D)
    y = np.asarray(y)
    if D.ndim != 2 or y.ndim != 1 or D.shape[0] != y.shape[0]:
        raise DomainError(
            f"dictionary rows ({D.shape}) and data length ({y.shape}) disagree")
    if np.iscomplexobj(D) or np.iscomplexobj(y):
        A = np.vstack([D.real, D.imag])
        b = np.concatenate([np.real(y), np.imag(y)])
    else:
        A, b = np.asarray(D, float), np.asarray(y, float)
    return A, b


def lasso_objective(D, y, x, lam):
    """``||y - D x||_2^2 + lam ||x||_1``."""
    r = np.asarray(y) - _as_matrix(D) @ x
    return float(np.vdot(r, r).real + lam * np.sum(np.abs(x)))


def lambda_max(D, y):
    """Smallest penalty for which ``x = 0`` solves the nonnegative lasso."""
    A, b = _stack(D, y)
    return float(2.0 * max(np.max(A.T @ b), 0.0))


def _compress(A, b):
    """Rank-reduce ``A x ~ b`` to ``S V^T x ~ U^T b``.

    Returns ``(A_r, b_r, offset, lipschitz)`` where ``offset`` is the part of
    ``||b||^2`` outside the range of ``A``, so residual norms are preserved.
    """
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, A.shape[1])), np.zeros(0), float(b @ b), 0.0
    r = int(np.sum(s > s[0] * 1e-12))
    A_r = np.asfortranarray(s[:r, None] * Vt[:r])
    b_r = U[:, :r].T @ b
    offset = max(float(b @ b - b_r @ b_r), 0.0)
    return A_r, b_r, offset, 2.0 * float(s[0]) ** 2


@numba.njit(cache=True)
def _objective(A, b, offset, lam, x, Ax):  # pragma: no cover
    n, G = A.shape
    obj = offset
    for i in range(n):
        acc = 0.0
        for j in range(G):
            acc += A[i, j] * x[j]
        Ax[i] = acc
        d = acc - b[i]
        obj += d * d
    l1 = 0.0
    for j in range(G):
        l1 += x[j]
    return obj + lam * l1


@numba.njit(cache=True)
def _fista_kernel(A, b, offset, lam, x0, step, tol, max_iter, trace):  # pragma: no cover
    n, G = A.shape
    x = np.maximum(x0, 0.0)
    x_prev = x.copy()
    y = x.copy()
    z = np.empty(G)
    Ax = np.empty(n)
    Ax_prev = np.empty(n)
    Ay = np.empty(n)
    Az = np.empty(n)
    res = np.empty(n)
    obj = _objective(A, b, offset, lam, x, Ax)
    Ax_prev[:] = Ax
    Ay[:] = Ax
    trace[0] = obj
    ntr = 1
    t = 1.0
    shrink = lam * step
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for i in range(n):
            res[i] = 2.0 * step * (Ay[i] - b[i])
        # z = max(y - step * (2 A^T (A y - b) + lam), 0)
        for j in range(G):
            acc = 0.0
            for i in range(n):
                acc += A[i, j] * res[i]
            v = y[j] - acc - shrink
            z[j] = v if v > 0.0 else 0.0
        obj_z = _objective(A, b, offset, lam, z, Az)
        if not np.isfinite(obj_z):
            return x, obj, it, False, ntr, True
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if obj_z <= obj:
            decrease = obj - obj_z
            obj_prev = obj
            c1 = (t - 1.0) / t_next
            for j in range(G):
                x_prev[j] = x[j]
                x[j] = z[j]
                y[j] = z[j] + c1 * (z[j] - x_prev[j])
            for i in range(n):
                Ax_prev[i] = Ax[i]
                Ax[i] = Az[i]
                Ay[i] = Az[i] + c1 * (Az[i] - Ax_prev[i])
            obj = obj_z
            trace[ntr] = obj
            ntr += 1
            t = t_next
            if decrease <= tol * max(obj_prev, 1e-300):
                converged = True
                break
        else:
            # momentum overshoot: restart from the current iterate
            trace[ntr] = obj
            ntr += 1
            if t == 1.0:
                # a plain proximal step cannot raise the objective beyond
                # rounding, so x is stationary
                converged = True
                break
            t = 1.0
            y[:] = x
            Ay[:] = Ax
    return x, obj, it, converged, ntr, False


def _fista(A, b, lam, x0, tol, max_iter, compressed=None):
    """Monotone FISTA with function-value restart on ``A x ~ b``, ``x >= 0``.

    Returns ``(x, objective, iterations, converged, trace)``.
    """
    A_r, b_r, offset, lip = _compress(A, b) if compressed is None else compressed
    x0 = np.maximum(np.asarray(x0, dtype=float), 0.0)
    # x = 0 is optimal iff lam >= 2 max(A^T b)_+; test it on the original
    # system so rounding in the compressed one cannot leave dust behind
    if lip == 0.0 or lam >= 2.0 * max(float(np.max(A.T @ b)), 0.0):
        obj = float(b @ b)
        return np.zeros(A.shape[1]), obj, 0, True, [obj]
    trace = np.empty(max_iter + 1)
    x, obj, it, conv, ntr, bad = _fista_kernel(
        A_r, b_r, offset, float(lam), x0, 1.0 / lip, float(tol), int(max_iter), trace)
    if bad:
        raise NumericalFailure("lasso objective became non-finite")
    return x, float(obj), int(it), bool(conv), trace[:ntr].tolist()


def nonneg_lasso(D, y, lam, tol=1e-8, max_iter=5000, x0=None):
    """Minimize ``||y - D x||_2^2 + lam ||x||_1`` over real ``x >= 0``.

    Accelerated proximal gradient with a monotone safeguard, so the
    recorded objective never increases.

    Parameters
    ----------
    D : (n, G) complex array or Dictionary
    y : (n,) complex array
    lam : float
        Penalty weight, ``lam >= 0``.
    tol : float
        Stop once an accepted step lowers the objective by less than
        ``tol`` times its previous value.
    max_iter : int
    x0 : (G,) array, optional
        Warm start; negative entries are clipped.

    Returns
    -------
    LassoSolution
    """
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    A, b = _stack(D, y)
    x0 = np.zeros(A.shape[1]) if x0 is None else np.asarray(x0, float)
    if x0.shape != (A.shape[1],):
        raise DomainError("warm start length must equal the number of columns")
    x, obj, it, conv, trace = _fista(A, b, float(lam), x0, tol, max_iter)
    return LassoSolution(x, obj, it, conv, trace)


def default_lambda_grid(D, y, num=20, lo=1e-3, hi=1.0):
    lam0 = lambda_max(D, y)
    if lam0 == 0.0:
        lam0 = 1.0
    return lam0 * np.logspace(np.log10(lo), np.log10(hi), num)


@dataclass
class LCurveResult:
    lam: float
    index: int
    lambdas: np.ndarray
    residual_norms: np.ndarray
    solution_norms: np.ndarray
    curvature: np.ndarray
    degenerate: bool
    solution: LassoSolution = field(repr=False)


def _menger_curvature(px, py):
    """Signed three-point curvature at interior points; NaN where undefined."""
    kappa = np.full(px.size, np.nan)
    for i in range(1, px.size - 1):
        ax, ay = px[i] - px[i - 1], py[i] - py[i - 1]
        bx, by = px[i + 1] - px[i], py[i + 1] - py[i]
        cx, cy = px[i + 1] - px[i - 1], py[i + 1] - py[i - 1]
        denom = np.hypot(ax, ay) * np.hypot(bx, by) * np.hypot(cx, cy)
        if denom > 0 and np.isfinite(denom):
            kappa[i] = 2.0 * (ax * by - ay * bx) / denom
    return kappa


def select_lambda_lcurve(D, y, lambda_grid=None, tol=1e-8, max_iter=5000):
    """Choose the lasso penalty at the corner of the L-curve.

    Each penalty in ``lambda_grid`` (ascending) is solved, warm-starting
    from the next larger one, giving points ``(log ||y - D x||_2,
    log ||x||_1)``. Both axes are rescaled to unit range and the signed
    three-point curvature is evaluated along increasing penalty. With
    ``x >= 0`` the solution norm stays bounded as the penalty vanishes, so
    the curve runs flat and then drops; its corner is the sharpest
    clockwise turn (most negative signed curvature). Ties go to the larger
    penalty. Points whose solution or residual is numerically zero are
    left out.

    Returns
    -------
    LCurveResult
        ``degenerate`` is set (and the median penalty returned) when all
        solutions coincide or fewer than three usable points remain.
    """
    A, b = _stack(D, y)
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(D, y)
    lambdas = np.asarray(lambda_grid, dtype=float)
    if lambdas.size < 3:
        raise DomainError("L-curve needs at least 3 penalty values")
    if np.any(lambdas <= 0) or np.any(np.diff(lambdas) <= 0):
        raise DomainError("penalty grid must be positive and ascending")

    compressed = _compress(A, b)
    sols = [None] * lambdas.size
    x = np.zeros(A.shape[1])
    for i in range(lambdas.size - 1, -1, -1):
        x, obj, it, conv, trace = _fista(A, b, lambdas[i], x, tol, max_iter, compressed)
        sols[i] = LassoSolution(x, obj, it, conv, trace)

    res = np.array([np.linalg.norm(A @ s.coeffs - b) for s in sols])
    norm1 = np.array([s.coeffs.sum() for s in sols])
    valid = (res > 1e-12 * max(res.max(), 1e-300)) & (norm1 > 1e-8 * max(norm1.max(), 1e-300))
    kappa = np.full(lambdas.size, np.nan)
    idx = np.flatnonzero(valid)
    if idx.size >= 3:
        px, py = np.log(res[idx]), np.log(norm1[idx])
        px = (px - px.min()) / (np.ptp(px) or 1.0)
        py = (py - py.min()) / (np.ptp(py) or 1.0)
        kappa[idx] = _menger_curvature(px, py)

    coeffs = np.array([s.coeffs for s in sols])
    identical = np.allclose(coeffs, coeffs[0], rtol=0, atol=1e-12 * max(1.0, np.abs(coeffs).max()))
    degenerate = identical or not np.any(np.isfinite(kappa))
    if degenerate:
        warnings.warn("L-curve is degenerate; using the median penalty", RuntimeWarning)
        k = lambdas.size // 2
    else:
        best = np.nanmin(kappa)
        k = int(np.flatnonzero(kappa == best)[-1])
    return LCurveResult(float(lambdas[k]), k, lambdas, res, norm1, kappa, degenerate, sols[k])


@dataclass
class StlsSolution:
    """Result of the alternating sparse total least-squares solve.

    The dictionary perturbation is ``gamma_left[:, None] * gamma_right``.
    """

    coeffs: np.ndarray
    gamma_left: np.ndarray
    gamma_right: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool

    @property
    def gamma(self):
        return np.outer(self.gamma_left, self.gamma_right)


def gamma_update(psi, r4, p):
    """Minimizer of ``||r4 - (psi + G) p||^2 + ||G||_F^2`` over ``G``.

    Returns the rank-one factors ``(u, q)`` with ``G = u q^T``,
    ``u = r4 - psi p`` and ``q = p / (1 + ||p||^2)``.
    """
    psi = _as_matrix(psi)
    p = np.asarray(p, dtype=float)
    u = np.asarray(r4, dtype=complex) - psi @ p
    return u, p / (1.0 + p @ p)


def stls_objective(psi, r4, p, u, q, lam):
    """``||r4 - (psi + u q^T) p||^2 + ||u q^T||_F^2 + lam ||p||_1``."""
    psi = _as_matrix(psi)
    resid = r4 - psi @ p - u * (q @ p)
    return float(np.vdot(resid, resid).real + np.vdot(u, u).real * (q @ q) + lam * np.abs(p).sum())


def stls_alternating(psi, r4, lam, epsilon=1e-6, max_iter=30, p_init=None,
                     lasso_tol=1e-8, lasso_max_iter=5000):
    """Alternate a nonnegative-lasso step in ``p`` with the closed-form
    rank-one perturbation step, starting from the perturbation implied by
    ``p_init``.

    Stops when ``||p_i - p_{i-1}||_2 < epsilon`` (``converged``) or after
    ``max_iter`` alternations.
    """
    psi = _as_matrix(psi)
    r4 = np.asarray(r4, dtype=complex)
    if psi.shape[0] != r4.shape[0]:
        raise DomainError("dictionary rows and r4 length disagree")
    G = psi.shape[1]
    p = np.zeros(G) if p_init is None else np.maximum(np.asarray(p_init, float), 0.0)
    if p.shape != (G,):
        raise DomainError("p_init length must equal the grid size")

    if np.any(p > 0):
        u, q = gamma_update(psi, r4, p)
    else:
        u, q = np.zeros(psi.shape[0], dtype=complex), np.zeros(G)
    trace = [stls_objective(psi, r4, p, u, q, lam)]
    psi_re, psi_im = psi.real, psi.imag
    b = np.concatenate([r4.real, r4.imag])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        A = np.vstack([psi_re + np.outer(u.real, q), psi_im + np.outer(u.imag, q)])
        p_new = _fista(A, b, lam, p, lasso_tol, lasso_max_iter)[0]
        u, q = gamma_update(psi, r4, p_new)
        obj = stls_objective(psi, r4, p_new, u, q, lam)
        if not np.isfinite(obj):
            raise NumericalFailure("STLS objective became non-finite")
        trace.append(obj)
        step = np.linalg.norm(p_new - p)
        p = p_new
        if step < epsilon:
            converged = True
            break
    return StlsSolution(p, u, q, trace, it, converged)
