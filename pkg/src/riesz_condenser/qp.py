"""Dense convex QPs used by balayage and the Gauss problems.

Two problem shapes occur:

* cone projection   min  x'Kx - 2 b'x           s.t. x >= 0
* capped simplex    min  x'Gx + 2 f'x           s.t. 0 <= x <= u, sum x = 1

Both are solved by projected gradient with Barzilai-Borwein steps and then
polished by an active-set (primal-dual) iteration that solves the KKT system
on the free set exactly.  The polish is what brings certificate residuals to
round-off level; the gradient phase only has to identify the active sets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


def project_capped_simplex(y, upper, total: float = 1.0, tol: float = 1e-14, max_bisect: int = 200):
    """Euclidean projection onto {0 <= x <= upper, sum x = total}.

    x(t) = clip(y - t, 0, upper) is non-increasing in the shift t, so t is
    found by bisection; the last few ulps of mass are then spread over the
    free coordinates so the sum is exact to round-off.
    """
    y = np.asarray(y, float)
    u = np.broadcast_to(np.asarray(upper, float), y.shape)
    fin = np.isfinite(u)
    if np.sum(u) < total * (1.0 - 1e-12):
        raise ValueError("infeasible: sum of upper bounds is below the required mass")
    lo = float(np.max(y)) - total
    if np.any(fin):
        lo = min(lo, float(np.min(y[fin] - u[fin])))
    lo -= 1.0
    hi = float(np.max(y))
    scale = max(1.0, abs(lo), abs(hi))
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        s = np.sum(np.clip(y - mid, 0.0, u))
        if s > total:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * scale:
            break
    x = np.clip(y - 0.5 * (lo + hi), 0.0, u)
    for _ in range(3):
        free = (x > 0.0) & (x < u)
        gap = total - np.sum(x)
        if not np.any(free) or gap == 0.0:
            break
        x[free] = np.clip(x[free] + gap / np.count_nonzero(free), 0.0, u[free])
    return x


@dataclass
class QPResult:
    x: np.ndarray
    multiplier: float
    iterations: int
    converged: bool
    polished: bool
    objective: float


def _objective(G, f, x):
    return float(x @ (G @ x) + 2.0 * f @ x)


def spg_capped_simplex(G, f, upper, x0, tol: float = 1e-10, maxiter: int = 50000, memory: int = 10):
    """Spectral projected gradient (BB steps, nonmonotone line search)."""
    x = project_capped_simplex(x0, upper)
    Gx = G @ x
    g = 2.0 * (Gx + f)
    fx = float(x @ Gx + 2.0 * f @ x)
    hist = [fx]
    step = 1.0 / max(np.max(np.abs(np.diag(G))), 1e-300)
    it = 0
    for it in range(1, maxiter + 1):
        d = project_capped_simplex(x - step * g, upper) - x
        if np.max(np.abs(d)) <= tol * max(1.0, np.max(np.abs(x))):
            break
        Gd = G @ d
        gd = float(g @ d)
        dGd = float(d @ Gd)
        fref = max(hist[-memory:])
        lam = 1.0
        while True:
            fnew = fx + lam * gd + lam * lam * dGd
            if fnew <= fref + 1e-4 * lam * gd or lam < 1e-12:
                break
            lam *= 0.5
        x = x + lam * d
        Gx = Gx + lam * Gd
        gnew = 2.0 * (Gx + f)
        s = lam * d
        yv = gnew - g
        sy = float(s @ yv)
        step = float(s @ s) / sy if sy > 0 else 1e3 * step
        step = min(max(step, 1e-30), 1e30)
        g = gnew
        fx = float(x @ Gx + 2.0 * f @ x)
        hist.append(fx)
    return x, it


def _kkt_free(G, f, upper, F, U):
    """Solve G_FF x_F + G_FU u_U + f_F = w 1,  1'x_F = 1 - sum u_U."""
    c = f[F]
    if np.any(U):
        c = c + G[np.ix_(F, U)] @ upper[U]
    m = 1.0 - float(np.sum(upper[U])) if np.any(U) else 1.0
    cf = cho_factor(G[np.ix_(F, F)], lower=False, check_finite=False)
    a = cho_solve(cf, np.ones(np.count_nonzero(F)), check_finite=False)
    b = cho_solve(cf, c, check_finite=False)
    w = (m + float(np.sum(b))) / float(np.sum(a))
    return w * a - b, w


def active_set_capped_simplex(G, f, upper, x_start, maxiter: int = 200, tol: float = 1e-13):
    """Primal-dual active-set polish from the sets suggested by ``x_start``."""
    n = len(f)
    u = np.asarray(upper, float)
    fin = np.isfinite(u)
    scale = max(float(np.max(np.abs(x_start))), 1e-300)
    L = x_start <= 1e-12 * scale
    U = fin & (x_start >= u - 1e-12 * np.where(fin, u, 1.0)) & ~L
    F = ~(L | U)
    if not np.any(F):
        F = ~U
        L = np.zeros(n, bool)
    seen = set()
    for it in range(1, maxiter + 1):
        key = (F.tobytes(), U.tobytes())
        if key in seen:
            return None, None, it
        seen.add(key)
        try:
            xF, w = _kkt_free(G, f, u, F, U)
        except LinAlgError:
            return None, None, it
        x = np.zeros(n)
        x[U] = u[U]
        x[F] = xF
        W = G @ x + f
        tw = tol * max(1.0, abs(w))
        neg = F & (x < -tol * max(1.0, np.max(np.abs(xF))))
        over = F & fin & (x > u + tol * np.where(fin, u, 1.0))
        low_bad = L & (W < w - tw)
        up_bad = U & (W > w + tw)
        if not (np.any(neg) or np.any(over) or np.any(low_bad) or np.any(up_bad)):
            x[F] = np.clip(x[F], 0.0, u[F])
            return x, w, it
        F = (F & ~neg & ~over) | low_bad | up_bad
        L = (L & ~low_bad) | neg
        U = (U & ~up_bad) | over
        if not np.any(F):
            return None, None, it
    return None, None, maxiter


def solve_capped_simplex(G, f, upper, x0=None, method: str = "auto", tol: float = 1e-10,
                         maxiter: int = 50000) -> QPResult:
    """min x'Gx + 2f'x over {0 <= x <= upper, sum x = 1}."""
    G = np.asarray(G, float)
    f = np.asarray(f, float)
    n = len(f)
    u = np.broadcast_to(np.asarray(upper, float), (n,)).astype(float)
    if x0 is None:
        x0 = np.full(n, 1.0 / n)
    iters = 0
    if method == "auto" and not np.any(np.isfinite(u)):
        x, w, k = active_set_capped_simplex(G, f, u, np.ones(n))
        iters += k
        if x is not None:
            return QPResult(x, w, iters, True, True, _objective(G, f, x))
    xs, k = spg_capped_simplex(G, f, u, x0, tol=tol, maxiter=maxiter)
    iters += k
    x, w, k = active_set_capped_simplex(G, f, u, xs)
    iters += k
    if x is not None and _objective(G, f, x) <= _objective(G, f, xs) + 1e-12 * max(1.0, abs(_objective(G, f, xs))):
        return QPResult(x, w, iters, True, True, _objective(G, f, x))
    W = G @ xs + f
    free = (xs > 0) & (xs < u)
    w = float(np.mean(W[free])) if np.any(free) else float(W @ xs)
    return QPResult(xs, w, iters, k < maxiter, False, _objective(G, f, xs))


# ---------------------------------------------------------------------------
# cone projection
# ---------------------------------------------------------------------------


def _active_set_nonneg(K, b, x_start, maxiter: int = 200, tol: float = 1e-13):
    n = len(b)
    F = x_start > 0
    seen = set()
    for it in range(1, maxiter + 1):
        key = F.tobytes()
        if key in seen:
            return None, it
        seen.add(key)
        x = np.zeros(n)
        if np.any(F):
            try:
                cf = cho_factor(K[np.ix_(F, F)], check_finite=False)
            except LinAlgError:
                return None, it
            x[F] = cho_solve(cf, b[F], check_finite=False)
        r = K @ x - b
        sc = tol * max(1.0, float(np.max(np.abs(b))))
        neg = F & (x < -tol * max(1.0, float(np.max(np.abs(x)))))
        bad = ~F & (r < -sc)
        if not np.any(neg) and not np.any(bad):
            return np.maximum(x, 0.0), it
        F = (F & ~neg) | bad
    return None, maxiter


def solve_nonneg_batch(K, B, chol=None, maxiter: int = 2000, tol: float = 1e-10):
    """Column-wise min x'Kx - 2 b'x, x >= 0, for every column b of B.

    Returns (X, iterations, converged-mask).  Columns whose unconstrained
    solution is already nonnegative are exact after one Cholesky solve;
    the others run projected BB iterations from the clipped solution and are
    then polished on their free sets.
    """
    B = np.atleast_2d(np.asarray(B, float).T).T
    if chol is None:
        chol = cho_factor(K, check_finite=False)
    X = cho_solve(chol, B, check_finite=False)
    bad = np.flatnonzero(np.any(X < 0.0, axis=0))
    iters = np.zeros(B.shape[1], dtype=int)
    conv = np.ones(B.shape[1], dtype=bool)
    if len(bad) == 0:
        return X, iters, conv
    Y = np.maximum(X[:, bad], 0.0)
    Bb = B[:, bad]
    step = np.full(len(bad), 1.0 / np.max(np.diag(K)))
    G = 2.0 * (K @ Y - Bb)
    obj_prev = np.einsum("ij,ij->j", Y, K @ Y - 2.0 * Bb)
    active = np.ones(len(bad), dtype=bool)
    for it in range(1, maxiter + 1):
        Ynew = np.maximum(Y - step * G, 0.0)
        S = Ynew - Y
        Gnew = 2.0 * (K @ Ynew - Bb)
        obj = np.einsum("ij,ij->j", Ynew, K @ Ynew - 2.0 * Bb)
        Yd = Gnew - G
        sy = np.einsum("ij,ij->j", S, Yd)
        ss = np.einsum("ij,ij->j", S, S)
        step = np.where(sy > 0, ss / np.where(sy > 0, sy, 1.0), step * 2.0)
        dec = np.abs(obj_prev - obj) <= tol * np.maximum(1.0, np.abs(obj))
        Y, G, obj_prev = Ynew, Gnew, obj
        iters[bad[active]] = it
        active &= ~dec
        if not np.any(active):
            break
    for k, j in enumerate(bad):
        x, _ = _active_set_nonneg(K, B[:, j], Y[:, k])
        if x is None:
            X[:, j] = Y[:, k]
            conv[j] = not active[k]
        else:
            X[:, j] = x
    return X, iters, conv
