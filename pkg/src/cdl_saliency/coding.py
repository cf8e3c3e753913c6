"""l1-regularized least-squares sparse coding.

Solves ``min_a 0.5 * ||x - D a||^2 + lam * ||a||_1``. Two solvers share
one optimality certificate (the KKT residual):

* ``feature_sign`` (default): feature-sign search, an exact active-set
  method. Each step solves the sign-constrained quadratic on the active set
  and line-searches toward it across zero crossings, so the objective never
  increases and the iteration terminates at the exact minimizer.
* ``cd``: cyclic coordinate descent with soft-thresholding, in index order.

Gram columns are computed lazily, since only atoms that ever become active
need them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, DimensionError, InputError

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000
METHODS = ("feature_sign", "cd")


@dataclass
class SparseCode:
    alpha: np.ndarray
    kkt: float = 0.0
    sweeps: int = 0
    trace: list[float] = field(default_factory=list)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.alpha))


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def lasso_objective(x, D, alpha, lambda1) -> float:
    r = x - D @ alpha
    return 0.5 * float(r @ r) + lambda1 * float(np.abs(alpha).sum())


def kkt_residual(x, D, alpha, lambda1) -> float:
    """Largest violation of the lasso stationarity conditions.

    With ``g = D^T (D alpha - x)``: ``|g_j + lam * sign(alpha_j)|`` on the
    support and ``max(|g_j| - lam, 0)`` off it.
    """
    x = np.asarray(x, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if D.shape != (x.size, alpha.size):
        raise DimensionError(f"D {D.shape} inconsistent with x {x.shape}, alpha {alpha.shape}")
    return _kkt(alpha, D.T @ (x - D @ alpha), float(lambda1))


@njit(cache=True)
def _kkt(alpha, g, lam):
    # g is the negative least-squares gradient D^T (x - D alpha).
    res = 0.0
    for j in range(alpha.size):
        a = alpha[j]
        if a > 0.0:
            v = abs(lam - g[j])
        elif a < 0.0:
            v = abs(g[j] + lam)
        else:
            v = abs(g[j]) - lam
        if v > res:
            res = v
    return res


@njit(cache=True)
def _ensure_col(DT, gram, have, j):
    if not have[j]:
        # Row j holds Gram column j (the matrix is symmetric).
        gram[j] = DT @ DT[j]
        have[j] = True


@njit(cache=True)
def _objective(D, x, alpha, lam):
    r = x.copy()
    l1 = 0.0
    for j in range(alpha.size):
        a = alpha[j]
        if a != 0.0:
            l1 += abs(a)
            for i in range(x.size):
                r[i] -= a * D[i, j]
    return 0.5 * np.dot(r, r) + lam * l1


@njit(cache=True)
def _cd(D, DT, x, lam, alpha, g, gram, have, norms2, tol, max_sweeps, trace):
    k = alpha.size
    sweeps = 0
    while sweeps < max_sweeps and _kkt(alpha, g, lam) > tol:
        for j in range(k):
            nj = norms2[j]
            if nj <= 0.0:
                continue
            aj = alpha[j]
            z = aj + g[j] / nj
            thr = lam / nj
            if z > thr:
                new = z - thr
            elif z < -thr:
                new = z + thr
            else:
                new = 0.0
            d = new - aj
            if d != 0.0:
                _ensure_col(DT, gram, have, j)
                for i in range(k):
                    g[i] -= d * gram[j, i]
                alpha[j] = new
        if sweeps < trace.size:
            trace[sweeps] = _objective(D, x, alpha, lam)
        sweeps += 1
    return sweeps


@njit(cache=True)
def _cholesky_solve(G, b):
    """Solve G y = b for SPD G; returns (y, ok)."""
    m = b.size
    L = np.zeros((m, m))
    scale = 0.0
    for i in range(m):
        scale = max(scale, G[i, i])
    for j in range(m):
        s = G[j, j]
        for p in range(j):
            s -= L[j, p] * L[j, p]
        if s <= 1e-12 * max(scale, 1.0):
            return b, False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, m):
            s = G[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / L[j, j]
    y = b.copy()
    for i in range(m):
        s = y[i]
        for p in range(i):
            s -= L[i, p] * y[p]
        y[i] = s / L[i, i]
    for i in range(m - 1, -1, -1):
        s = y[i]
        for p in range(i + 1, m):
            s -= L[p, i] * y[p]
        y[i] = s / L[i, i]
    return y, True


@njit(cache=True)
def _line_value(rr, ru, uu, lam, cur, delta, t):
    # Objective at cur + t * delta, from r0 = x - D_A cur and u = D_A delta.
    l1 = 0.0
    for p in range(cur.size):
        l1 += abs(cur[p] + t * delta[p])
    return 0.5 * (rr - 2.0 * t * ru + t * t * uu) + lam * l1


@njit(cache=True)
def _feature_sign(D, DT, x, dtx, lam, alpha, g, gram, have, target, max_steps, trace):
    n, k = D.shape
    act = np.empty(k, np.int64)
    m = 0
    for j in range(k):
        if alpha[j] != 0.0:
            act[m] = j
            m += 1
    steps = 0
    while steps < max_steps:
        if _kkt(alpha, g, lam) <= target:
            break
        on_support = 0.0
        for p in range(m):
            j = act[p]
            s = 1.0 if alpha[j] > 0.0 else -1.0
            on_support = max(on_support, abs(g[j] - lam * s))
        new_sign = 0.0
        if on_support <= target:
            best = -1
            bv = target
            for j in range(k):
                if alpha[j] == 0.0:
                    v = abs(g[j]) - lam
                    if v > bv:
                        bv = v
                        best = j
            if best < 0:
                break
            _ensure_col(DT, gram, have, best)
            act[m] = best
            m += 1
            new_sign = 1.0 if g[best] > 0.0 else -1.0
        A = act[:m]
        cur = np.empty(m)
        theta = np.empty(m)
        rhs = np.empty(m)
        G = np.empty((m, m))
        for p in range(m):
            j = A[p]
            cur[p] = alpha[j]
            if alpha[j] > 0.0:
                theta[p] = 1.0
            elif alpha[j] < 0.0:
                theta[p] = -1.0
            else:
                theta[p] = new_sign
            rhs[p] = dtx[j] - lam * theta[p]
            for q in range(m):
                G[p, q] = gram[A[q], j]
        new, ok = _cholesky_solve(G, rhs)
        steps += 1
        null_step = not ok
        if null_step:
            # Dependent active atoms: move along a null direction of D_A, which
            # leaves the residual alone, so the l1 term decides the orientation.
            v = np.linalg.eigh(G)[1][:, 0].copy()
            flip = False
            if new_sign != 0.0 and abs(v[m - 1]) > 1e-12:
                flip = v[m - 1] * new_sign < 0.0
            else:
                slope = 0.0
                for p in range(m):
                    slope += theta[p] * v[p]
                flip = slope > 0.0
            if flip:
                v = -v
            t_cross = np.inf
            p_cross = -1
            for p in range(m):
                if cur[p] != 0.0 and cur[p] * v[p] < 0.0:
                    tp = -cur[p] / v[p]
                    if tp < t_cross:
                        t_cross = tp
                        p_cross = p
            if p_cross < 0:
                break
            new = cur + t_cross * v
        if not np.all(np.isfinite(new)):
            break
        delta = new - cur
        r0 = x.copy()
        u = np.zeros(n)
        for p in range(m):
            j = A[p]
            for i in range(n):
                r0[i] -= cur[p] * D[i, j]
                u[i] += delta[p] * D[i, j]
        rr = np.dot(r0, r0)
        ru = np.dot(r0, u)
        uu = np.dot(u, u)
        prev = _line_value(rr, ru, uu, lam, cur, delta, 0.0)
        best_t = 1.0
        best_v = _line_value(rr, ru, uu, lam, cur, delta, 1.0)
        best_p = -1
        if null_step:
            best_p = p_cross
        else:
            for p in range(m):
                if cur[p] != 0.0 and (new[p] > 0.0) != (cur[p] > 0.0):
                    t = cur[p] / (cur[p] - new[p])
                    v_t = _line_value(rr, ru, uu, lam, cur, delta, t)
                    if v_t < best_v:
                        best_v = v_t
                        best_t = t
                        best_p = p
        if best_v > prev + 1e-14 * (1.0 + abs(prev)):
            break
        for p in range(m):
            j = A[p]
            if p == best_p:
                sp = -cur[p]
            else:
                sp = best_t * delta[p]
            alpha[j] = cur[p] + sp
            if p == best_p:
                alpha[j] = 0.0
            if sp != 0.0:
                for i in range(k):
                    g[i] -= sp * gram[j, i]
        if steps - 1 < trace.size:
            trace[steps - 1] = best_v
        # Drop coordinates that reached zero.
        w = 0
        for p in range(m):
            if alpha[act[p]] != 0.0:
                act[w] = act[p]
                w += 1
        m = w
    return steps


class _Problem:
    """Per-dictionary data shared across solves (transposed atoms, Gram cache)."""

    def __init__(self, D, full_gram=False):
        D = np.asarray(D, dtype=np.float64)
        if D.ndim != 2:
            raise DimensionError(f"dictionary must be 2-D, got {D.shape}")
        if not np.all(np.isfinite(D)):
            raise InputError("dictionary has non-finite entries")
        # Column-major D keeps atom reads contiguous; its transpose is row-major.
        self.D = np.asfortranarray(D)
        self.DT = self.D.T
        self.norms2 = np.einsum("ij,ij->j", D, D)
        k = D.shape[1]
        if full_gram:
            self.gram = self.DT @ self.D
            self.have = np.ones(k, dtype=np.bool_)
        else:
            self.gram = np.empty((k, k))
            self.have = np.zeros(k, dtype=np.bool_)


def _solve(prob, x, dtx, lam, tol, max_iter, method, want_trace):
    alpha = np.zeros(prob.D.shape[1])
    g = dtx.copy()
    trace = [0.5 * float(x @ x)]
    buf = np.empty(max_iter if want_trace else 0)
    used = 0
    # The incrementally updated gradient can drift; refresh it and resume.
    for _ in range(3):
        budget = max_iter - used
        if budget <= 0:
            break
        view = buf[used:]
        if method == "cd":
            steps = _cd(prob.D, prob.DT, x, lam, alpha, g, prob.gram, prob.have,
                        prob.norms2, tol, budget, view)
        else:
            steps = _feature_sign(prob.D, prob.DT, x, dtx, lam, alpha, g, prob.gram,
                                  prob.have, 1e-3 * tol, budget, view)
        if want_trace:
            trace.extend(buf[used:used + steps].tolist())
        used += steps
        g = dtx - prob.DT @ (prob.D @ alpha)
        res = _kkt(alpha, g, lam)
        if res <= tol:
            return SparseCode(alpha, res, used, trace if want_trace else [])
    raise ConvergenceError(_kkt(alpha, g, lam), used)


def _check(x, lambda1, tol, n, method):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("signal has non-finite entries")
    if not np.isfinite(lambda1) or lambda1 < 0:
        raise InputError(f"lambda1 must be finite and nonnegative, got {lambda1}")
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if x.shape[0] != n:
        raise DimensionError(f"signal length {x.shape[0]} != dictionary rows {n}")
    return x


def lasso_solve(x, D, lambda1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                method="feature_sign", trace=False) -> SparseCode:
    """Sparse code of one signal ``x`` against dictionary ``D`` (n x k).

    ``max_iter`` bounds coordinate sweeps (``cd``) or active-set steps
    (``feature_sign``). With ``trace=True`` the code carries the objective
    after every sweep or step, starting from the all-zero code.

    Raises ConvergenceError (carrying the final KKT residual) when the
    budget runs out before the residual drops to ``tol``.
    """
    prob = _Problem(D)
    x = _check(x, lambda1, tol, prob.D.shape[0], method)
    if x.ndim != 1:
        raise DimensionError("lasso_solve expects a single vector")
    x = np.ascontiguousarray(x)
    return _solve(prob, x, prob.DT @ x, float(lambda1), tol, max_iter, method, trace)


def lasso_solve_many(X, D, lambda1, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                     method="feature_sign") -> np.ndarray:
    """Codes for every column of ``X``; returns a k x m coefficient matrix."""
    prob = _Problem(D, full_gram=True)
    X = _check(X, lambda1, tol, prob.D.shape[0], method)
    if X.ndim == 1:
        X = X[:, None]
    DTX = prob.DT @ X
    out = np.zeros((prob.D.shape[1], X.shape[1]))
    for i in range(X.shape[1]):
        x = np.ascontiguousarray(X[:, i])
        out[:, i] = _solve(prob, x, DTX[:, i], float(lambda1), tol, max_iter, method, False).alpha
    return out
