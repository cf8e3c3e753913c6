"""Reference computations kept independent of the package code paths."""

import numpy as np


def lasso_pg(x, D, lam, tol=1e-10, max_iter=500000):
    """Lasso by accelerated projected gradient on the split a = u - v, u, v >= 0.

    Stops once the projected-gradient residual ``max |min(z, grad)|`` of the
    split problem is at most ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    k = D.shape[1]
    G = D.T @ D
    b = D.T @ x
    step = 1.0 / (2.0 * np.linalg.eigvalsh(G)[-1] + 1e-300)

    def grad(z):
        g = G @ (z[:k] - z[k:]) - b
        return np.concatenate([g + lam, -g + lam])

    z = np.zeros(2 * k)
    y = z.copy()
    t = 1.0
    for _ in range(max_iter):
        gz = grad(z)
        if np.max(np.abs(np.minimum(z, gz))) <= tol:
            break
        z_new = np.maximum(y - step * grad(y), 0.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = z_new + ((t - 1) / t_new) * (z_new - z)
        # Restart momentum whenever it points uphill.
        if np.dot(y - z_new, z_new - z) > 0 and np.dot(grad(z_new), z_new - z) > 0:
            y = z_new.copy()
            t_new = 1.0
        z, t = z_new, t_new
    return z[:k] - z[k:]


def lasso_value(x, D, a, lam):
    r = x - D @ a
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def soft(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def random_instance(rng, n_max=32, k_max=64):
    n = int(rng.integers(4, n_max + 1))
    k = int(rng.integers(2, k_max + 1))
    D = rng.standard_normal((n, k))
    D /= np.linalg.norm(D, axis=0)
    x = rng.standard_normal(n)
    lam = float(rng.uniform(0.05, 0.6) * np.max(np.abs(D.T @ x)))
    return x, D, lam


def column_l2_sum(residual, side):
    total = 0.0
    for c in range(side):
        col = [residual[c * side + r] for r in range(side)]
        total += sum(v * v for v in col) ** 0.5
    return total


def _mean(vals):
    return sum(vals) / len(vals)


def _sample_std(vals):
    if len(vals) < 2:
        return 0.0
    mu = _mean(vals)
    return (sum((v - mu) ** 2 for v in vals) / (len(vals) - 1)) ** 0.5


def s_measure_loops(pred, gt, alpha=0.5):
    """Structure measure written out with 1-based index loops."""
    eps = 2.0 ** -52
    hei, wid = len(gt), len(gt[0])
    cells = [(i, j) for i in range(1, hei + 1) for j in range(1, wid + 1)]
    P = lambda i, j: float(pred[i - 1][j - 1])
    G = lambda i, j: bool(gt[i - 1][j - 1])
    y = sum(G(i, j) for i, j in cells) / len(cells)
    if y == 0:
        return 1.0 - _mean([P(i, j) for i, j in cells])
    if y == 1:
        return _mean([P(i, j) for i, j in cells])

    def obj(vals):
        x = _mean(vals)
        return 2.0 * x / (x * x + 1.0 + _sample_std(vals) + eps)

    fg = obj([P(i, j) for i, j in cells if G(i, j)])
    bg = obj([1.0 - P(i, j) for i, j in cells if not G(i, j)])
    s_o = y * fg + (1 - y) * bg

    total = sum(G(i, j) for i, j in cells)
    X = sum(j for i, j in cells if G(i, j)) / total
    Y = sum(i for i, j in cells if G(i, j)) / total
    X, Y = int(X + 0.5), int(Y + 0.5)  # positive, so this rounds half up

    def ssim(region):
        if not region:
            return 0.0
        n = len(region)
        xs = [P(i, j) for i, j in region]
        ys = [float(G(i, j)) for i, j in region]
        mx, my = _mean(xs), _mean(ys)
        vx = sum((a - mx) ** 2 for a in xs) / (n - 1 + eps)
        vy = sum((b - my) ** 2 for b in ys) / (n - 1 + eps)
        cxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / (n - 1 + eps)
        num = 4 * mx * my * cxy
        den = (mx * mx + my * my) * (vx + vy)
        if num != 0:
            return num / (den + eps)
        return 1.0 if den == 0 else 0.0

    area = wid * hei
    quads = [
        ([(i, j) for i, j in cells if i <= Y and j <= X], X * Y / area),
        ([(i, j) for i, j in cells if i <= Y and j > X], (wid - X) * Y / area),
        ([(i, j) for i, j in cells if i > Y and j <= X], X * (hei - Y) / area),
    ]
    quads.append(([(i, j) for i, j in cells if i > Y and j > X], 1.0 - sum(w for _, w in quads)))
    s_r = sum(w * ssim(region) for region, w in quads)
    return max(0.0, alpha * s_o + (1 - alpha) * s_r)


def e_measure_loops(pred, gt):
    """Enhanced-alignment measure, binarizing at min(2 * mean, 1) with >=."""
    eps = 2.0 ** -52
    flat_p = [float(v) for row in pred for v in row]
    flat_g = [float(bool(v)) for row in gt for v in row]
    thr = min(2 * _mean(flat_p), 1.0)
    fm = [1.0 if v >= thr else 0.0 for v in flat_p]
    if sum(flat_g) == 0:
        enhanced = [1.0 - f for f in fm]
    elif sum(flat_g) == len(flat_g):
        enhanced = fm
    else:
        mf, mg = _mean(fm), _mean(flat_g)
        enhanced = []
        for f, g in zip(fm, flat_g):
            af, ag = f - mf, g - mg
            align = 2 * ag * af / (ag * ag + af * af + eps)
            enhanced.append((align + 1) ** 2 / 4)
    return sum(enhanced) / len(enhanced)
