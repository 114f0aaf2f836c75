"""Independent reference implementations used only by the tests.

Nothing here imports the package under test. Each function is written the slow,
obvious way (explicit loops, textbook formulas) so it can serve as an oracle.
"""
import math

import numpy as np


def normal_equations(design, targets):
    """(B^T B)^{-1} B^T Y via an explicit inverse."""
    b = np.asarray(design, dtype=np.float64)
    return np.linalg.inv(b.T @ b) @ b.T @ np.asarray(targets, dtype=np.float64)


def charpoly_faddeev_leverrier(a):
    """Coefficients c_0..c_n of det(lambda I - A) = sum c_k lambda^(n-k), c_0 = 1."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.array(coeffs)


def eig_magnitudes_by_roots(a):
    return np.sort(np.abs(np.roots(charpoly_faddeev_leverrier(a))))[::-1]


def mlp_straight_line(weights, biases, x, relu_hidden=True):
    """Evaluate an MLP sample by sample with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    out = []
    for row in x:
        h = list(row)
        for li, (w, b) in enumerate(zip(weights, biases)):
            nxt = []
            for i in range(w.shape[0]):
                acc = b[i]
                for j in range(w.shape[1]):
                    acc += w[i, j] * h[j]
                nxt.append(acc)
            last = li == len(weights) - 1
            h = nxt if (last or not relu_hidden) else [max(0.0, v) for v in nxt]
        out.append(h)
    return np.array(out)


def adam_scalar(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, wd=0.0, decoupled=False):
    """Hand recursion of Adam / AdamW on a scalar; returns the parameter after each step."""
    m = v = 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        if decoupled:
            theta = theta - lr * wd * theta
        else:
            g = g + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        trace.append(theta)
    return trace


def adam_quadratic(theta, steps, lr=1e-3, c=2.0):
    """Adam on f(theta) = c/2 theta^2, gradients taken at the current iterate."""
    m = v = 0.0
    trace = []
    for t in range(1, steps + 1):
        g = c * theta
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta = theta - lr * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        trace.append(theta)
    return trace


def plateau_trace(losses, lr, patience, factor, threshold=0.0):
    """Scripted reduce-on-plateau: reduce when the stale count exceeds patience."""
    best = None
    stale = 0
    out = []
    for x in losses:
        if best is None or x < best - threshold:
            best, stale = x, 0
        else:
            stale = stale + 1
        if stale > patience:
            lr, stale = lr * factor, 0
        out.append(lr)
    return out


def early_stop_epoch(losses, tol, patience):
    """1-based epoch at which training stops, or None."""
    best = None
    stale = 0
    for epoch, x in enumerate(losses, start=1):
        if best is None or x < best - tol * abs(best):
            best, stale = x, 0
            continue
        stale += 1
        if stale >= patience:
            return epoch
    return None


def windows_brute_force(n_time, steps, stride):
    """All 0-based window starts s with s = j*stride and s + steps <= n_time - 1."""
    out = []
    j = 0
    while True:
        s = j * stride
        if s + steps > n_time - 1:
            break
        out.append(s)
        j += 1
    return out


def _weights(w, n):
    w = np.ones(n) if w is None else np.asarray(w, dtype=np.float64)
    total = 0.0
    for v in w:
        total += v
    return [v * n / total for v in w]


def r2_loop(truth, pred, w=None):
    n, t = truth.shape
    w = _weights(w, n)
    num = den = mean = wsum = 0.0
    for i in range(n):
        for k in range(t):
            mean += w[i] * truth[i, k]
            wsum += w[i]
    mean /= wsum
    for i in range(n):
        for k in range(t):
            num += w[i] * (truth[i, k] - pred[i, k]) ** 2
            den += w[i] * (truth[i, k] - mean) ** 2
    return 1.0 - num / den


def rmse_loop(truth, pred, w=None):
    n, t = truth.shape
    w = _weights(w, n)
    acc = 0.0
    for i in range(n):
        for k in range(t):
            acc += w[i] * (truth[i, k] - pred[i, k]) ** 2
    return math.sqrt(acc / (n * t))


def rel_rmse_loop(truth, pred, w=None):
    n, t = truth.shape
    w = _weights(w, n)
    vals = []
    for i in range(n):
        lo = min(truth[i]); hi = max(truth[i])
        if hi - lo == 0:
            continue
        acc = 0.0
        for k in range(t):
            acc += w[i] * (truth[i, k] - pred[i, k]) ** 2
        vals.append(math.sqrt(acc / t) / (hi - lo))
    return sum(vals) / len(vals)


def percentile_sorted(values, p):
    """Linear-interpolation percentile from a sorted copy (numpy's default definition)."""
    xs = sorted(values)
    pos = (len(xs) - 1) * p / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def spread_loop(truth, pred, percentiles=(2.0, 98.0)):
    n, t = truth.shape
    ranges = [max(truth[i]) - min(truth[i]) for i in range(n)]
    worst = []
    for k in range(t):
        m = 0.0
        for i in range(n):
            if ranges[i] > 0:
                m = max(m, abs(truth[i, k] - pred[i, k]) / ranges[i])
        worst.append(m)
    return tuple(percentile_sorted(worst, p) for p in percentiles)


def central_fd(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        dn = f(x)
        x[idx] = old
        g[idx] = (up - dn) / (2 * h)
    return g
