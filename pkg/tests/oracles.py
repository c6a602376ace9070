"""Independent oracle implementations used by the tests.

Everything here is deliberately written as plain scalar loops (or brute
force), separate from the library's vectorized/kernel code paths, so a
test comparing the two is a genuine cross-check.
"""

import math

import numpy as np


def central_difference(loss_fn, arrays, step=1e-5):
    """Finite-difference gradient of ``loss_fn()`` wrt each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn()
            flat[i] = orig - step
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * step)
        grads.append(g)
    return grads


def gradient_mismatch(analytic, numeric, rel_tol=1e-6, abs_floor=1e-9):
    """Worst offender across entries: 0 when every entry passes the tolerance."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    bad = (diff > abs_floor) & (diff > rel_tol * denom)
    if not bad.any():
        return 0.0
    return float((diff[bad] / np.maximum(denom[bad], 1e-300)).max())


def leaky(x, slope):
    return x if x >= 0.0 else slope * x


def gat_layer_oracle(h, w, a, neighbors, slope):
    """Scalar-loop attention layer: scores, softmax over neighbors, aggregate."""
    n, d_in = h.shape
    d_out = w.shape[0]
    wh = [[sum(w[k][e] * h[i][e] for e in range(d_in)) for k in range(d_out)] for i in range(n)]
    out = np.zeros((n, d_out))
    alpha_dense = np.zeros((n, n))
    for i in range(n):
        nbrs = list(neighbors[i])
        scores = []
        for j in nbrs:
            raw = sum(a[k] * wh[i][k] for k in range(d_out))
            raw += sum(a[d_out + k] * wh[j][k] for k in range(d_out))
            scores.append(leaky(raw, slope))
        exps = [math.exp(s) for s in scores]
        total = sum(exps)
        for pos, j in enumerate(nbrs):
            alpha_dense[i][j] = exps[pos] / total
        for k in range(d_out):
            acc = sum(alpha_dense[i][j] * wh[j][k] for j in nbrs)
            out[i][k] = leaky(acc, slope)
    return out, alpha_dense


def lstm_cell_oracle(x, h_prev, c_prev, w_i, w_h, b_i, b_h):
    """One scalar-loop step of the four-gate cell equations."""
    n_in = len(x)
    k = len(h_prev)

    def gate(name, squash):
        vals = []
        for j in range(k):
            s = b_i[name][j] + b_h[name][j]
            s += sum(x[mm] * w_i[name][mm][j] for mm in range(n_in))
            s += sum(h_prev[mm] * w_h[name][mm][j] for mm in range(k))
            vals.append(squash(s))
        return vals

    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    i_g = gate("i", sig)
    f_g = gate("f", sig)
    g_g = gate("g", math.tanh)
    o_g = gate("o", sig)
    c = [f_g[j] * c_prev[j] + i_g[j] * g_g[j] for j in range(k)]
    h = [o_g[j] * math.tanh(c[j]) for j in range(k)]
    return np.array(h), np.array(c)


def predict_oracle(beta, w, b):
    """Dot-product loop for the ReLU head."""
    n, k = w.shape
    out = np.zeros(n)
    for i in range(n):
        s = b[i] + sum(w[i][j] * beta[j] for j in range(k))
        out[i] = s if s > 0.0 else 0.0
    return out


def historical_average_oracle(demand, slots, target_t):
    """Brute-force groupby mean over training columns sharing the target's slot."""
    n, train_len = demand.shape
    slot = target_t % slots
    cols = [t for t in range(train_len) if t % slots == slot]
    return np.array([sum(demand[r][t] for t in cols) / len(cols) for r in range(n)])


def ridge_gradient_descent(x, y, lam, penalize, lr=None, steps=10_000):
    """Plain gradient descent on 0.5*||y - Xw||^2 + 0.5*lam*||w_penalized||^2."""
    n_feat = x.shape[1]
    w = np.zeros(n_feat)
    if lr is None:
        lipschitz = np.linalg.eigvalsh(x.T @ x + lam * np.diag(penalize)).max()
        lr = 1.0 / lipschitz
    for _ in range(steps):
        grad = x.T @ (x @ w - y) + lam * penalize * w
        w -= lr * grad
    return w
