"""``@njit`` twins of the gat_numpy kernel. Same signatures, same contracts.

Loops run sequentially so results are deterministic. Compiled objects are
cached on disk (first call in a fresh environment pays the compile).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gat_forward(h, w, a, nbr, mask, slope):
    n_inst, n, d_in = h.shape
    d_out = w.shape[0]
    d_max = nbr.shape[2]
    wt = np.ascontiguousarray(w.T)
    a_src = np.ascontiguousarray(a[:d_out])
    a_dst = np.ascontiguousarray(a[d_out:])

    p = np.empty((n_inst, n, d_out))
    s = np.empty((n_inst, n))
    t = np.empty((n_inst, n))
    for b in range(n_inst):
        pb = np.dot(h[b], wt)
        p[b] = pb
        s[b] = np.dot(pb, a_src)
        t[b] = np.dot(pb, a_dst)

    u = np.zeros((n_inst, n, d_max))
    alpha = np.zeros((n_inst, n, d_max))
    z = np.zeros((n_inst, n, d_out))
    out = np.empty((n_inst, n, d_out))
    for b in range(n_inst):
        for i in range(n):
            mx = -np.inf
            for d in range(d_max):
                if mask[b, i, d]:
                    uu = s[b, i] + t[b, nbr[b, i, d]]
                    u[b, i, d] = uu
                    e = uu if uu >= 0.0 else slope * uu
                    if e > mx:
                        mx = e
            denom = 0.0
            for d in range(d_max):
                if mask[b, i, d]:
                    uu = u[b, i, d]
                    e = uu if uu >= 0.0 else slope * uu
                    ex = np.exp(e - mx)
                    alpha[b, i, d] = ex
                    denom += ex
            for d in range(d_max):
                if mask[b, i, d]:
                    al = alpha[b, i, d] / denom
                    alpha[b, i, d] = al
                    j = nbr[b, i, d]
                    for k in range(d_out):
                        z[b, i, k] += al * p[b, j, k]
            for k in range(d_out):
                zz = z[b, i, k]
                out[b, i, k] = zz if zz >= 0.0 else slope * zz
    return out, p, u, alpha, z


@njit(cache=True)
def gat_backward(g, h, w, a, nbr, mask, slope, p, u, alpha, z):
    n_inst, n, d_in = h.shape
    d_out = w.shape[0]
    d_max = nbr.shape[2]
    a_src = a[:d_out]
    a_dst = a[d_out:]

    dp = np.zeros((n_inst, n, d_out))
    ds = np.zeros((n_inst, n))
    dt = np.zeros((n_inst, n))
    da = np.zeros(2 * d_out)
    dw = np.zeros((d_out, d_in))
    dh = np.empty((n_inst, n, d_in))

    for b in range(n_inst):
        for i in range(n):
            # dz_i and the softmax backward over i's neighbor slots
            dot = 0.0
            dz = np.empty(d_out)
            for k in range(d_out):
                deriv = 1.0 if z[b, i, k] >= 0.0 else slope
                dz[k] = g[b, i, k] * deriv
            d_alpha = np.zeros(d_max)
            for d in range(d_max):
                if mask[b, i, d]:
                    j = nbr[b, i, d]
                    acc = 0.0
                    for k in range(d_out):
                        acc += dz[k] * p[b, j, k]
                    d_alpha[d] = acc
                    dot += acc * alpha[b, i, d]
            for d in range(d_max):
                if mask[b, i, d]:
                    j = nbr[b, i, d]
                    al = alpha[b, i, d]
                    de = al * (d_alpha[d] - dot)
                    deriv = 1.0 if u[b, i, d] >= 0.0 else slope
                    du = de * deriv
                    ds[b, i] += du
                    dt[b, j] += du
                    for k in range(d_out):
                        dp[b, j, k] += al * dz[k]

    for b in range(n_inst):
        for i in range(n):
            for k in range(d_out):
                dp[b, i, k] += ds[b, i] * a_src[k] + dt[b, i] * a_dst[k]
                da[k] += ds[b, i] * p[b, i, k]
                da[d_out + k] += dt[b, i] * p[b, i, k]

    for b in range(n_inst):
        dpb = dp[b]
        dh[b] = np.dot(dpb, w)
        hb = h[b]
        for i in range(n):
            for k in range(d_out):
                v = dpb[i, k]
                if v != 0.0:
                    for e in range(d_in):
                        dw[k, e] += v * hb[i, e]
    return dh, dw, da
