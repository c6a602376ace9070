"""Vectorized numpy reference for the graph-attention kernel.

Shapes (all float64 unless noted):
    h     (I, N, d_in)   node features for I independent graph instances
    w     (d_out, d_in)  shared projection
    a     (2*d_out,)     attention vector, [source half | neighbor half]
    nbr   (I, N, D) int64  padded in-neighbor indices per node
    mask  (I, N, D) bool   True where a slot holds a real neighbor

For node i with in-neighbor j: the raw score is
``leaky(a_src·Wh_i + a_dst·Wh_j)``, normalized by a softmax over i's
unmasked slots, and the output is ``leaky(sum_j alpha_ij · Wh_j)``.
Padded slots contribute exactly zero. Every row of ``mask`` must contain
at least one True entry (guaranteed upstream by the self-loop rule).
"""

import numpy as np


def gat_forward(h, w, a, nbr, mask, slope):
    """Returns (out, p, u, alpha, z); all but ``out`` are saved for backward."""
    n_inst, n, d_in = h.shape
    d_out = w.shape[0]
    p = (h.reshape(-1, d_in) @ w.T).reshape(n_inst, n, d_out)
    a_src, a_dst = a[:d_out], a[d_out:]
    s = p @ a_src
    t = p @ a_dst
    ii = np.arange(n_inst)[:, None, None]
    u = np.where(mask, s[:, :, None] + t[ii, nbr], 0.0)
    e = np.where(u >= 0.0, u, slope * u)
    shifted = np.where(mask, e, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    alpha = ex / ex.sum(axis=-1, keepdims=True)
    z = np.einsum("ind,indk->ink", alpha, p[ii, nbr])
    out = np.where(z >= 0.0, z, slope * z)
    return out, p, u, alpha, z


def gat_backward(g, h, w, a, nbr, mask, slope, p, u, alpha, z):
    """Gradients of the kernel output wrt (h, w, a) given upstream ``g``."""
    n_inst, n, d_in = h.shape
    d_out = w.shape[0]
    a_src, a_dst = a[:d_out], a[d_out:]
    ii = np.arange(n_inst)[:, None, None]

    dz = g * np.where(z >= 0.0, 1.0, slope)
    d_alpha = np.einsum("ink,indk->ind", dz, p[ii, nbr])
    de = alpha * (d_alpha - np.sum(d_alpha * alpha, axis=-1, keepdims=True))
    du = de * np.where(u >= 0.0, 1.0, slope)

    dp = np.zeros_like(p)
    np.add.at(dp, (ii, nbr), alpha[..., None] * dz[:, :, None, :])
    ds = du.sum(axis=-1)
    dt = np.zeros_like(ds)
    np.add.at(dt, (ii, nbr), du)
    dp += ds[..., None] * a_src + dt[..., None] * a_dst

    da = np.concatenate([np.einsum("in,ink->k", ds, p), np.einsum("in,ink->k", dt, p)])
    dh = (dp.reshape(-1, d_out) @ w).reshape(n_inst, n, d_in)
    dw = np.einsum("ink,ine->ke", dp, h)
    return dh, dw, da
