import numpy as np
import numpy.testing as npt
import pytest

from flowgat.kernels import gat_numpy

from oracles import central_difference, gradient_mismatch

numba_kernels = pytest.importorskip("flowgat.kernels.gat_numba", reason="numba backend unavailable")


def random_instance(rng, n_inst=3, n=6, d_in=3, d_out=4, width=4):
    h = rng.normal(size=(n_inst, n, d_in))
    w = rng.normal(size=(d_out, d_in))
    a = rng.normal(size=2 * d_out)
    nbr = np.zeros((n_inst, n, width), dtype=np.int64)
    mask = np.zeros((n_inst, n, width), dtype=bool)
    for b in range(n_inst):
        for i in range(n):
            deg = int(rng.integers(1, width + 1))
            others = rng.choice(n, size=deg - 1, replace=False) if deg > 1 else []
            js = np.unique(np.concatenate([[i], others]).astype(np.int64))
            nbr[b, i, : len(js)] = js
            mask[b, i, : len(js)] = True
    return h, w, a, nbr, mask


def test_backends_agree():
    rng = np.random.default_rng(0)
    for trial in range(5):
        h, w, a, nbr, mask = random_instance(rng)
        fwd_np = gat_numpy.gat_forward(h, w, a, nbr, mask, 0.2)
        fwd_nb = numba_kernels.gat_forward(h, w, a, nbr, mask, 0.2)
        for x, y in zip(fwd_np, fwd_nb):
            npt.assert_allclose(x, y, rtol=1e-12, atol=1e-14)
        g = rng.normal(size=fwd_np[0].shape)
        bwd_np = gat_numpy.gat_backward(g, h, w, a, nbr, mask, 0.2, *fwd_np[1:])
        bwd_nb = numba_kernels.gat_backward(g, h, w, a, nbr, mask, 0.2, *fwd_nb[1:])
        for x, y in zip(bwd_np, bwd_nb):
            npt.assert_allclose(x, y, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("backend", [gat_numpy, numba_kernels])
def test_backward_matches_finite_differences(backend):
    rng = np.random.default_rng(1)
    h, w, a, nbr, mask = random_instance(rng, n_inst=2, n=5)
    g = rng.normal(size=(2, 5, 4))

    def loss():
        return float(np.sum(backend.gat_forward(h, w, a, nbr, mask, 0.2)[0] * g))

    fwd = backend.gat_forward(h, w, a, nbr, mask, 0.2)
    dh, dw, da = backend.gat_backward(g, h, w, a, nbr, mask, 0.2, *fwd[1:])
    num_h, num_w, num_a = central_difference(loss, [h, w, a])
    assert gradient_mismatch(dh, num_h, rel_tol=1e-5, abs_floor=1e-8) == 0.0
    assert gradient_mismatch(dw, num_w, rel_tol=1e-5, abs_floor=1e-8) == 0.0
    assert gradient_mismatch(da, num_a, rel_tol=1e-5, abs_floor=1e-8) == 0.0


@pytest.mark.parametrize("backend", [gat_numpy, numba_kernels])
def test_forward_deterministic(backend):
    rng = np.random.default_rng(2)
    h, w, a, nbr, mask = random_instance(rng)
    one = backend.gat_forward(h, w, a, nbr, mask, 0.2)
    two = backend.gat_forward(h, w, a, nbr, mask, 0.2)
    for x, y in zip(one, two):
        npt.assert_array_equal(x, y)


def test_padded_slots_do_not_leak():
    """Garbage indices under masked slots must not affect any output."""
    rng = np.random.default_rng(3)
    h, w, a, nbr, mask = random_instance(rng)
    poisoned = nbr.copy()
    poisoned[~mask] = rng.integers(0, h.shape[1], size=(~mask).sum())
    base = gat_numpy.gat_forward(h, w, a, nbr, mask, 0.2)
    alt = gat_numpy.gat_forward(h, w, a, poisoned, mask, 0.2)
    npt.assert_array_equal(base[0], alt[0])
