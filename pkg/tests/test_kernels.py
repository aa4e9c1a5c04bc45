"""Backend parity: the Cython kernels must match the numpy reference."""

import numpy as np
import pytest

from quizforge import kernels_numpy as ref

cython_kernels = pytest.importorskip(
    "quizforge._ckernels", reason="compiled kernels not built")

RNG = np.random.default_rng(1234)


@pytest.mark.parametrize("batch,n_in,n_out,relu", [
    (1, 15, 64, True), (128, 64, 64, True), (7, 5, 4, False), (256, 15, 64, True),
])
def test_affine_forward_parity(batch, n_in, n_out, relu):
    x = RNG.normal(size=(batch, n_in))
    w = RNG.normal(size=(n_out, n_in))
    b = RNG.normal(size=n_out)
    out_ref = np.empty((batch, n_out))
    out_c = np.empty((batch, n_out))
    ref.affine_forward(x, w, b, out_ref, relu)
    cython_kernels.affine_forward(x, w, b, out_c, relu)
    np.testing.assert_allclose(out_c, out_ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("batch,n_in,n_out,relu,want_dx", [
    (1, 15, 64, True, True), (128, 64, 64, True, True),
    (5, 8, 4, False, False), (64, 64, 1, False, True),
])
def test_affine_backward_parity(batch, n_in, n_out, relu, want_dx):
    x = RNG.normal(size=(batch, n_in))
    w = RNG.normal(size=(n_out, n_in))
    b = RNG.normal(size=n_out)
    act = np.empty((batch, n_out))
    ref.affine_forward(x, w, b, act, relu)
    d = RNG.normal(size=(batch, n_out))

    dw_ref = np.empty_like(w); db_ref = np.empty(n_out)
    dx_ref = np.empty_like(x) if want_dx else None
    ref.affine_backward(x, w, act, d.copy(), relu, dw_ref, db_ref, dx_ref)

    dw_c = np.empty_like(w); db_c = np.empty(n_out)
    dx_c = np.empty_like(x) if want_dx else None
    cython_kernels.affine_backward(x, w, act, d.copy(), relu, dw_c, db_c, dx_c)

    np.testing.assert_allclose(dw_c, dw_ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(db_c, db_ref, rtol=1e-12, atol=1e-12)
    if want_dx:
        np.testing.assert_allclose(dx_c, dx_ref, rtol=1e-12, atol=1e-12)


def test_softmax_parity_and_validity():
    logits = RNG.normal(scale=20, size=(64, 4))
    out_ref = np.empty_like(logits)
    out_c = np.empty_like(logits)
    ref.softmax_rows(logits, out_ref)
    cython_kernels.softmax_rows(logits, out_c)
    np.testing.assert_allclose(out_c, out_ref, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(out_c.sum(axis=1), 1.0, atol=1e-12)
    assert (out_c >= 0).all()


def test_optimizer_step_parity():
    n = 777
    p_ref = RNG.normal(size=n); p_c = p_ref.copy()
    m_ref = np.zeros(n); v_ref = np.zeros(n)
    m_c = np.zeros(n); v_c = np.zeros(n)
    for t in range(1, 6):
        g = RNG.normal(size=n)
        ref.adam_step(p_ref, g, m_ref, v_ref, t, 0.005, 0.9, 0.999, 1e-8)
        cython_kernels.adam_step(p_c, g, m_c, v_c, t, 0.005, 0.9, 0.999, 1e-8)
    np.testing.assert_allclose(p_c, p_ref, rtol=1e-12, atol=1e-14)

    g = RNG.normal(size=n)
    ref.sgd_step(p_ref, g, 0.01)
    cython_kernels.sgd_step(p_c, g, 0.01)
    np.testing.assert_allclose(p_c, p_ref, rtol=1e-12, atol=1e-14)


def test_sumtree_parity():
    cap = 33
    nodes_ref = np.zeros(2 * cap - 1)
    nodes_c = np.zeros(2 * cap - 1)
    values = RNG.random(cap) * 3
    for i, val in enumerate(values):
        ref.sumtree_update(nodes_ref, cap, i, val)
        cython_kernels.sumtree_update(nodes_c, cap, i, val)
    np.testing.assert_allclose(nodes_c, nodes_ref, rtol=1e-12)

    rs = RNG.random(512) * nodes_ref[0]
    out_ref = np.empty(512, dtype=np.int64)
    out_c = np.empty(512, dtype=np.int64)
    ref.sumtree_query_batch(nodes_ref, cap, rs, out_ref)
    cython_kernels.sumtree_query_batch(nodes_c, cap, rs, out_c)
    np.testing.assert_array_equal(out_c, out_ref)

    idx = np.arange(0, cap, 3, dtype=np.int64)
    new_vals = RNG.random(idx.shape[0])
    ref.sumtree_update_batch(nodes_ref, cap, idx, new_vals)
    cython_kernels.sumtree_update_batch(nodes_c, cap, idx, new_vals)
    np.testing.assert_allclose(nodes_c, nodes_ref, rtol=1e-12)
