"""The numba kernels and the numpy fallback agree on every entry point."""

import numpy as np
import pytest

from helicase_hmm import kernels_jit, kernels_np
from helicase_hmm.clamped import path_tables
from helicase_hmm.decoder import _codes, _model_tables
from helicase_hmm.simulator import read_rng, sample_read, synthetic_model
from helicase_hmm.verify import random_model, random_path


@pytest.fixture(scope="module")
def case():
    model = synthetic_model(2, 0.3, seed=5)
    read = sample_read(model, read_rng(9, 0), target_samples=300)
    return model, read


def _close(a, b, tol=1e-9):
    a, b = np.asarray(a), np.asarray(b)
    fin = np.isfinite(b)
    assert np.array_equal(np.isfinite(a), fin)
    np.testing.assert_allclose(a[fin], b[fin], rtol=tol, atol=tol)


def test_forward_backward_accumulate_agree(case):
    model, read = case
    x = read.signal
    t = path_tables(model, read.truth_kmers)
    aj, zj = kernels_jit.clamped_forward(x, *t)
    an, zn = kernels_np.clamped_forward(x, *t)
    _close(aj, an)
    assert zj == pytest.approx(zn, rel=1e-12)
    assert kernels_jit.clamped_loglik(x, *t) == pytest.approx(zn, rel=1e-12)
    assert kernels_np.clamped_loglik(x, *t) == pytest.approx(zn, rel=1e-12)
    bj, bn = kernels_jit.clamped_backward(x, *t), kernels_np.clamped_backward(x, *t)
    _close(bj, bn)
    sj = kernels_jit.accumulate(x, an, bn, zn, *t)
    sn = kernels_np.accumulate(x, an, bn, zn, *t)
    for u, v in zip(sj, sn):
        _close(u, v, 1e-8)


def test_random_models_agree(rng):
    for _ in range(20):
        model = random_model(int(rng.integers(1, 4)), rng)
        M = int(rng.integers(1, 15))
        path = random_path(model, M, rng)
        x = rng.normal(size=int(rng.integers(M, 4 * M + 5)))
        t = path_tables(model, path)
        assert kernels_jit.clamped_forward(x, *t)[1] == pytest.approx(
            kernels_np.clamped_forward(x, *t)[1], rel=1e-11)


def test_mgbs_agree(case):
    model, read = case
    x = read.signal[:150]
    mt = _model_tables(model)
    for W in (1, 8, 64):
        pj, kj, nj, fj = kernels_jit.mgbs(x, *mt, model.k, W)
        pn, kn, nn, fn = kernels_np.mgbs(x, *mt, model.k, W)
        _close(fj, fn)
        bj, bn = int(np.argmax(fj)), int(np.argmax(fn))

        def chain(p, km, node):
            out = []
            while node >= 0:
                out.append(int(km[node]))
                node = int(p[node])
            return out

        assert chain(pj, kj, int(nj[bj])) == chain(pn, kn, int(nn[bn]))


def test_viterbi_agree(case):
    model, read = case
    x = read.signal[:120]
    mt = _model_tables(model)
    rj = kernels_jit.viterbi_joint(x, *mt, model.k)
    rn = kernels_np.viterbi_joint(x, *mt, model.k)
    assert rj[3] == pytest.approx(rn[3], rel=1e-12)
    for u, v in zip(rj[:3], rn[:3]):
        np.testing.assert_array_equal(u, v)


def test_nw_and_monotone_agree(rng):
    for _ in range(20):
        a = rng.integers(0, 4, size=int(rng.integers(1, 40)))
        b = rng.integers(0, 4, size=int(rng.integers(1, 40)))
        np.testing.assert_array_equal(kernels_jit.nw_align(a, b, 1.0, -1.0, -1.0),
                                      kernels_np.nw_align(a, b, 1.0, -1.0, -1.0))
        M = int(rng.integers(1, 10))
        N = int(rng.integers(M, 30))
        s = rng.normal(size=(N, M))
        np.testing.assert_array_equal(kernels_jit.monotone_path(s), kernels_np.monotone_path(s))
    ops = kernels_np.nw_align(_codes("ACGT"), _codes("ACGT"), 1.0, -1.0, -1.0)
    assert list(ops) == [0, 0, 0, 0]


def test_high_level_api_backend_invariant(backend, case):
    from helicase_hmm.clamped import clamped_loglik
    from helicase_hmm.decoder import mgbs_decode

    model, read = case
    ll = clamped_loglik(model, read.truth_kmers, read.signal)
    assert np.isfinite(ll)
    res = mgbs_decode(model, read.signal[:100], beam_width=16)
    assert res.score <= clamped_loglik(model, res.kmers, read.signal[:100]) + 1e-9
