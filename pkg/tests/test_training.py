import numpy as np
import pytest

from helicase_hmm.errors import EmptyDataset, MissingLabels
from helicase_hmm.read import Read
from helicase_hmm.simulator import SimConfig, simulate_dataset
from helicase_hmm.training import (
    Floors,
    SufficientStats,
    accumulate_stats,
    e_step,
    m_step,
    total_loglik,
    train,
)
from helicase_hmm.verify import random_model, random_path

from oracles import enumerated_posteriors


@pytest.fixture
def small_reads(model_k2):
    return simulate_dataset(model_k2, SimConfig(24, target_samples=80, seed=4))


def test_stats_match_enumeration(backend, rng):
    for k, M, N in [(1, 2, 5), (2, 3, 6)]:
        model = random_model(k, rng)
        path = random_path(model, M, rng)
        x = rng.normal(0, 1, N)
        logz, _, xi, w, s, q = enumerated_posteriors(model, path, x)
        st = accumulate_stats(model, Read("r", x, truth_kmers=path))
        W = np.zeros_like(st.weight)
        S, Q = np.zeros_like(W), np.zeros_like(W)
        np.add.at(W, path, w)
        np.add.at(S, path, s)
        np.add.at(Q, path, q)
        np.testing.assert_allclose(st.weight, W, atol=1e-11)
        np.testing.assert_allclose(st.wsum, S, atol=1e-11)
        np.testing.assert_allclose(st.wsq, Q, atol=1e-11)
        np.testing.assert_allclose(st.xi, xi, atol=1e-11)
        assert st.total_loglik == pytest.approx(logz, rel=1e-11)


def test_expected_counts_conserve_samples(model_k2, small_reads):
    st = e_step(model_k2, small_reads)
    n = sum(r.n_samples for r in small_reads)
    assert st.weight.sum() == pytest.approx(n, rel=1e-10)
    # every sample leaves its state exactly once: xi rows total the weight per state
    np.testing.assert_allclose(st.xi.sum(axis=1), st.weight.sum(axis=0), rtol=1e-9)


def test_merge_is_order_independent(model_k2, small_reads):
    a = e_step(model_k2, small_reads[:10])
    b = e_step(model_k2, small_reads[10:])
    whole = e_step(model_k2, small_reads)
    np.testing.assert_allclose((a + b).weight, whole.weight, rtol=1e-12)
    np.testing.assert_allclose((b + a).xi, whole.xi, rtol=1e-12)
    assert (a + b).reads_seen == len(small_reads)


def test_workers_do_not_change_result(model_k2, small_reads):
    one = e_step(model_k2, small_reads, workers=1)
    many = e_step(model_k2, small_reads, workers=4)
    assert np.array_equal(one.wsum, many.wsum)
    assert one.total_loglik == many.total_loglik


def test_infeasible_read_skipped(model_k2):
    short = Read("short", np.zeros(2), truth_kmers=np.array([0, 1, 4, 0]))
    st = accumulate_stats(model_k2, short)
    assert st.reads_skipped == 1 and st.reads_seen == 0


def test_m_step_single_state_closed_form(model_k1):
    # one read, a single k-mer, statistics put directly into one cell
    st = SufficientStats.zeros(4)
    st.weight[2, 0] = 4.0
    st.wsum[2, 0] = 4.0 * 1.5
    st.wsq[2, 0] = 4.0 * (1.5**2 + 0.3)
    new, n = m_step(model_k1, st, Floors(), update_transitions=False)
    assert n == 1
    assert new.emission_mean[2, 0] == pytest.approx(1.5)
    assert new.emission_var[2, 0] == pytest.approx(0.3)
    # cells below min weight keep old values
    assert new.emission_mean[1, 1] == model_k1.emission_mean[1, 1]


def test_m_step_variance_floor(model_k1):
    st = SufficientStats.zeros(4)
    st.weight[0, 0] = 5.0
    st.wsum[0, 0] = 5.0
    st.wsq[0, 0] = 5.0
    new, _ = m_step(model_k1, st, Floors(variance_floor=1e-4), update_transitions=False)
    assert new.emission_var[0, 0] == 1e-4


def test_m_step_keeps_topology(model_k2, small_reads):
    st = e_step(model_k2, small_reads)
    new, _ = m_step(model_k2, st, Floors(transition_pseudocount=0.5))
    assert np.array_equal(new.inner_transition > 0, model_k2.inner_transition > 0)
    np.testing.assert_allclose(new.inner_transition.sum(axis=1), 1.0, atol=1e-12)


def test_train_monotone_and_report(model_k2, small_reads):
    rng = np.random.default_rng(0)
    init = model_k2.replace(
        emission_mean=model_k2.emission_mean + rng.normal(0, 0.1, model_k2.emission_mean.shape)
    )
    model, report = train(init, small_reads, 4)
    ll = np.array(report.logliks)
    assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[1:]))
    assert total_loglik(model, small_reads) >= ll[-1]
    tsv = report.to_tsv().splitlines()
    assert tsv[0].startswith("epoch\tloglik") and len(tsv) == 5


def test_train_errors(model_k2):
    with pytest.raises(EmptyDataset):
        train(model_k2, [], 1)
    with pytest.raises(MissingLabels):
        train(model_k2, [Read("x", np.zeros(5))], 1)
