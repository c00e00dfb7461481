import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helicase_hmm.errors import (
    IndexOutOfRange,
    InsufficientReference,
    InvalidBase,
    InvalidKmerPath,
    LengthMismatch,
    ModelValidation,
    NonEmittingState,
)
from helicase_hmm.model import (
    InnerState,
    KmerConfig,
    bases_from_kmers,
    decode_kmer,
    default_inner_params,
    emission_logpdf,
    encode_kmer,
    ensure_valid,
    is_kmer_path,
    kmers_from_bases,
    predecessors,
    priors_from_reference,
    successors,
    uniform_model,
    validate_model,
)

bases = st.text(alphabet="ACGT", min_size=1, max_size=40)


def test_encode_known_values():
    cfg = KmerConfig(3)
    assert encode_kmer("AAA", cfg) == 0
    assert encode_kmer("TTT", cfg) == 63
    assert encode_kmer("ACG", cfg) == 0 * 16 + 1 * 4 + 2
    assert decode_kmer(6, cfg) == "ACG"


def test_encode_rejects_bad_input():
    cfg = KmerConfig(2)
    with pytest.raises(InvalidBase):
        encode_kmer("AN", cfg)
    with pytest.raises(LengthMismatch):
        encode_kmer("ACG", cfg)
    with pytest.raises(IndexOutOfRange):
        decode_kmer(16, cfg)


def test_config_bounds():
    with pytest.raises(ValueError):
        KmerConfig(0)
    assert KmerConfig(10).num_kmers == 4**10


@given(st.integers(1, 8), st.data())
def test_roundtrip_index(k, data):
    cfg = KmerConfig(k)
    i = data.draw(st.integers(0, cfg.num_kmers - 1))
    assert encode_kmer(decode_kmer(i, cfg), cfg) == i


@given(bases, st.integers(1, 5))
def test_kmer_path_roundtrip(seq, k):
    cfg = KmerConfig(k)
    if len(seq) < k:
        with pytest.raises(LengthMismatch):
            kmers_from_bases(seq, cfg)
        return
    path = kmers_from_bases(seq, cfg)
    assert path.size == len(seq) - k + 1
    assert is_kmer_path(path, cfg)
    assert bases_from_kmers(path, cfg) == seq


@given(st.integers(1, 6), st.data())
def test_successor_predecessor_duality(k, data):
    cfg = KmerConfig(k)
    i = data.draw(st.integers(0, cfg.num_kmers - 1))
    succ = successors(i, cfg)
    assert len(set(succ)) == 4
    for j in succ:
        assert i in predecessors(j, cfg)
        s_i, s_j = decode_kmer(i, cfg), decode_kmer(j, cfg)
        assert s_i[1:] == s_j[:-1]


def test_bases_from_invalid_path():
    cfg = KmerConfig(2)
    with pytest.raises(InvalidKmerPath):
        bases_from_kmers([0, 5], cfg)  # AA -> CC


def test_inner_state_codes():
    assert InnerState.END == 0 and not InnerState.END.emitting
    assert [s.emit_index for s in (InnerState.S1, InnerState.BACK)] == [0, 3]
    assert InnerState.from_emit_index(3) is InnerState.BACK
    with pytest.raises(NonEmittingState):
        InnerState.END.emit_index


def test_emission_logpdf(model_k1):
    mu = model_k1.emission_mean[2, 1]
    var = model_k1.emission_var[2, 1]
    expect = -0.5 * np.log(2 * np.pi * var)
    assert emission_logpdf(model_k1, 2, InnerState.S2, mu) == pytest.approx(expect, abs=1e-14)
    with pytest.raises(NonEmittingState):
        emission_logpdf(model_k1, 2, InnerState.END, 0.0)


def test_default_inner_rows_sum_to_one():
    p = default_inner_params()
    np.testing.assert_allclose(p.transition.sum(axis=1), 1.0, atol=1e-15)
    assert p.prior.sum() == 1.0
    assert np.all(p.transition[:, 0] > 0)


def test_model_arrays_read_only(model_k2):
    with pytest.raises(ValueError):
        model_k2.emission_mean[0, 0] = 1.0


def test_validate_reports_every_violation(model_k2):
    bad_var = model_k2.emission_var.copy()
    bad_var[3, 2] = 1e-9
    trans = model_k2.outer_transition.copy()
    trans[5] = [0.5, 0.5, 0.5, 0.5]
    bad = model_k2.replace(emission_var=bad_var, outer_transition=trans)
    kinds = [v.kind for v in validate_model(bad)]
    assert kinds == ["RowSum", "VarianceFloor"]
    with pytest.raises(ModelValidation) as info:
        ensure_valid(bad)
    assert len(info.value.violations) == 2


def test_validate_no_end_and_shape(model_k1):
    t = model_k1.inner_transition.copy()
    t[:, 1:] += t[:, :1] / 4
    t[:, 0] = 0
    assert [v.kind for v in validate_model(model_k1.replace(inner_transition=t))] == ["NoEnd"]
    bad = model_k1.replace(emission_mean=np.zeros((3, 4)))
    assert [v.kind for v in validate_model(bad)] == ["Shape"]


def test_uniform_model_and_reference_priors():
    cfg = KmerConfig(2)
    m = uniform_model(cfg, mu_init=0.5, var_init=2.0)
    assert m.emission_mean.shape == (16, 4) and np.all(m.emission_var == 2.0)
    prior, trans = priors_from_reference("ACGTACGTAC", cfg, pseudocount=0.0)
    np.testing.assert_allclose(prior.sum(), 1.0)
    # AC is always followed by G
    assert trans[encode_kmer("AC", cfg), 2] == 1.0
    # never-seen rows are uniform
    np.testing.assert_allclose(trans[encode_kmer("AA", cfg)], 0.25)
    with pytest.raises(InsufficientReference):
        priors_from_reference("AC", cfg)


def test_mean_duration_default(model_k1):
    # every emitting state exits to End w.p. 0.2, so L is geometric with mean 1/0.2
    assert model_k1.mean_duration() == pytest.approx(5.0, abs=1e-12)


@settings(max_examples=20)
@given(st.integers(1, 3))
def test_quantized_is_float32_exact(k):
    from helicase_hmm.simulator import synthetic_model

    m = synthetic_model(k, 0.1).quantized()
    assert np.array_equal(m.emission_mean.astype(np.float32).astype(np.float64), m.emission_mean)
