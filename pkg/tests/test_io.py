import hashlib
import struct
from pathlib import Path

import numpy as np
import pytest

from helicase_hmm.errors import CorruptDataset, CorruptModel, ModelValidation, UnsupportedVersion
from helicase_hmm.io import (
    dataset_from_bytes,
    dataset_to_bytes,
    load_dataset,
    load_model,
    model_file_size,
    model_from_bytes,
    model_to_bytes,
    read_fasta,
    read_kmer_table,
    save_dataset,
    save_model,
    write_fasta,
    write_kmer_table,
)
from helicase_hmm.model import KmerConfig
from helicase_hmm.read import Read
from helicase_hmm.simulator import SimConfig, simulate_dataset, synthetic_model

DATA = Path(__file__).parent / "data"


def _golden_model():
    return synthetic_model(1, 0.5, seed=0)


def _manual_bytes(m):
    """Model file assembled field by field with explicit little-endian packing."""
    body = b"HHMM" + struct.pack("<I", 1) + struct.pack("<I", m.k) + b"ACGT"
    for arr in (m.outer_prior, m.outer_transition, m.inner_prior, m.inner_transition,
                m.emission_mean, m.emission_var):
        body += struct.pack(f"<{arr.size}f", *arr.ravel())
    return body + hashlib.blake2b(body, digest_size=8).digest()


def test_model_bytes_match_manual_layout():
    m = _golden_model()
    assert model_to_bytes(m) == _manual_bytes(m)


def test_model_golden_file():
    m = _golden_model()
    assert model_to_bytes(m) == (DATA / "golden_k1.hhmm").read_bytes()


def test_model_roundtrip_bit_exact(tmp_path, model_k3):
    q = model_k3.quantized()
    save_model(model_k3, tmp_path / "a.hhmm")
    loaded = load_model(tmp_path / "a.hhmm")
    for name in ("outer_prior", "outer_transition", "inner_prior", "inner_transition",
                 "emission_mean", "emission_var"):
        assert np.array_equal(getattr(loaded, name), getattr(q, name))
    save_model(loaded, tmp_path / "b.hhmm")
    assert (tmp_path / "a.hhmm").read_bytes() == (tmp_path / "b.hhmm").read_bytes()


def test_model_corruption_detected(model_k2):
    data = model_to_bytes(model_k2)
    with pytest.raises(CorruptModel):
        model_from_bytes(data[:-3])
    with pytest.raises(CorruptModel):
        model_from_bytes(data[: len(data) // 2])
    flipped = bytearray(data)
    flipped[40] ^= 0x01
    with pytest.raises(CorruptModel):
        model_from_bytes(bytes(flipped))
    with pytest.raises(CorruptModel):
        model_from_bytes(b"XXXX" + data[4:])
    v2 = bytearray(data)
    v2[4:8] = struct.pack("<I", 2)
    with pytest.raises(UnsupportedVersion):
        model_from_bytes(bytes(v2))


def test_invalid_model_rejected_on_load(model_k1):
    data = bytearray(model_to_bytes(model_k1))
    # overwrite the first emission variance with a tiny value and re-seal the checksum
    off = 16 + 4 * (4 + 16 + 4 + 20 + 16)
    data[off : off + 4] = struct.pack("<f", 1e-9)
    body = bytes(data[:-8])
    data = body + hashlib.blake2b(body, digest_size=8).digest()
    with pytest.raises(ModelValidation):
        model_from_bytes(data)


def test_k10_file_size():
    nk = 4**10
    size = model_file_size(10)
    approx = 16 + 4 * nk * (1 + 4 + 4 * 2)
    assert abs(size - approx) / approx < 0.01
    assert 53e6 < size < 55e6


def test_dataset_roundtrip_binary_and_tsv(tmp_path, model_k2):
    reads = simulate_dataset(model_k2, SimConfig(4, target_samples=50, seed=3))
    reads.append(Read("bare", np.array([0.5, -1.25])))
    for name in ("d.hhds", "d.tsv"):
        save_dataset(reads, tmp_path / name)
        back = load_dataset(tmp_path / name, model_k2.config)
        assert [r.read_id for r in back] == [r.read_id for r in reads]
        for a, b in zip(reads, back):
            np.testing.assert_array_equal(b.signal, a.signal.astype(np.float32).astype(np.float64)
                                          if name.endswith("hhds") else a.signal)
            assert a.truth_bases == b.truth_bases and a.truncated == b.truncated
            if a.segment_lengths is not None:
                np.testing.assert_array_equal(a.segment_lengths, b.segment_lengths)
                np.testing.assert_array_equal(a.truth_kmers, b.truth_kmers)


def test_dataset_golden_fixture():
    reads = load_dataset(DATA / "tiny.tsv", KmerConfig(2))
    assert [r.read_id for r in reads] == ["r1", "r2"]
    assert reads[0].truth_bases == "ACG" and list(reads[0].segment_lengths) == [2, 1]
    assert reads[1].truth_bases is None
    assert dataset_to_bytes(reads) == (DATA / "tiny.hhds").read_bytes()


def test_dataset_corruption():
    data = (DATA / "tiny.hhds").read_bytes()
    with pytest.raises(CorruptDataset):
        dataset_from_bytes(data[:-1])
    bad = Read("x", np.zeros(3), truth_bases="ACG", segment_lengths=[1, 2])
    # segment sum disagreeing with N cannot be constructed, and is rejected when decoding
    raw = bytearray(dataset_to_bytes([bad]))
    idx = raw.rfind(struct.pack("<II", 1, 2))
    raw[idx : idx + 8] = struct.pack("<II", 1, 1)
    body = bytes(raw[:-8])
    with pytest.raises(CorruptDataset):
        dataset_from_bytes(body + hashlib.blake2b(body, digest_size=8).digest())


def test_kmer_table_roundtrip(tmp_path):
    cfg = KmerConfig(2)
    write_kmer_table({0: 1.5, 7: -0.25}, cfg, tmp_path / "t.tsv")
    text = (tmp_path / "t.tsv").read_text().splitlines()
    assert text[0] == "k\t2" and text[1] == "AA\t1.5" and text[2] == "CT\t-0.25"
    cfg2, table = read_kmer_table(tmp_path / "t.tsv")
    assert cfg2.k == 2 and table == {0: 1.5, 7: -0.25}
    (tmp_path / "dup.tsv").write_text("k\t2\nAA\t1\nAA\t2\n")
    with pytest.raises(CorruptDataset):
        read_kmer_table(tmp_path / "dup.tsv")


def test_fasta_roundtrip(tmp_path):
    write_fasta([("a", "score=1", "ACGT"), ("b", "", "TT")], tmp_path / "c.fa")
    assert (tmp_path / "c.fa").read_text() == ">a score=1\nACGT\n>b\nTT\n"
    assert read_fasta(tmp_path / "c.fa") == {"a": "ACGT", "b": "TT"}
