"""File formats: binary model and dataset containers, k-mer tables, calls and reports.

Binary layouts are explicitly little-endian.  Both binary containers end in
an 8-byte BLAKE2b digest of every byte before it.

Model file::

    b"HHMM" | u32 version | u32 k | 4 bytes alphabet
    f32 outer_prior[4^k] | f32 outer_transition[4^k, 4]
    f32 inner_prior[4]   | f32 inner_transition[4, 5]
    f32 emission_mean[4^k, 4] | f32 emission_var[4^k, 4]
    u64 checksum

Dataset file::

    b"HHDS" | u32 version | u32 n_reads
    per read: u16 id_len, id (utf-8) | u32 N, f32 signal[N]
              u32 n_bases, bases (ascii) | u32 n_segments, u32 lengths[n_segments]
              u8 flags (bit 0: truncated)
    u64 checksum
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from helicase_hmm.errors import CorruptDataset, CorruptModel, LengthMismatch, UnsupportedVersion
from helicase_hmm.model import ALPHABET, HelicaseModel, KmerConfig, decode_kmer, encode_kmer, ensure_valid
from helicase_hmm.read import Read

MODEL_MAGIC = b"HHMM"
MODEL_VERSION = 1
DATASET_MAGIC = b"HHDS"
DATASET_VERSION = 1
# float32 storage perturbs row sums by up to a few ulps
FILE_SUM_TOL = 1e-6

_F32 = np.dtype("<f4")


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def model_file_size(k: int) -> int:
    nk = 4**k
    return 16 + 4 * (nk + 4 * nk + 4 + 20 + 8 * nk) + 8


def model_to_bytes(model: HelicaseModel) -> bytes:
    header = MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, model.k) + ALPHABET.encode("ascii")
    parts = [
        model.outer_prior,
        model.outer_transition,
        model.inner_prior,
        model.inner_transition,
        model.emission_mean,
        model.emission_var,
    ]
    payload = b"".join(np.ascontiguousarray(p, dtype=_F32).tobytes() for p in parts)
    body = header + payload
    return body + _digest(body)


def model_from_bytes(data: bytes) -> HelicaseModel:
    if len(data) < 24 or data[:4] != MODEL_MAGIC:
        raise CorruptModel("not a model file (bad magic or truncated header)")
    version, k = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise UnsupportedVersion(f"model format version {version} is not supported")
    if data[12:16] != ALPHABET.encode("ascii"):
        raise CorruptModel("unexpected alphabet")
    if not 1 <= k <= 12:
        raise CorruptModel(f"implausible k={k}")
    if len(data) != model_file_size(k):
        raise CorruptModel(f"expected {model_file_size(k)} bytes for k={k}, got {len(data)}")
    body, check = data[:-8], data[-8:]
    if _digest(body) != check:
        raise CorruptModel("checksum mismatch")
    nk = 4**k
    shapes = [(nk,), (nk, 4), (4,), (4, 5), (nk, 4), (nk, 4)]
    arrays = []
    off = 16
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype=_F32, count=count, offset=off).astype(np.float64)
        arrays.append(arr.reshape(shape))
        off += 4 * count
    model = HelicaseModel(KmerConfig(k), *arrays)
    return ensure_valid(model, tol=FILE_SUM_TOL)


def save_model(model: HelicaseModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> HelicaseModel:
    return model_from_bytes(Path(path).read_bytes())


# -- datasets ---------------------------------------------------------------


def dataset_to_bytes(reads: Sequence[Read]) -> bytes:
    out = bytearray(DATASET_MAGIC + struct.pack("<II", DATASET_VERSION, len(reads)))
    for r in reads:
        rid = r.read_id.encode("utf-8")
        out += struct.pack("<H", len(rid)) + rid
        out += struct.pack("<I", r.signal.size) + np.ascontiguousarray(r.signal, dtype=_F32).tobytes()
        bases = (r.truth_bases or "").encode("ascii")
        out += struct.pack("<I", len(bases)) + bases
        segs = r.segment_lengths if r.segment_lengths is not None else np.zeros(0)
        out += struct.pack("<I", len(segs)) + np.asarray(segs, dtype="<u4").tobytes()
        out += struct.pack("<B", 1 if r.truncated else 0)
    return bytes(out) + _digest(bytes(out))


def dataset_from_bytes(data: bytes, config: KmerConfig | None = None) -> list[Read]:
    if len(data) < 20 or data[:4] != DATASET_MAGIC:
        raise CorruptDataset("not a dataset file")
    body, check = data[:-8], data[-8:]
    if _digest(body) != check:
        raise CorruptDataset("checksum mismatch")
    version, n_reads = struct.unpack_from("<II", body, 4)
    if version != DATASET_VERSION:
        raise UnsupportedVersion(f"dataset format version {version} is not supported")
    off = 12
    reads = []
    try:
        for _ in range(n_reads):
            (ln,) = struct.unpack_from("<H", body, off)
            off += 2
            rid = body[off : off + ln].decode("utf-8")
            off += ln
            (N,) = struct.unpack_from("<I", body, off)
            off += 4
            if off + 4 * N > len(body):
                raise CorruptDataset(f"read {rid}: signal runs past end of file")
            sig = np.frombuffer(body, dtype=_F32, count=N, offset=off).astype(np.float64)
            off += 4 * N
            (nb,) = struct.unpack_from("<I", body, off)
            off += 4
            bases = body[off : off + nb].decode("ascii") or None
            off += nb
            (ns,) = struct.unpack_from("<I", body, off)
            off += 4
            segs = np.frombuffer(body, dtype="<u4", count=ns, offset=off).astype(np.int64)
            off += 4 * ns
            (flags,) = struct.unpack_from("<B", body, off)
            off += 1
            reads.append(_make_read(rid, sig, bases, segs if ns else None, bool(flags & 1), config))
    except struct.error as exc:
        raise CorruptDataset(f"truncated dataset: {exc}") from None
    if off != len(body):
        raise CorruptDataset("trailing bytes after last read")
    return reads


def _make_read(rid, sig, bases, segs, truncated, config):
    try:
        r = Read(rid, sig, truth_bases=bases, segment_lengths=segs, truncated=truncated)
        return r.labelled(config) if config is not None and bases else r
    except LengthMismatch as exc:
        raise CorruptDataset(str(exc)) from None


TSV_HEADER = "read_id\tsignal\ttruth_bases\tsegment_lengths\ttruncated"


def dataset_to_tsv(reads: Sequence[Read]) -> str:
    lines = [TSV_HEADER]
    for r in reads:
        sig = ",".join(repr(float(v)) for v in r.signal)
        segs = "" if r.segment_lengths is None else ",".join(str(int(v)) for v in r.segment_lengths)
        lines.append(f"{r.read_id}\t{sig}\t{r.truth_bases or ''}\t{segs}\t{int(r.truncated)}")
    return "\n".join(lines) + "\n"


def dataset_from_tsv(text: str, config: KmerConfig | None = None) -> list[Read]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t")[:2] != ["read_id", "signal"]:
        raise CorruptDataset("TSV dataset must start with a read_id/signal header")
    reads = []
    for ln in lines[1:]:
        cols = ln.split("\t")
        cols += [""] * (5 - len(cols))
        rid, sig, bases, segs, trunc = cols[:5]
        try:
            signal = np.array([float(v) for v in sig.split(",") if v], dtype=np.float64)
            seg_arr = np.array([int(v) for v in segs.split(",")], dtype=np.int64) if segs else None
        except ValueError as exc:
            raise CorruptDataset(f"read {rid}: {exc}") from None
        reads.append(_make_read(rid, signal, bases or None, seg_arr, trunc.strip() == "1", config))
    return reads


def save_dataset(reads: Sequence[Read], path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".tsv":
        path.write_text(dataset_to_tsv(reads))
    else:
        path.write_bytes(dataset_to_bytes(reads))


def load_dataset(path, config: KmerConfig | None = None) -> list[Read]:
    data = Path(path).read_bytes()
    if data[:4] == DATASET_MAGIC:
        return dataset_from_bytes(data, config)
    return dataset_from_tsv(data.decode("utf-8"), config)


# -- k-mer tables, calls, reports ---------------------------------------------


def write_kmer_table(levels: dict[int, float] | np.ndarray, config: KmerConfig, path) -> None:
    items = levels.items() if isinstance(levels, dict) else enumerate(np.asarray(levels))
    lines = [f"k\t{config.k}"]
    for K, v in sorted(items):
        lines.append(f"{decode_kmer(int(K), config)}\t{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_kmer_table(path) -> tuple[KmerConfig, dict[int, float]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split("\t")
    if head[0] != "k" or len(head) < 2:
        raise CorruptDataset("k-mer table must start with a 'k<TAB>value' row")
    config = KmerConfig(int(head[1]))
    table: dict[int, float] = {}
    for ln in lines[1:]:
        kmer, level = ln.split("\t")[:2]
        K = encode_kmer(kmer.strip().upper(), config)
        if K in table:
            raise CorruptDataset(f"duplicate k-mer {kmer}")
        table[K] = float(level)
    return config, table


def write_fasta(records: Iterable[tuple[str, str, str]], path) -> None:
    """``records`` are ``(read_id, description, bases)``."""
    with open(path, "w") as fh:
        for rid, desc, bases in records:
            fh.write(f">{rid}{' ' + desc if desc else ''}\n{bases}\n")


def read_fasta(path) -> dict[str, str]:
    out: dict[str, str] = {}
    rid = None
    chunks: list[str] = []
    for ln in Path(path).read_text().splitlines():
        if ln.startswith(">"):
            if rid is not None:
                out[rid] = "".join(chunks)
            rid = ln[1:].split()[0] if ln[1:].split() else ""
            chunks = []
        elif ln.strip():
            chunks.append(ln.strip())
    if rid is not None:
        out[rid] = "".join(chunks)
    return out
