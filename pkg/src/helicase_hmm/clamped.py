"""Inference on the clamped trellis: the k-mer sequence is fixed, inner states are summed out.

The lattice at time ``n`` holds cells ``(m, h)``: k-mer position ``m`` and
emitting inner state ``h``.  A cell is reachable only inside the band
``max(0, n - (N - M)) <= m <= min(n, M - 1)``; kernels never touch cells
outside it and tables hold ``-inf`` there.

All masses are natural-log.  The last k-mer pays its End exit, so
``log p(K, X)`` is the log of a proper sub-probability.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from helicase_hmm import _accel
from helicase_hmm.errors import InfeasibleClamp, LengthMismatch, NonEmittingState, OracleTooLarge
from helicase_hmm.model import LOG_2PI, HelicaseModel, InnerState, check_kmer_path, is_kmer_path

NEG_INF = -np.inf


def band(n: int, N: int, M: int) -> tuple[int, int]:
    """Inclusive range of k-mer positions reachable at time ``n``."""
    return max(0, n - (N - M)), min(n, M - 1)


def path_tables(model: HelicaseModel, kmer_seq: np.ndarray):
    """Gather per-position log transition and emission tables for a k-mer path."""
    kmer_seq = np.asarray(kmer_seq, dtype=np.int64)
    ltp = np.empty(kmer_seq.size)
    ltp[0] = model.log_outer_prior[kmer_seq[0]]
    if kmer_seq.size > 1:
        ltp[1:] = model.log_outer_transition[kmer_seq[:-1], kmer_seq[1:] & 3]
    return (
        ltp,
        np.ascontiguousarray(model.log_norm_const[kmer_seq]),
        np.ascontiguousarray(model.inv_two_var[kmer_seq]),
        np.ascontiguousarray(model.emission_mean[kmer_seq]),
        np.ascontiguousarray(model.log_inner_prior),
        model.log_inner_stay,
        model.log_inner_exit,
    )


def _prepare(model, kmer_seq, signal):
    kmer_seq = np.asarray(kmer_seq, dtype=np.int64)
    x = np.ascontiguousarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise LengthMismatch("signal must be a non-empty 1-d sequence")
    if kmer_seq.ndim != 1 or kmer_seq.size == 0:
        raise LengthMismatch("k-mer sequence must be non-empty")
    if kmer_seq.size > x.size:
        raise InfeasibleClamp(f"{kmer_seq.size} k-mers cannot fit in {x.size} samples")
    check_kmer_path(kmer_seq, model.config)
    return kmer_seq, x


@dataclass(frozen=True)
class ForwardResult:
    log_evidence: float
    alpha: np.ndarray


@dataclass(frozen=True)
class PosteriorTable:
    """``gamma[n, m, e]`` = P(k-mer position m, inner state e at time n | K, X)."""

    gamma: np.ndarray
    log_evidence: float

    @property
    def n_samples(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_kmers(self) -> int:
        return self.gamma.shape[1]


def clamped_forward(model: HelicaseModel, kmer_seq, signal) -> ForwardResult:
    kmer_seq, x = _prepare(model, kmer_seq, signal)
    alpha, logz = _accel.get_kernels().clamped_forward(x, *path_tables(model, kmer_seq))
    return ForwardResult(float(logz), alpha)


def clamped_loglik(model: HelicaseModel, kmer_seq, signal) -> float:
    """``log p(K, X)`` using two rolling columns instead of the full table."""
    kmer_seq, x = _prepare(model, kmer_seq, signal)
    return float(_accel.get_kernels().clamped_loglik(x, *path_tables(model, kmer_seq)))


def clamped_backward(model: HelicaseModel, kmer_seq, signal) -> np.ndarray:
    kmer_seq, x = _prepare(model, kmer_seq, signal)
    return _accel.get_kernels().clamped_backward(x, *path_tables(model, kmer_seq))


def forward_backward(model: HelicaseModel, kmer_seq, signal):
    """Return ``(alpha, beta, log_evidence)`` from one preparation of the tables."""
    kmer_seq, x = _prepare(model, kmer_seq, signal)
    kern = _accel.get_kernels()
    tables = path_tables(model, kmer_seq)
    alpha, logz = kern.clamped_forward(x, *tables)
    beta = kern.clamped_backward(x, *tables)
    return alpha, beta, float(logz)


def posteriors(model: HelicaseModel, kmer_seq, signal) -> PosteriorTable:
    alpha, beta, logz = forward_backward(model, kmer_seq, signal)
    if not np.isfinite(logz):
        raise InfeasibleClamp("signal has zero likelihood under the clamped k-mer path")
    with np.errstate(invalid="ignore"):
        gamma = np.exp(alpha + beta - logz)
    gamma[~np.isfinite(gamma)] = 0.0
    return PosteriorTable(gamma, logz)


def joint_loglik(model: HelicaseModel, kmer_seq, inner_seq, lengths, signal) -> float:
    """``log p(K, H, X)`` for one fully specified path.

    ``inner_seq`` holds one :class:`InnerState` per sample and ``lengths``
    the number of samples emitted per k-mer.  A k-mer sequence that breaks
    the one-base rule gives ``-inf``.
    """
    kmer_seq = np.asarray(kmer_seq, dtype=np.int64)
    inner_seq = np.asarray(inner_seq, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    x = np.asarray(signal, dtype=np.float64)
    if lengths.size != kmer_seq.size:
        raise LengthMismatch("one segment length per k-mer is required")
    if inner_seq.size != x.size or int(lengths.sum()) != x.size:
        raise LengthMismatch("segment lengths and inner states must cover the signal")
    if np.any(lengths < 1):
        raise LengthMismatch("every segment needs at least one sample")
    if np.any((inner_seq < 1) | (inner_seq > 4)):
        raise NonEmittingState("inner sequence may contain only emitting states")
    if not is_kmer_path(kmer_seq, model.config):
        return NEG_INF

    with np.errstate(divide="ignore"):
        lp_outer = np.log(model.outer_prior)
        lt_outer = np.log(model.outer_transition)
        lp_inner = np.log(model.inner_prior)
        lt_inner = np.log(model.inner_transition)
    total = 0.0
    pos = 0
    for m, (K, L) in enumerate(zip(kmer_seq, lengths)):
        total += lp_outer[K] if m == 0 else lt_outer[kmer_seq[m - 1], K & 3]
        prev = None
        for l in range(L):
            h = int(inner_seq[pos + l])
            e = h - 1
            total += lp_inner[e] if prev is None else lt_inner[prev - 1, h]
            mu = model.emission_mean[K, e]
            var = model.emission_var[K, e]
            total += -0.5 * (LOG_2PI + np.log(var)) - (x[pos + l] - mu) ** 2 / (2 * var)
            prev = h
        total += lt_inner[prev - 1, InnerState.END]
        pos += L
    return float(total)


def compositions(N: int, M: int):
    """All ways of writing ``N`` as an ordered sum of ``M`` positive parts."""
    for cuts in itertools.combinations(range(1, N), M - 1):
        edges = (0,) + cuts + (N,)
        yield tuple(edges[i + 1] - edges[i] for i in range(M))


def inner_paths(model: HelicaseModel, L: int):
    """Every inner path of length ``L`` with non-zero probability, entry to End exit.

    Returns ``(paths, logw)``: emission indices ``(P, L)`` and the log of
    prior, transition and exit probabilities of each path.  Paths are grown
    one sample at a time, discarding zero-probability prefixes.
    """
    with np.errstate(divide="ignore"):
        lpi = np.log(model.inner_prior)
        ltr = np.log(model.inner_transition)
    paths = np.flatnonzero(np.isfinite(lpi))[:, None]
    logw = lpi[paths[:, 0]]
    for _ in range(L - 1):
        last = paths[:, -1]
        step = ltr[last][:, 1:]
        rows, nxt = np.nonzero(np.isfinite(step))
        paths = np.column_stack([paths[rows], nxt])
        logw = logw[rows] + step[rows, nxt]
    logw = logw + ltr[paths[:, -1], 0]
    keep = np.isfinite(logw)
    return paths[keep], logw[keep]


def _segment_inner_sums(model, K, xs, paths=None):
    """log of the sum over every inner path of one segment (entry to End exit)."""
    paths, logw = paths if paths is not None else inner_paths(model, xs.size)
    if paths.shape[0] == 0:
        return NEG_INF
    mu = model.emission_mean[K][paths]
    var = model.emission_var[K][paths]
    terms = logw + (-0.5 * (LOG_2PI + np.log(var)) - (xs[None, :] - mu) ** 2 / (2 * var)).sum(axis=1)
    return logsumexp(terms)


def brute_force_clamped(model: HelicaseModel, kmer_seq, signal) -> float:
    """Exact ``log p(K, X)`` by enumerating every segmentation and inner path.

    The sum over inner paths factorises across segments once the
    segmentation is fixed, so each segment's paths are enumerated on their
    own.  Intended for tests only: ``N <= 10`` and ``M <= 5``.
    """
    kmer_seq = np.asarray(kmer_seq, dtype=np.int64)
    x = np.asarray(signal, dtype=np.float64)
    N, M = x.size, kmer_seq.size
    if N > 10 or M > 5:
        raise OracleTooLarge(f"brute force limited to N <= 10, M <= 5 (got N={N}, M={M})")
    if M > N:
        raise InfeasibleClamp(f"{M} k-mers cannot fit in {N} samples")
    if not is_kmer_path(kmer_seq, model.config):
        return NEG_INF
    with np.errstate(divide="ignore"):
        outer = np.log(model.outer_prior[kmer_seq[0]]) + sum(
            np.log(model.outer_transition[kmer_seq[m - 1], kmer_seq[m] & 3]) for m in range(1, M)
        )
    cache: dict[tuple[int, int, int], float] = {}
    by_len = {}
    terms = []
    for lengths in compositions(N, M):
        pos = 0
        acc = outer
        for m, L in enumerate(lengths):
            key = (m, pos, L)
            if key not in cache:
                if L not in by_len:
                    by_len[L] = inner_paths(model, L)
                cache[key] = _segment_inner_sums(model, int(kmer_seq[m]), x[pos : pos + L], by_len[L])
            acc += cache[key]
            pos += L
        terms.append(acc)
    return float(logsumexp(terms))
