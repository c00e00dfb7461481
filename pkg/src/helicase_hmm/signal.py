"""Signal conditioning and re-squiggle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from helicase_hmm import _accel
from helicase_hmm.clamped import posteriors
from helicase_hmm.errors import DegenerateFit, LengthMismatch, MissingKmerLevel
from helicase_hmm.model import HelicaseModel, InnerState, decode_kmer


@dataclass(frozen=True)
class NormalizationParams:
    scale: float
    shift: float
    fit_residual: float

    def apply(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.shift) / self.scale

    def invert(self, normalized) -> np.ndarray:
        return np.asarray(normalized, dtype=np.float64) * self.scale + self.shift


def fit_normalization(raw, predicted) -> NormalizationParams:
    """Ordinary least squares ``raw ~ scale * predicted + shift``."""
    y = np.asarray(raw, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise LengthMismatch("raw and predicted must be 1-d and of equal length")
    if y.size < 2:
        raise LengthMismatch("need at least two samples")
    pc = p - p.mean()
    sxx = float(pc @ pc)
    if sxx <= 1e-300 * max(1.0, float(p @ p)):
        raise DegenerateFit("predicted currents are constant")
    scale = float(pc @ (y - y.mean())) / sxx
    shift = float(y.mean() - scale * p.mean())
    if scale == 0.0:
        raise DegenerateFit("fitted scale is zero")
    resid = y - (scale * p + shift)
    return NormalizationParams(scale, shift, float(np.sqrt(np.mean(resid**2))))


def predicted_currents(kmer_table: Mapping[int, float] | np.ndarray, alignment) -> np.ndarray:
    """Piecewise-constant expected signal: the table level of each sample's aligned k-mer."""
    alignment = np.asarray(alignment, dtype=np.int64)
    if isinstance(kmer_table, np.ndarray):
        table = kmer_table
        if alignment.size and (alignment.min() < 0 or alignment.max() >= table.size):
            raise MissingKmerLevel("alignment refers to k-mers outside the table")
        out = table[alignment].astype(np.float64)
        if np.isnan(out).any():
            raise MissingKmerLevel(int(alignment[np.flatnonzero(np.isnan(out))[0]]))
        return out
    try:
        return np.array([kmer_table[int(K)] for K in alignment], dtype=np.float64)
    except KeyError as exc:
        raise MissingKmerLevel(exc.args[0]) from None


@dataclass(frozen=True)
class ResquiggleResult:
    """Per-sample alignment of a signal to a clamped k-mer path.

    ``positions``/``states`` hold the k-mer position and :class:`InnerState`
    code chosen for each sample, ``posterior`` the posterior of that cell.
    ``starts[m]:ends[m]`` is the sample range of k-mer ``m``.
    """

    kmers: np.ndarray
    positions: np.ndarray
    states: np.ndarray
    posterior: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    log_evidence: float

    @property
    def back_flags(self) -> np.ndarray:
        return self.states == InnerState.BACK

    @property
    def kmer_back_flags(self) -> np.ndarray:
        """True for k-mers with at least one sample assigned to Back."""
        out = np.zeros(self.kmers.size, dtype=bool)
        np.logical_or.at(out, self.positions, self.back_flags)
        return out

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts

    def to_rows(self, model: HelicaseModel):
        for n in range(self.positions.size):
            K = int(self.kmers[self.positions[n]])
            yield (
                n,
                K,
                decode_kmer(K, model.config),
                InnerState(int(self.states[n])).label,
                float(self.posterior[n]),
                int(self.states[n] == InnerState.BACK),
            )


def resquiggle(model: HelicaseModel, kmer_seq, signal) -> ResquiggleResult:
    """Align samples to k-mers by the most likely posterior cell per sample.

    The per-sample argmax is projected onto the best monotone segmentation
    (each k-mer gets at least one sample, positions advance by at most one),
    scored by the summed max-over-state posterior.  When the raw argmax is
    already monotone the projection returns it unchanged.
    """
    post = posteriors(model, kmer_seq, signal)
    g = post.gamma
    cell = g.max(axis=2)
    path = _accel.get_kernels().monotone_path(np.ascontiguousarray(cell))
    n = np.arange(g.shape[0])
    e = np.argmax(g[n, path], axis=1)
    M = g.shape[1]
    starts = np.searchsorted(path, np.arange(M), side="left")
    ends = np.append(starts[1:], g.shape[0])
    return ResquiggleResult(
        kmers=np.asarray(kmer_seq, dtype=np.int64),
        positions=path,
        states=e.astype(np.int64) + 1,
        posterior=g[n, path, e],
        starts=starts.astype(np.int64),
        ends=ends.astype(np.int64),
        log_evidence=post.log_evidence,
    )


def boundary_error(estimated_starts, true_starts) -> float:
    """Mean absolute difference of k-mer start samples."""
    a = np.asarray(estimated_starts)
    b = np.asarray(true_starts)
    if a.shape != b.shape:
        raise LengthMismatch("boundary arrays differ in length")
    return float(np.mean(np.abs(a - b)))


def true_starts(lengths) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(lengths)[:-1]])

