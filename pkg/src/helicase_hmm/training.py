"""Baum-Welch on the clamped trellis.

The E-step runs forward-backward over each labelled read and accumulates
posterior-weighted moments per (k-mer, inner state) plus expected inner
transitions.  Statistics from disjoint subsets of reads add, so reads are
processed in fixed-size chunks whose partial stats are merged in chunk
order; the result does not depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from helicase_hmm import _accel
from helicase_hmm.clamped import _prepare, path_tables
from helicase_hmm.errors import EmptyDataset, InfeasibleClamp, MissingLabels
from helicase_hmm.model import N_EMIT, VARIANCE_FLOOR, HelicaseModel, ensure_valid

log = logging.getLogger(__name__)

CHUNK_READS = 16


@dataclass
class SufficientStats:
    """Accumulators for one M-step.

    ``xi[e, 0]`` is the expected number of exits to End from emitting state
    ``e`` and ``xi[e, 1 + f]`` the expected number of ``e -> f`` moves.
    """

    weight: np.ndarray
    wsum: np.ndarray
    wsq: np.ndarray
    xi: np.ndarray
    reads_seen: int = 0
    reads_skipped: int = 0
    total_loglik: float = 0.0

    @classmethod
    def zeros(cls, num_kmers: int) -> "SufficientStats":
        return cls(
            weight=np.zeros((num_kmers, N_EMIT)),
            wsum=np.zeros((num_kmers, N_EMIT)),
            wsq=np.zeros((num_kmers, N_EMIT)),
            xi=np.zeros((N_EMIT, N_EMIT + 1)),
        )

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(
            weight=self.weight + other.weight,
            wsum=self.wsum + other.wsum,
            wsq=self.wsq + other.wsq,
            xi=self.xi + other.xi,
            reads_seen=self.reads_seen + other.reads_seen,
            reads_skipped=self.reads_skipped + other.reads_skipped,
            total_loglik=self.total_loglik + other.total_loglik,
        )

    __add__ = merge


@dataclass(frozen=True)
class Floors:
    variance_floor: float = VARIANCE_FLOOR
    min_weight: float = 1.0
    transition_pseudocount: float = 1.0


@dataclass
class EpochRecord:
    epoch: int
    loglik: float
    cells_updated: int
    cells_frozen: int
    reads_skipped: int
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def logliks(self) -> list[float]:
        return [r.loglik for r in self.epochs]

    def to_tsv(self) -> str:
        lines = ["epoch\tloglik\tcells_updated\tcells_frozen\treads_skipped\tseconds"]
        for r in self.epochs:
            lines.append(
                f"{r.epoch}\t{r.loglik:.10f}\t{r.cells_updated}\t{r.cells_frozen}"
                f"\t{r.reads_skipped}\t{r.seconds:.3f}"
            )
        return "\n".join(lines) + "\n"


def accumulate_stats(model: HelicaseModel, read, stats: SufficientStats | None = None) -> SufficientStats:
    """Add one read's E-step statistics to ``stats`` (a new object is returned).

    Reads whose k-mer path cannot fit the signal, or has zero likelihood,
    are counted in ``reads_skipped`` instead of raising.
    """
    if stats is None:
        stats = SufficientStats.zeros(model.num_kmers)
    kmers = getattr(read, "truth_kmers", None)
    if kmers is None:
        raise MissingLabels(f"read {getattr(read, 'read_id', '?')} has no k-mer labels")
    try:
        kmers, x = _prepare(model, kmers, read.signal)
    except InfeasibleClamp:
        return stats.merge(_skipped(model))
    kern = _accel.get_kernels()
    tables = path_tables(model, kmers)
    alpha, logz = kern.clamped_forward(x, *tables)
    if not np.isfinite(logz):
        return stats.merge(_skipped(model))
    beta = kern.clamped_backward(x, *tables)
    w, s, q, xi = kern.accumulate(x, alpha, beta, logz, *tables)
    one = SufficientStats.zeros(model.num_kmers)
    np.add.at(one.weight, kmers, w)
    np.add.at(one.wsum, kmers, s)
    np.add.at(one.wsq, kmers, q)
    one.xi += xi
    one.reads_seen = 1
    one.total_loglik = float(logz)
    return stats.merge(one)


def _skipped(model):
    s = SufficientStats.zeros(model.num_kmers)
    s.reads_skipped = 1
    return s


def _chunk_stats(model, reads):
    stats = SufficientStats.zeros(model.num_kmers)
    for r in reads:
        stats = accumulate_stats(model, r, stats)
    return stats


def e_step(model: HelicaseModel, reads: Sequence, workers: int = 1) -> SufficientStats:
    chunks = [reads[i : i + CHUNK_READS] for i in range(0, len(reads), CHUNK_READS)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _chunk_stats(model, c), chunks))
    else:
        parts = [_chunk_stats(model, c) for c in chunks]
    total = SufficientStats.zeros(model.num_kmers)
    for p in parts:
        total = total.merge(p)
    return total


def m_step(
    model: HelicaseModel,
    stats: SufficientStats,
    floors: Floors = Floors(),
    update_transitions: bool = True,
) -> tuple[HelicaseModel, int]:
    """Closed-form update of the emission tables (and inner transitions).

    Cells with expected weight below ``floors.min_weight`` keep their
    previous parameters.  Transition rows are re-estimated from expected
    counts plus a pseudocount spread over the transitions that are allowed
    (non-zero) in the current model, so the inner topology never changes.
    Returns the new model and the number of emission cells updated.
    """
    w = stats.weight
    live = w >= floors.min_weight
    safe_w = np.where(live, w, 1.0)
    mu_new = stats.wsum / safe_w
    var_new = np.maximum(stats.wsq / safe_w - mu_new**2, floors.variance_floor)
    mu = np.where(live, mu_new, model.emission_mean)
    var = np.where(live, var_new, model.emission_var)

    trans = model.inner_transition
    if update_transitions:
        allowed = trans > 0
        counts = np.where(allowed, stats.xi + floors.transition_pseudocount, 0.0)
        rows = counts.sum(axis=1, keepdims=True)
        trans = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), trans)
    new = model.replace(emission_mean=mu, emission_var=var, inner_transition=trans)
    return new, int(live.sum())


def _labelled(dataset: Iterable) -> list:
    reads = list(dataset)
    if not reads:
        raise EmptyDataset("training needs at least one read")
    for r in reads:
        if getattr(r, "truth_kmers", None) is None:
            raise MissingLabels(f"read {getattr(r, 'read_id', '?')} has no k-mer labels")
    return reads


def total_loglik(model: HelicaseModel, dataset, workers: int = 1) -> float:
    return e_step(model, _labelled(dataset), workers).total_loglik


def train(
    model: HelicaseModel,
    dataset,
    epochs: int,
    floors: Floors = Floors(),
    update_transitions: bool = True,
    workers: int = 1,
) -> tuple[HelicaseModel, TrainReport]:
    """Run ``epochs`` rounds of EM.

    Each report row holds the clamped log-likelihood of the model that
    entered that epoch, i.e. the E-step value; rows are non-decreasing.
    """
    reads = _labelled(dataset)
    report = TrainReport()
    nk = model.num_kmers * N_EMIT
    for epoch in range(epochs):
        t0 = time.perf_counter()
        stats = e_step(model, reads, workers)
        model, updated = m_step(model, stats, floors, update_transitions)
        ensure_valid(model)
        rec = EpochRecord(
            epoch=epoch + 1,
            loglik=stats.total_loglik,
            cells_updated=updated,
            cells_frozen=nk - updated,
            reads_skipped=stats.reads_skipped,
            seconds=time.perf_counter() - t0,
        )
        report.epochs.append(rec)
        log.info("epoch %d loglik %.6f updated %d", rec.epoch, rec.loglik, updated)
    return model, report
