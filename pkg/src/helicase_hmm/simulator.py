"""Generative sampling, the phase-type duration law and signal diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from helicase_hmm.errors import NoData, NonAbsorbing
from helicase_hmm.model import (
    ALPHABET,
    LOG_2PI,
    N_EMIT,
    HelicaseModel,
    InnerParams,
    KmerConfig,
    decode_kmer,
    default_inner_params,
    ensure_valid,
    predecessors,
)
from helicase_hmm.read import Read


@dataclass(frozen=True)
class SimConfig:
    num_reads: int
    target_kmers: int | None = None
    target_samples: int | None = None
    seed: int = 0
    noiseless: bool = False

    def __post_init__(self):
        if (self.target_kmers is None) == (self.target_samples is None):
            raise ValueError("set exactly one of target_kmers / target_samples")
        if self.num_reads < 0:
            raise ValueError("num_reads must be >= 0")


def read_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for read ``index``; parallel sampling gives identical output."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _draw(cum: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum, u, side="right")), cum.size - 1)


def sample_read(
    model: HelicaseModel,
    rng: np.random.Generator,
    target_kmers: int | None = None,
    target_samples: int | None = None,
    read_id: str = "read",
    noiseless: bool = False,
) -> Read:
    """Draw one read by running the outer and inner chains forward.

    With ``target_samples`` the last segment is cut at that length and the
    read is marked ``truncated`` unless the cut coincides with a k-mer end.
    ``log_prob`` is the log-probability of the drawn (K, H, X); for a
    truncated read it omits the final End exit.
    """
    if (target_kmers is None) == (target_samples is None):
        raise ValueError("set exactly one of target_kmers / target_samples")
    cfg = model.config
    tail = 4 ** (cfg.k - 1)
    cum_prior = np.cumsum(model.outer_prior)
    cum_outer = np.cumsum(model.outer_transition, axis=1)
    cum_pi = np.cumsum(model.inner_prior)
    cum_inner = np.cumsum(model.inner_transition, axis=1)
    with np.errstate(divide="ignore"):
        l_prior = np.log(model.outer_prior)
        l_outer = np.log(model.outer_transition)
        l_pi = np.log(model.inner_prior)
        l_inner = np.log(model.inner_transition)
    sd = np.sqrt(model.emission_var)

    kmers: list[int] = []
    lengths: list[int] = []
    states: list[int] = []
    signal: list[float] = []
    logp = 0.0
    truncated = False
    K = -1
    while True:
        if K < 0:
            K = _draw(cum_prior, rng.random())
            logp += l_prior[K]
        else:
            b = _draw(cum_outer[K], rng.random())
            logp += l_outer[K, b]
            K = (K % tail) * 4 + b
        kmers.append(K)
        e = _draw(cum_pi, rng.random())
        logp += l_pi[e]
        L = 0
        while True:
            mu = model.emission_mean[K, e]
            x = mu if noiseless else mu + sd[K, e] * rng.standard_normal()
            var = model.emission_var[K, e]
            logp += -0.5 * (LOG_2PI + math.log(var)) - (x - mu) ** 2 / (2 * var)
            signal.append(x)
            states.append(e + 1)
            L += 1
            if target_samples is not None and len(signal) == target_samples:
                nxt = _draw(cum_inner[e], rng.random())
                if nxt == 0:
                    logp += l_inner[e, 0]
                else:
                    truncated = True
                break
            nxt = _draw(cum_inner[e], rng.random())
            logp += l_inner[e, nxt]
            if nxt == 0:
                break
            e = nxt - 1
        lengths.append(L)
        if target_kmers is not None and len(kmers) == target_kmers:
            break
        if target_samples is not None and len(signal) == target_samples:
            break

    bases = decode_kmer(kmers[0], cfg) + "".join(ALPHABET[K & 3] for K in kmers[1:])
    return Read(
        read_id=read_id,
        signal=np.asarray(signal),
        truth_bases=bases,
        truth_kmers=np.asarray(kmers, dtype=np.int64),
        segment_lengths=np.asarray(lengths, dtype=np.int64),
        inner_states=np.asarray(states, dtype=np.int64),
        truncated=truncated,
        log_prob=float(logp),
    )


def simulate_dataset(model: HelicaseModel, config: SimConfig) -> list[Read]:
    ensure_valid(model)
    width = max(1, len(str(max(config.num_reads - 1, 0))))
    return [
        sample_read(
            model,
            read_rng(config.seed, i),
            target_kmers=config.target_kmers,
            target_samples=config.target_samples,
            read_id=f"read{i:0{width}d}",
            noiseless=config.noiseless,
        )
        for i in range(config.num_reads)
    ]


# -- duration law ---------------------------------------------------------


@dataclass(frozen=True)
class DurationPmf:
    """``pmf[L - 1]`` = P(duration = L) for L = 1..L_max."""

    pmf: np.ndarray
    tail: float
    mean: float
    inner_prior: np.ndarray
    inner_transition: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, self.pmf.size + 1)


def _absorbing_parts(inner_prior, inner_transition):
    pi = np.asarray(inner_prior, dtype=float)
    P = np.asarray(inner_transition, dtype=float)
    T = P[:, 1:]
    t = P[:, 0]
    # every state the chain can visit must be able to reach End
    reach = pi > 0
    while True:
        nxt = reach | (reach @ (T > 0)).astype(bool)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    exits = t > 0
    can_end = exits.copy()
    while True:
        nxt = can_end | ((T > 0) @ can_end).astype(bool)
        if np.array_equal(nxt, can_end):
            break
        can_end = nxt
    if not np.all(can_end[reach]):
        raise NonAbsorbing("End is unreachable from some visited inner state")
    return pi, T, t


def mean_duration(inner_prior, inner_transition) -> float:
    pi, T, _ = _absorbing_parts(inner_prior, inner_transition)
    return float(pi @ np.linalg.solve(np.eye(T.shape[0]) - T, np.ones(T.shape[0])))


def duration_pmf(inner_prior, inner_transition, L_max: int = 200) -> DurationPmf:
    pi, T, t = _absorbing_parts(inner_prior, inner_transition)
    pmf = np.empty(L_max)
    v = pi.copy()
    for L in range(L_max):
        pmf[L] = v @ t
        v = v @ T
    return DurationPmf(
        pmf=pmf,
        tail=float(max(0.0, 1.0 - pmf.sum())),
        mean=mean_duration(pi, np.column_stack([t, T])),
        inner_prior=pi,
        inner_transition=np.column_stack([t, T]),
    )


def sample_durations(inner_prior, inner_transition, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo durations of the inner chain, vectorised over ``n`` walkers."""
    _absorbing_parts(inner_prior, inner_transition)
    cum_pi = np.cumsum(inner_prior)
    cum = np.cumsum(inner_transition, axis=1)
    state = np.minimum(np.searchsorted(cum_pi, rng.random(n), side="right"), N_EMIT - 1)
    dur = np.ones(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        u = rng.random(idx.size)
        nxt = (u[:, None] >= cum[state[idx]]).sum(axis=1)
        nxt = np.minimum(nxt, N_EMIT)
        done = nxt == 0
        alive[idx[done]] = False
        cont = idx[~done]
        state[cont] = nxt[~done] - 1
        dur[cont] += 1
    return dur


def chi_square_gof(observed_lengths: np.ndarray, dist: DurationPmf, min_expected: float = 5.0):
    """Pearson goodness of fit of observed durations against ``dist``.

    Bins run L = 1, 2, ... while the expected count stays >= ``min_expected``;
    everything longer is pooled into one tail bin.  Returns
    ``(statistic, dof, p_value)``.
    """
    from scipy import stats as sps

    obs_len = np.asarray(observed_lengths, dtype=np.int64)
    n = float(obs_len.size)
    exp = dist.pmf * n
    small = np.flatnonzero(exp < min_expected)
    cut = int(small[0]) if small.size else exp.size
    counts = np.bincount(obs_len, minlength=cut + 1)[1 : cut + 1].astype(float)
    o = np.append(counts, n - counts.sum())
    e = np.append(exp[:cut], n - exp[:cut].sum())
    if e[-1] < min_expected:
        o[-2] += o[-1]
        e[-2] += e[-1]
        o, e = o[:-1], e[:-1]
    stat = float(((o - e) ** 2 / e).sum())
    dof = o.size - 1
    return stat, dof, float(sps.chi2.sf(stat, dof))


# -- constructed models ---------------------------------------------------


def back_midpoint_means(config: KmerConfig, s_means: np.ndarray) -> np.ndarray:
    """Back-state means halfway between a k-mer's S level and its predecessors' S level."""
    level = s_means.mean(axis=1)
    if config.k == 1:
        prev = np.full(level.shape, level.mean())
    else:
        prev = np.array([level[predecessors(K, config)].mean() for K in range(config.num_kmers)])
    return 0.5 * (level + prev)


def synthetic_model(
    k: int,
    sigma: float,
    seed: int = 0,
    level_range: float = 4.0,
    state_offsets: Sequence[float] = (0.0, 0.25, -0.25),
    inner: InnerParams | None = None,
    back_offset: float | None = None,
) -> HelicaseModel:
    """Ground-truth model with k-mer levels on an evenly spaced grid.

    Levels are a seeded permutation of ``4**k`` points spanning
    ``level_range``, so the smallest gap between k-mer levels is
    ``level_range / (4**k - 1)`` (see :func:`level_gap`).  S1/S2/S3 add
    ``state_offsets``; Back sits at the midpoint between the k-mer and its
    predecessors unless ``back_offset`` is given.
    """
    cfg = KmerConfig(k)
    nk = cfg.num_kmers
    rng = np.random.default_rng(seed)
    grid = np.linspace(-level_range / 2, level_range / 2, nk)
    level = grid[rng.permutation(nk)]
    s = level[:, None] + np.asarray(state_offsets)[None, :]
    mean = np.empty((nk, N_EMIT))
    mean[:, :3] = s
    if back_offset is None:
        mean[:, 3] = back_midpoint_means(cfg, s)
    else:
        mean[:, 3] = level + back_offset
    inner = inner or default_inner_params()
    model = HelicaseModel(
        config=cfg,
        outer_prior=np.full(nk, 1.0 / nk),
        outer_transition=np.full((nk, 4), 0.25),
        inner_prior=inner.prior,
        inner_transition=inner.transition,
        emission_mean=mean,
        emission_var=np.full((nk, N_EMIT), sigma**2),
        meta={"level_gap": level_range / (nk - 1)},
    )
    return ensure_valid(model)


def level_gap(model: HelicaseModel) -> float:
    """Smallest gap between distinct per-k-mer S1 means."""
    lv = np.unique(model.emission_mean[:, 0])
    return float(np.diff(lv).min()) if lv.size > 1 else 0.0


# -- position-conditional signal means -------------------------------------


@dataclass(frozen=True)
class ConditionalMeans:
    offsets: np.ndarray
    means: np.ndarray  # (len(offsets), 4), NaN where no sample
    counts: np.ndarray

    def to_tsv(self) -> str:
        lines = ["offset\t" + "\t".join(ALPHABET) + "\t" + "\t".join(f"n_{b}" for b in ALPHABET)]
        for o, row, cnt in zip(self.offsets, self.means, self.counts):
            vals = "\t".join("nan" if np.isnan(v) else f"{v:.6f}" for v in row)
            lines.append(f"{o}\t{vals}\t" + "\t".join(str(int(c)) for c in cnt))
        return "\n".join(lines) + "\n"


def position_conditional_means(
    reads: Iterable[Read],
    k: int,
    window: tuple[int, int] = (-7, 2),
    anchor: int | None = None,
    positions: Sequence[np.ndarray] | None = None,
) -> ConditionalMeans:
    """Mean signal conditioned on the base found at each offset from the aligned base.

    A sample aligned to k-mer position ``m`` is aligned to base ``m + anchor``
    of the read (``anchor`` defaults to ``-window[0]`` clipped to the k-mer).
    ``positions`` overrides the per-sample k-mer positions, e.g. with a
    re-squiggle result; otherwise the ground-truth segmentation is used.
    """
    lo, hi = window
    if anchor is None:
        anchor = min(max(-lo, 0), k - 1)
    offsets = np.arange(lo, hi + 1)
    sums = np.zeros((offsets.size, 4))
    counts = np.zeros((offsets.size, 4), dtype=np.int64)
    seen = False
    for i, r in enumerate(reads):
        if r.truth_bases is None:
            continue
        pos = positions[i] if positions is not None else (
            r.sample_positions() if r.segment_lengths is not None else None
        )
        if pos is None:
            continue
        seen = True
        codes = np.frombuffer(r.truth_bases.encode(), dtype=np.uint8)
        lut = np.full(256, -1, dtype=np.int64)
        for j, b in enumerate(ALPHABET):
            lut[ord(b)] = j
        codes = lut[codes]
        aligned = np.asarray(pos, dtype=np.int64) + anchor
        for oi, o in enumerate(offsets):
            idx = aligned + o
            ok = (idx >= 0) & (idx < codes.size)
            b = codes[idx[ok]]
            sums[oi] += np.bincount(b, weights=r.signal[ok], minlength=4)
            counts[oi] += np.bincount(b, minlength=4)
    if not seen:
        raise NoData("no reads with aligned bases")
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return ConditionalMeans(offsets, means, counts)
