"""Basecalling by marginalized beam search, plus exact small-k oracles and identity scoring.

MGBS keeps up to ``W`` base-sequence hypotheses.  Each carries the forward
log-mass of every emitting inner state of its current k-mer, so a
hypothesis' score is the marginal log-likelihood of its prefix with the
inner states summed out.  Per sample a hypothesis either stays in its
k-mer or exits through End into one of the four successors; a move that
reproduces a sequence already in the beam is merged into it by log-sum-exp.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from helicase_hmm import _accel
from helicase_hmm.clamped import inner_paths
from helicase_hmm.errors import EmptySignal, NoAlignment, OracleTooLarge
from helicase_hmm.model import (
    ALPHABET,
    LOG_2PI,
    HelicaseModel,
    bases_from_kmers,
)

VITERBI_MAX_K = 3
VITERBI_MAX_N = 10_000


def _model_tables(model: HelicaseModel):
    return (
        np.ascontiguousarray(model.log_outer_prior),
        np.ascontiguousarray(model.log_outer_transition),
        np.ascontiguousarray(model.log_norm_const),
        np.ascontiguousarray(model.inv_two_var),
        np.ascontiguousarray(model.emission_mean),
        np.ascontiguousarray(model.log_inner_prior),
        model.log_inner_stay,
        model.log_inner_exit,
    )


def _signal(signal) -> np.ndarray:
    x = np.ascontiguousarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptySignal("cannot decode an empty signal")
    return x


@dataclass(frozen=True)
class BasecallResult:
    bases: str
    kmers: np.ndarray
    score: float
    beam_width: int
    seconds: float = 0.0
    boundaries: np.ndarray | None = None


def _chain(parent_of, node_kmer, node) -> list[int]:
    out = []
    while node >= 0:
        out.append(int(node_kmer[node]))
        node = int(parent_of[node])
    return out[::-1]


def mgbs_decode(
    model: HelicaseModel, signal, beam_width: int = 512, boundaries: bool = False
) -> BasecallResult:
    """Greedy marginalized beam search for ``argmax_K p(K, X)``.

    Candidates are pruned by score with a stable sort over a fixed
    generation order (beam rank, stay before moves, moves A..T), which
    makes the search deterministic.  Among final hypotheses with equal
    score the lexicographically smaller base sequence wins.  With
    ``boundaries`` the decoded path is re-squiggled to give per-k-mer
    start samples.
    """
    if beam_width < 1:
        raise ValueError("beam width must be >= 1")
    x = _signal(signal)
    t0 = time.perf_counter()
    parent_of, node_kmer, nodes, final = _accel.get_kernels().mgbs(
        x, *_model_tables(model), model.k, int(beam_width)
    )
    elapsed = time.perf_counter() - t0
    best = float(np.max(final))
    ties = np.flatnonzero(final == best)
    paths = [_chain(parent_of, node_kmer, int(nodes[i])) for i in ties]
    if len(paths) > 1:
        paths.sort(key=lambda p: bases_from_kmers(p, model.config))
    kmers = np.asarray(paths[0], dtype=np.int64)
    bounds = None
    if boundaries:
        from helicase_hmm.signal import resquiggle

        bounds = resquiggle(model, kmers, x).starts
    return BasecallResult(
        bases=bases_from_kmers(kmers, model.config),
        kmers=kmers,
        score=best,
        beam_width=int(beam_width),
        seconds=elapsed,
        boundaries=bounds,
    )


@dataclass(frozen=True)
class ViterbiResult:
    kmers: np.ndarray
    inner_states: np.ndarray
    lengths: np.ndarray
    score: float


def exact_viterbi_joint(model: HelicaseModel, signal) -> ViterbiResult:
    """Exact ``argmax_{K,H} p(K, H, X)`` over the full (k-mer, inner) space; small k only."""
    if model.k > VITERBI_MAX_K:
        raise OracleTooLarge(f"joint Viterbi limited to k <= {VITERBI_MAX_K}")
    x = _signal(signal)
    if x.size > VITERBI_MAX_N:
        raise OracleTooLarge(f"joint Viterbi limited to N <= {VITERBI_MAX_N}")
    kpath, epath, starts, score = _accel.get_kernels().viterbi_joint(
        x, *_model_tables(model), model.k
    )
    idx = np.flatnonzero(starts)
    lengths = np.diff(np.append(idx, x.size))
    return ViterbiResult(
        kmers=kpath[idx].astype(np.int64),
        inner_states=epath.astype(np.int64) + 1,
        lengths=lengths.astype(np.int64),
        score=float(score),
    )


# -- exhaustive oracles -----------------------------------------------------


def _count_paths(model, N):
    return sum(model.num_kmers * 4 ** (M - 1) for M in range(1, N + 1))


def _segment_tables(model: HelicaseModel, x: np.ndarray):
    """Per (k-mer, start, length): log-sum and max over every inner path of the segment.

    Each segment's non-zero inner paths are enumerated explicitly, from
    entry via ``inner_prior`` to the End exit.  Also returns the argmax inner path.
    """
    N = x.size
    nk = model.num_kmers
    seg_sum = np.full((nk, N, N + 1), -np.inf)
    seg_max = np.full((nk, N, N + 1), -np.inf)
    seg_arg: dict[tuple[int, int, int], np.ndarray] = {}
    for L in range(1, N + 1):
        paths, trans = inner_paths(model, L)
        if paths.shape[0] == 0:
            continue
        for K in range(nk):
            mu = model.emission_mean[K][paths]
            var = model.emission_var[K][paths]
            lnc = -0.5 * (LOG_2PI + np.log(var))
            for s in range(N - L + 1):
                xs = x[s : s + L]
                terms = trans + (lnc - (xs[None, :] - mu) ** 2 / (2 * var)).sum(axis=1)
                i = int(np.argmax(terms))
                seg_max[K, s, L] = terms[i]
                seg_arg[(K, s, L)] = paths[i] + 1
                m = terms[i]
                seg_sum[K, s, L] = m + np.log(np.exp(terms - m).sum())
    return seg_sum, seg_max, seg_arg


def _extend(f, K, seg, reduce_max):
    """Mass after appending k-mer ``K`` to a prefix with samples-consumed vector ``f``."""
    N = f.size - 1
    n = np.arange(N + 1)[:, None]
    j = np.arange(N)[None, :]
    # seg[..., 0] is -inf, which masks j >= n
    v = f[None, :N] + seg[K, j, np.clip(n - j, 0, None)]
    m = v.max(axis=1)
    out = np.full(N + 1, -np.inf)
    ok = m > -np.inf
    if reduce_max:
        out[ok] = m[ok]
    else:
        out[ok] = m[ok] + np.log(np.exp(v[ok] - m[ok, None]).sum(axis=1))
    return out


def _search(model, x, seg, reduce_max):
    """Depth-first enumeration of every k-mer path, sharing work between common prefixes."""
    N = x.size
    tail = 4 ** (model.k - 1)
    with np.errstate(divide="ignore"):
        lp = np.log(model.outer_prior)
        lt = np.log(model.outer_transition)
    best = [-np.inf, None]

    def visit(path, f):
        s = f[N]
        if s > best[0] or (
            s == best[0]
            and s > -np.inf
            and bases_from_kmers(path, model.config) < bases_from_kmers(best[1], model.config)
        ):
            best[0], best[1] = s, list(path)
        if len(path) == N:
            return
        K = path[-1]
        for b in range(4):
            if lt[K, b] == -np.inf:
                continue
            nxt = (K % tail) * 4 + b
            g = _extend(f, nxt, seg, reduce_max) + lt[K, b]
            if np.isfinite(g).any():
                path.append(nxt)
                visit(path, g)
                path.pop()

    for K in range(model.num_kmers):
        if lp[K] == -np.inf:
            continue
        f0 = np.full(N + 1, -np.inf)
        f0[0] = 0.0
        visit([K], _extend(f0, K, seg, reduce_max) + lp[K])
    return best[0], best[1]


def exhaustive_marginal_map(model: HelicaseModel, signal, limit: int = 200_000):
    """``argmax_K p(K, X)`` over every k-mer path of every feasible length.

    ``p(K, X)`` is evaluated by summing explicitly enumerated inner paths per
    segment over all segmentations.  Returns ``(bases, score)``; ties go to
    the lexicographically smaller base sequence.
    """
    x = _signal(signal)
    if _count_paths(model, x.size) > limit:
        raise OracleTooLarge("too many k-mer paths to enumerate")
    seg_sum, _, _ = _segment_tables(model, x)
    score, path = _search(model, x, seg_sum, reduce_max=False)
    return bases_from_kmers(path, model.config), float(score)


def exhaustive_joint_max(model: HelicaseModel, signal, limit: int = 200_000):
    """``max_{K,H} p(K, H, X)`` by enumerating k-mer paths, segmentations and inner paths.

    Returns ``(score, kmers, inner_states, lengths)``.
    """
    x = _signal(signal)
    N = x.size
    if _count_paths(model, N) > limit:
        raise OracleTooLarge("too many k-mer paths to enumerate")
    _, seg_max, seg_arg = _segment_tables(model, x)
    score, path = _search(model, x, seg_max, reduce_max=True)
    # recover the segmentation of the winning path
    M = len(path)
    f = np.full((M + 1, N + 1), -np.inf)
    f[0, 0] = 0.0
    arg = np.zeros((M + 1, N + 1), dtype=np.int64)
    for m, K in enumerate(path, start=1):
        for n in range(1, N + 1):
            j = np.arange(n)
            v = f[m - 1, j] + seg_max[K, j, n - j]
            arg[m, n] = int(np.argmax(v))
            f[m, n] = v[arg[m, n]]
    lengths = []
    n = N
    for m in range(M, 0, -1):
        j = arg[m, n]
        lengths.append(n - j)
        n = j
    lengths = lengths[::-1]
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    states = np.concatenate([seg_arg[(K, int(s), L)] for K, s, L in zip(path, starts, lengths)])
    return float(score), np.array(path), states, np.array(lengths)


# -- identity scoring -------------------------------------------------------


@dataclass(frozen=True)
class IdentityScore:
    identity: float
    insert: float
    delete: float
    substitute: float
    matches: int
    mismatches: int
    insertions: int
    deletions: int
    alignment_span: int


def _codes(s: str) -> np.ndarray:
    lut = {b: i for i, b in enumerate(ALPHABET)}
    return np.array([lut.get(c, 4 + ord(c)) for c in s.upper()], dtype=np.int64)


def score_identity(
    calls: str, truth: str, match: float = 1.0, mismatch: float = -1.0, gap: float = -1.0
) -> IdentityScore:
    """Identity and error rates over the alignment span from first to last match.

    Insertions are called bases absent from the truth; deletions are truth
    bases missing from the calls.
    """
    if not calls or not truth:
        raise NoAlignment("both sequences must be non-empty")
    a, b = _codes(truth), _codes(calls)
    ops = _accel.get_kernels().nw_align(a, b, float(match), float(mismatch), float(gap))
    is_match = np.zeros(ops.size, dtype=bool)
    i = j = 0
    for t, op in enumerate(ops):
        if op == 0:
            is_match[t] = a[i] == b[j]
            i += 1
            j += 1
        elif op == 2:
            i += 1
        else:
            j += 1
    hits = np.flatnonzero(is_match)
    if hits.size == 0:
        raise NoAlignment("no matching base in the alignment")
    span = slice(int(hits[0]), int(hits[-1]) + 1)
    o, mt = ops[span], is_match[span]
    matches = int(mt.sum())
    mismatches = int(((o == 0) & ~mt).sum())
    ins = int((o == 1).sum())
    dels = int((o == 2).sum())
    total = matches + mismatches + ins + dels
    return IdentityScore(
        identity=matches / total,
        insert=ins / total,
        delete=dels / total,
        substitute=mismatches / total,
        matches=matches,
        mismatches=mismatches,
        insertions=ins,
        deletions=dels,
        alignment_span=total,
    )

