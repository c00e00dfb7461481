"""Pure-numpy kernels, vectorised over the lattice within each time step.

Same signatures and return values as :mod:`helicase_hmm.kernels_jit`.
Selected with ``HHMM_DISABLE_JIT=1`` or when numba is unavailable.
"""

import numpy as np

NEG_INF = -np.inf


def _lse(a, axis):
    amax = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    return out


def _emit_all(lnc, i2v, mu, xn):
    d = xn - mu
    return lnc - d * d * i2v


def _band(n, N, M):
    return max(0, n - (N - M)), min(n, M - 1)


def clamped_forward(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    alpha = np.full((N, M, 4), NEG_INF)
    alpha[0, 0] = ltp[0] + lpi + _emit_all(lnc[0], i2v[0], mu[0], x[0])
    exit_prev = np.full(M, NEG_INF)
    exit_prev[0] = _lse(alpha[0, 0] + lex, axis=0)
    enter = np.full(M, NEG_INF)
    for n in range(1, N):
        lo, hi = _band(n, N, M)
        sl = slice(lo, hi + 1)
        stay = _lse(alpha[n - 1, sl][:, :, None] + lst[None, :, :], axis=1)
        enter[1:] = exit_prev[:-1] + ltp[1:]
        ent = enter[sl][:, None] + lpi[None, :]
        alpha[n, sl] = np.logaddexp(stay, ent) + _emit_all(lnc[sl], i2v[sl], mu[sl], x[n])
        exit_prev[:] = NEG_INF
        exit_prev[sl] = _lse(alpha[n, sl] + lex, axis=1)
    return alpha, exit_prev[M - 1]


def clamped_loglik(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    return clamped_forward(x, ltp, lnc, i2v, mu, lpi, lst, lex)[1]


def clamped_backward(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    beta = np.full((N, M, 4), NEG_INF)
    beta[N - 1, M - 1] = lex
    for n in range(N - 2, -1, -1):
        lo, hi = _band(n, N, M)
        hi1 = min(hi + 1, M - 1)
        em = _emit_all(lnc[lo : hi1 + 1], i2v[lo : hi1 + 1], mu[lo : hi1 + 1], x[n + 1])
        nb = beta[n + 1, lo : hi1 + 1]
        # within-segment continuation for m in [lo, hi]
        w = em[: hi - lo + 1] + nb[: hi - lo + 1]
        within = _lse(lst[None, :, :] + w[:, None, :], axis=2)
        start = ltp[lo : hi1 + 1] + _lse(lpi[None, :] + em + nb, axis=1)
        nxt = np.full(hi - lo + 1, NEG_INF)
        cnt = min(hi, M - 2) - lo + 1
        if cnt > 0:
            nxt[:cnt] = start[1 : cnt + 1]
        beta[n, lo : hi + 1] = np.logaddexp(within, lex[None, :] + nxt[:, None])
    return beta


def accumulate(x, alpha, beta, logz, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    with np.errstate(invalid="ignore"):
        g = np.exp(alpha + beta - logz)
    g = np.nan_to_num(g, nan=0.0)
    w = g.sum(axis=0)
    s = np.einsum("nme,n->me", g, x)
    q = np.einsum("nme,n->me", g, x * x)
    xi = np.zeros((4, 5))
    for n in range(N - 1):
        lo, hi = _band(n, N, M)
        hi1 = min(hi + 1, M - 1)
        a = alpha[n, lo : hi + 1]
        em = _emit_all(lnc[lo : hi1 + 1], i2v[lo : hi1 + 1], mu[lo : hi1 + 1], x[n + 1])
        nb = beta[n + 1, lo : hi1 + 1]
        r = hi - lo + 1
        tw = a[:, :, None] + lst[None] + (em[:r] + nb[:r])[:, None, :] - logz
        xi[:, 1:] += np.exp(tw).sum(axis=0)
        start = ltp[lo : hi1 + 1] + _lse(lpi[None, :] + em + nb, axis=1)
        nxt = np.full(r, NEG_INF)
        cnt = min(hi, M - 2) - lo + 1
        if cnt > 0:
            nxt[:cnt] = start[1 : cnt + 1]
        xi[:, 0] += np.exp(a + lex[None, :] + nxt[:, None] - logz).sum(axis=0)
    xi[:, 0] += np.exp(alpha[N - 1, M - 1] + lex - logz)
    return w, s, q, xi


def viterbi_joint(x, lprior, lout, lnc, i2v, mu, lpi, lst, lex, k):
    N = x.shape[0]
    nk = lprior.shape[0]
    step = 4 ** (k - 1)
    K = np.arange(nk)
    preds = (K >> 2)[:, None] + step * np.arange(4)[None, :]  # (nk, 4)
    last = K & 3
    delta = lprior[:, None] + lpi[None, :] + _emit_all(lnc, i2v, mu, x[0])
    bp_k = np.empty((N, nk, 4), dtype=np.int64)
    bp_e = np.empty((N, nk, 4), dtype=np.int64)
    bp_mv = np.zeros((N, nk, 4), dtype=bool)
    for n in range(1, N):
        ex = delta + lex[None, :]
        exit_arg = np.argmax(ex, axis=1)
        exit_best = ex[K, exit_arg]
        cand = exit_best[preds] + lout[preds, last[:, None]]
        j = np.argmax(cand, axis=1)
        enter = cand[K, j]
        enter_k = preds[K, j]
        st = delta[:, :, None] + lst[None, :, :]  # (nk, e, f)
        st_arg = np.argmax(st, axis=1)
        st_best = np.take_along_axis(st, st_arg[:, None, :], axis=1)[:, 0, :]
        mv = enter[:, None] + lpi[None, :]
        use_mv = mv > st_best
        delta = np.where(use_mv, mv, st_best) + _emit_all(lnc, i2v, mu, x[n])
        bp_mv[n] = use_mv
        bp_k[n] = np.where(use_mv, enter_k[:, None], K[:, None])
        bp_e[n] = np.where(use_mv, exit_arg[enter_k][:, None], st_arg)
    fin = delta + lex[None, :]
    flat = int(np.argmax(fin))
    bk, be = divmod(flat, 4)
    best = fin[bk, be]
    kpath = np.empty(N, dtype=np.int64)
    epath = np.empty(N, dtype=np.int64)
    starts = np.zeros(N, dtype=bool)
    starts[0] = True
    for n in range(N - 1, -1, -1):
        kpath[n] = bk
        epath[n] = be
        if n > 0:
            starts[n] = bp_mv[n, bk, be]
            bk, be = bp_k[n, bk, be], bp_e[n, bk, be]
    return kpath, epath, starts, best


def mgbs(x, lprior, lout, lnc, i2v, mu, lpi, lst, lex, k, W):
    N = x.shape[0]
    nk = lprior.shape[0]
    tail = 4 ** (k - 1)
    init = lprior[:, None] + lpi[None, :] + _emit_all(lnc, i2v, mu, x[0])
    score0 = _lse(init, axis=1)
    order = np.argsort(-score0, kind="mergesort")[: min(W, nk)]
    order = order[np.isfinite(score0[order])]
    kmers = order.astype(np.int64)
    mass = init[order]
    B = kmers.size
    parent_of = [-1] * B
    node_kmer = list(kmers)
    node = np.arange(B, dtype=np.int64)
    for n in range(1, N):
        B = kmers.size
        exits = _lse(mass + lex[None, :], axis=1)
        stay = _lse(mass[:, :, None] + lst[None, :, :], axis=1)
        knext = ((kmers % tail) * 4)[:, None] + np.arange(4)[None, :]  # (B, 4)
        lead = exits[:, None] + lout[kmers]  # (B, 4)
        move = lead[:, :, None] + lpi[None, None, :]  # (B, 4, f)
        slot = {int(nd): i for i, nd in enumerate(node)}
        for j in range(B):
            p = parent_of[int(node[j])]
            i = slot.get(p, -1) if p >= 0 else -1
            if i < 0:
                continue
            b = int(kmers[j]) & 3
            stay[j] = np.logaddexp(stay[j], move[i, b])
            move[i, b] = NEG_INF
        stay = stay + _emit_all(lnc[kmers], i2v[kmers], mu[kmers], x[n])
        move = move + _emit_all(lnc[knext], i2v[knext], mu[knext], x[n])
        cand = np.concatenate([stay, move.reshape(4 * B, 4)], axis=0)
        sc = _lse(cand, axis=1)
        order = np.argsort(-sc, kind="mergesort")[: min(W, cand.shape[0])]
        order = order[np.isfinite(sc[order])]
        new_k = np.empty(order.size, dtype=np.int64)
        new_node = np.empty(order.size, dtype=np.int64)
        for r, c in enumerate(order):
            if c < B:
                new_k[r] = kmers[c]
                new_node[r] = node[c]
            else:
                i, b = divmod(int(c) - B, 4)
                kn = int(knext[i, b])
                new_k[r] = kn
                new_node[r] = len(parent_of)
                parent_of.append(int(node[i]))
                node_kmer.append(kn)
        kmers, node, mass = new_k, new_node, cand[order]
    final = _lse(mass + lex[None, :], axis=1)
    return (
        np.asarray(parent_of, dtype=np.int64),
        np.asarray(node_kmer, dtype=np.int64),
        node,
        final,
    )


def nw_align(a, b, match, mismatch, gap):
    n = a.shape[0]
    m = b.shape[0]
    H = np.empty((n + 1, m + 1))
    H[0] = gap * np.arange(m + 1)
    H[:, 0] = gap * np.arange(n + 1)
    for i in range(1, n + 1):
        sub = np.where(b == a[i - 1], match, mismatch)
        t = np.maximum(H[i - 1, :-1] + sub, H[i - 1, 1:] + gap)
        # left moves: H[i, j] = max_{j' <= j} (t[j'] + (j - j') * gap), seeded by H[i, 0]
        t = np.concatenate([[H[i, 0]], t])
        idx = gap * np.arange(m + 1)
        H[i] = np.maximum.accumulate(t - idx) + idx
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            d = H[i - 1, j - 1] + (match if a[i - 1] == b[j - 1] else mismatch)
            if H[i, j] == d:
                ops.append(0)
                i -= 1
                j -= 1
                continue
        if i > 0 and H[i, j] == H[i - 1, j] + gap:
            ops.append(2)
            i -= 1
        else:
            ops.append(1)
            j -= 1
    return np.asarray(ops[::-1], dtype=np.int8)


def monotone_path(score):
    N, M = score.shape
    D = np.full((N, M), NEG_INF)
    moved = np.zeros((N, M), dtype=bool)
    D[0, 0] = score[0, 0]
    for n in range(1, N):
        lo, hi = _band(n, N, M)
        stay = D[n - 1, lo : hi + 1]
        mv = np.full(hi - lo + 1, NEG_INF)
        if lo > 0:
            mv[:] = D[n - 1, lo - 1 : hi]
        else:
            mv[1:] = D[n - 1, 0:hi]
        use = mv > stay
        D[n, lo : hi + 1] = np.where(use, mv, stay) + score[n, lo : hi + 1]
        moved[n, lo : hi + 1] = use
    path = np.empty(N, dtype=np.int64)
    m = M - 1
    for n in range(N - 1, -1, -1):
        path[n] = m
        if n > 0 and moved[n, m]:
            m -= 1
    return path
