"""Numba kernels for the hot loops.

Signatures mirror :mod:`helicase_hmm.kernels_np` exactly; the two modules
are checked against each other in the test suite.  All kernels take
pre-gathered per-position tables (``lnc`` log normaliser, ``i2v`` = 1/(2 var),
``mu``) so they never touch the model object.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, inline="always")
def _lse2(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, inline="always")
def _lse5(t):
    """log-sum-exp of a 5-vector with one log and only the finite exps."""
    mx = t[0]
    for i in range(1, 5):
        if t[i] > mx:
            mx = t[i]
    if mx == NEG_INF:
        return NEG_INF
    acc = 0.0
    for i in range(5):
        if t[i] > NEG_INF:
            acc += math.exp(t[i] - mx)
    return mx + math.log(acc)


@njit(cache=True, inline="always")
def _emit(lnc, i2v, mu, m, e, x):
    d = x - mu[m, e]
    return lnc[m, e] - d * d * i2v[m, e]


@njit(cache=True, nogil=True)
def clamped_forward(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    alpha = np.full((N, M, 4), NEG_INF)
    t = np.empty(5)
    exit_prev = np.full(M, NEG_INF)
    exit_cur = np.full(M, NEG_INF)
    for e in range(4):
        alpha[0, 0, e] = ltp[0] + lpi[e] + _emit(lnc, i2v, mu, 0, e, x[0])
    acc = NEG_INF
    for e in range(4):
        acc = _lse2(acc, alpha[0, 0, e] + lex[e])
    exit_prev[0] = acc
    slack = N - M
    for n in range(1, N):
        lo = max(0, n - slack)
        hi = min(n, M - 1)
        xn = x[n]
        for m in range(lo, hi + 1):
            ent = exit_prev[m - 1] + ltp[m] if m > 0 else NEG_INF
            for e in range(4):
                for f in range(4):
                    t[f] = alpha[n - 1, m, f] + lst[f, e]
                t[4] = ent + lpi[e]
                alpha[n, m, e] = _lse5(t) + _emit(lnc, i2v, mu, m, e, xn)
            acc = NEG_INF
            for e in range(4):
                acc = _lse2(acc, alpha[n, m, e] + lex[e])
            exit_cur[m] = acc
        for m in range(M):
            exit_prev[m] = exit_cur[m] if lo <= m <= hi else NEG_INF
            exit_cur[m] = NEG_INF
    return alpha, exit_prev[M - 1]


@njit(cache=True, nogil=True)
def clamped_loglik(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    prev = np.full((M, 4), NEG_INF)
    cur = np.full((M, 4), NEG_INF)
    t = np.empty(5)
    exit_prev = np.full(M, NEG_INF)
    exit_cur = np.full(M, NEG_INF)
    for e in range(4):
        prev[0, e] = ltp[0] + lpi[e] + _emit(lnc, i2v, mu, 0, e, x[0])
    acc = NEG_INF
    for e in range(4):
        acc = _lse2(acc, prev[0, e] + lex[e])
    exit_prev[0] = acc
    slack = N - M
    for n in range(1, N):
        lo = max(0, n - slack)
        hi = min(n, M - 1)
        xn = x[n]
        for m in range(lo, hi + 1):
            ent = exit_prev[m - 1] + ltp[m] if m > 0 else NEG_INF
            for e in range(4):
                for f in range(4):
                    t[f] = prev[m, f] + lst[f, e]
                t[4] = ent + lpi[e]
                cur[m, e] = _lse5(t) + _emit(lnc, i2v, mu, m, e, xn)
            acc = NEG_INF
            for e in range(4):
                acc = _lse2(acc, cur[m, e] + lex[e])
            exit_cur[m] = acc
        for m in range(M):
            inside = lo <= m <= hi
            exit_prev[m] = exit_cur[m] if inside else NEG_INF
            exit_cur[m] = NEG_INF
            for e in range(4):
                prev[m, e] = cur[m, e] if inside else NEG_INF
                cur[m, e] = NEG_INF
    return exit_prev[M - 1]


@njit(cache=True, nogil=True)
def clamped_backward(x, ltp, lnc, i2v, mu, lpi, lst, lex):
    N = x.shape[0]
    M = ltp.shape[0]
    beta = np.full((N, M, 4), NEG_INF)
    t = np.empty(5)
    eb = np.empty(4)
    for e in range(4):
        beta[N - 1, M - 1, e] = lex[e]
    slack = N - M
    enter = np.full(M, NEG_INF)
    for n in range(N - 2, -1, -1):
        lo = max(0, n - slack)
        hi = min(n, M - 1)
        xn1 = x[n + 1]
        # mass of starting k-mer m at time n+1, for m = lo+1 .. hi+1
        for m in range(lo + 1, min(hi + 1, M - 1) + 1):
            for f in range(4):
                t[f] = lpi[f] + _emit(lnc, i2v, mu, m, f, xn1) + beta[n + 1, m, f]
            t[4] = NEG_INF
            enter[m] = ltp[m] + _lse5(t)
        for m in range(lo, hi + 1):
            for f in range(4):
                eb[f] = _emit(lnc, i2v, mu, m, f, xn1) + beta[n + 1, m, f]
            ent = enter[m + 1] if m < M - 1 else NEG_INF
            for e in range(4):
                for f in range(4):
                    t[f] = lst[e, f] + eb[f]
                t[4] = lex[e] + ent
                beta[n, m, e] = _lse5(t)
    return beta


@njit(cache=True, nogil=True)
def accumulate(x, alpha, beta, logz, ltp, lnc, i2v, mu, lpi, lst, lex):
    """Posterior-weighted moments per (position, state) and expected inner transitions.

    ``xi[e, 0]`` counts exits to End, ``xi[e, 1 + f]`` counts e -> f.
    """
    N = x.shape[0]
    M = ltp.shape[0]
    w = np.zeros((M, 4))
    s = np.zeros((M, 4))
    q = np.zeros((M, 4))
    xi = np.zeros((4, 5))
    t = np.empty(5)
    eb = np.empty(4)
    slack = N - M
    for n in range(N):
        lo = max(0, n - slack)
        hi = min(n, M - 1)
        xn = x[n]
        for m in range(lo, hi + 1):
            for e in range(4):
                a = alpha[n, m, e]
                if a == NEG_INF:
                    continue
                g = math.exp(a + beta[n, m, e] - logz)
                w[m, e] += g
                s[m, e] += g * xn
                q[m, e] += g * xn * xn
            if n == N - 1:
                if m == M - 1:
                    for e in range(4):
                        xi[e, 0] += math.exp(alpha[n, m, e] + lex[e] - logz)
                continue
            xn1 = x[n + 1]
            nxt = NEG_INF
            if m < M - 1:
                for f in range(4):
                    t[f] = lpi[f] + _emit(lnc, i2v, mu, m + 1, f, xn1) + beta[n + 1, m + 1, f]
                t[4] = NEG_INF
                nxt = ltp[m + 1] + _lse5(t)
            for f in range(4):
                eb[f] = _emit(lnc, i2v, mu, m, f, xn1) + beta[n + 1, m, f] - logz
            for e in range(4):
                a = alpha[n, m, e]
                if a == NEG_INF:
                    continue
                for f in range(4):
                    v = a + lst[e, f] + eb[f]
                    if v > NEG_INF:
                        xi[e, 1 + f] += math.exp(v)
                if nxt > NEG_INF:
                    xi[e, 0] += math.exp(a + lex[e] + nxt - logz)
    return w, s, q, xi


@njit(cache=True, nogil=True)
def viterbi_joint(x, lprior, lout, lnc, i2v, mu, lpi, lst, lex, k):
    """Exact joint Viterbi over (k-mer, inner state); returns per-sample path."""
    N = x.shape[0]
    nk = lprior.shape[0]
    step = 4 ** (k - 1)
    delta = np.empty((nk, 4))
    new = np.empty((nk, 4))
    bp_k = np.empty((N, nk, 4), dtype=np.int64)
    bp_e = np.empty((N, nk, 4), dtype=np.int64)
    bp_mv = np.zeros((N, nk, 4), dtype=np.bool_)
    exit_best = np.empty(nk)
    exit_arg = np.empty(nk, dtype=np.int64)
    for K in range(nk):
        for e in range(4):
            delta[K, e] = lprior[K] + lpi[e] + _emit(lnc, i2v, mu, K, e, x[0])
            bp_k[0, K, e] = -1
            bp_e[0, K, e] = -1
    for n in range(1, N):
        for K in range(nk):
            best = NEG_INF
            arg = 0
            for e in range(4):
                v = delta[K, e] + lex[e]
                if v > best:
                    best = v
                    arg = e
            exit_best[K] = best
            exit_arg[K] = arg
        xn = x[n]
        for K in range(nk):
            head = K >> 2
            b = K & 3
            enter = NEG_INF
            enter_k = head
            for j in range(4):
                P = head + j * step
                v = exit_best[P] + lout[P, b]
                if v > enter:
                    enter = v
                    enter_k = P
            for f in range(4):
                best = NEG_INF
                arg = 0
                for e in range(4):
                    v = delta[K, e] + lst[e, f]
                    if v > best:
                        best = v
                        arg = e
                mv = enter + lpi[f]
                if mv > best:
                    new[K, f] = mv + _emit(lnc, i2v, mu, K, f, xn)
                    bp_k[n, K, f] = enter_k
                    bp_e[n, K, f] = exit_arg[enter_k]
                    bp_mv[n, K, f] = True
                else:
                    new[K, f] = best + _emit(lnc, i2v, mu, K, f, xn)
                    bp_k[n, K, f] = K
                    bp_e[n, K, f] = arg
        for K in range(nk):
            for e in range(4):
                delta[K, e] = new[K, e]
    best = NEG_INF
    bk = 0
    be = 0
    for K in range(nk):
        for e in range(4):
            v = delta[K, e] + lex[e]
            if v > best:
                best = v
                bk = K
                be = e
    kpath = np.empty(N, dtype=np.int64)
    epath = np.empty(N, dtype=np.int64)
    starts = np.zeros(N, dtype=np.bool_)
    starts[0] = True
    K = bk
    e = be
    for n in range(N - 1, -1, -1):
        kpath[n] = K
        epath[n] = e
        if n > 0:
            starts[n] = bp_mv[n, K, e]
            pk = bp_k[n, K, e]
            pe = bp_e[n, K, e]
            K = pk
            e = pe
    return kpath, epath, starts, best


@njit(cache=True, nogil=True)
def _expand(x_n, kmers, mass, node, parent_of, slot_of_node, lout, lnc, i2v, mu, lpi, lst, lex, tail):
    """One MGBS step: candidate stay/move masses, with moves merged into stays.

    Returns candidate arrays laid out as B stay rows followed by 4*B move
    rows (slot-major, base A..T); merged or dead moves carry -inf.
    """
    B = kmers.shape[0]
    cand = np.full((5 * B, 4), NEG_INF)
    exits = np.empty(B)
    for i in range(B):
        acc = NEG_INF
        for e in range(4):
            acc = _lse2(acc, mass[i, e] + lex[e])
        exits[i] = acc
    for i in range(B):
        K = kmers[i]
        for f in range(4):
            v = NEG_INF
            for e in range(4):
                v = _lse2(v, mass[i, e] + lst[e, f])
            cand[i, f] = v
    for i in range(B):
        K = kmers[i]
        base = (K % tail) * 4
        for b in range(4):
            Kn = base + b
            row = B + 4 * i + b
            lead = exits[i] + lout[K, b]
            for f in range(4):
                cand[row, f] = lead + lpi[f]
    # a move from slot i by base b lands on the node of slot j when j's parent is i
    for j in range(B):
        p = parent_of[node[j]]
        if p < 0:
            continue
        i = slot_of_node[p]
        if i < 0:
            continue
        row = B + 4 * i + (kmers[j] & 3)
        for f in range(4):
            cand[j, f] = _lse2(cand[j, f], cand[row, f])
            cand[row, f] = NEG_INF
    # emissions
    for i in range(B):
        K = kmers[i]
        for f in range(4):
            if cand[i, f] > NEG_INF:
                d = x_n - mu[K, f]
                cand[i, f] += lnc[K, f] - d * d * i2v[K, f]
        base = (K % tail) * 4
        for b in range(4):
            Kn = base + b
            row = B + 4 * i + b
            for f in range(4):
                if cand[row, f] > NEG_INF:
                    d = x_n - mu[Kn, f]
                    cand[row, f] += lnc[Kn, f] - d * d * i2v[Kn, f]
    return cand


@njit(cache=True, nogil=True)
def mgbs(x, lprior, lout, lnc, i2v, mu, lpi, lst, lex, k, W):
    N = x.shape[0]
    nk = lprior.shape[0]
    tail = 4 ** (k - 1)
    # initial beam over every k-mer
    init = np.empty((nk, 4))
    score0 = np.empty(nk)
    for K in range(nk):
        acc = NEG_INF
        for e in range(4):
            d = x[0] - mu[K, e]
            init[K, e] = lprior[K] + lpi[e] + lnc[K, e] - d * d * i2v[K, e]
            acc = _lse2(acc, init[K, e])
        score0[K] = acc
    order = np.argsort(-score0, kind="mergesort")
    B = 0
    for r in range(min(W, nk)):
        if score0[order[r]] > NEG_INF:
            B += 1
    cap = B + (N - 1) * W + 1
    parent_of = np.full(cap, -1, dtype=np.int64)
    node_kmer = np.empty(cap, dtype=np.int64)
    slot_of_node = np.full(cap, -1, dtype=np.int64)
    n_nodes = 0
    kmers = np.empty(B, dtype=np.int64)
    node = np.empty(B, dtype=np.int64)
    mass = np.empty((B, 4))
    for r in range(B):
        K = order[r]
        kmers[r] = K
        node[r] = n_nodes
        node_kmer[n_nodes] = K
        n_nodes += 1
        for e in range(4):
            mass[r, e] = init[K, e]
    for n in range(1, N):
        for i in range(B):
            slot_of_node[node[i]] = i
        cand = _expand(x[n], kmers, mass, node, parent_of, slot_of_node,
                       lout, lnc, i2v, mu, lpi, lst, lex, tail)
        for i in range(B):
            slot_of_node[node[i]] = -1
        C = cand.shape[0]
        sc = np.empty(C)
        for c in range(C):
            acc = NEG_INF
            for f in range(4):
                acc = _lse2(acc, cand[c, f])
            sc[c] = acc
        order = np.argsort(-sc, kind="mergesort")
        nb = 0
        for r in range(min(W, C)):
            if sc[order[r]] > NEG_INF:
                nb += 1
        new_k = np.empty(nb, dtype=np.int64)
        new_node = np.empty(nb, dtype=np.int64)
        new_mass = np.empty((nb, 4))
        for r in range(nb):
            c = order[r]
            if c < B:
                new_k[r] = kmers[c]
                new_node[r] = node[c]
            else:
                i = (c - B) // 4
                b = (c - B) % 4
                Kn = (kmers[i] % tail) * 4 + b
                new_k[r] = Kn
                new_node[r] = n_nodes
                parent_of[n_nodes] = node[i]
                node_kmer[n_nodes] = Kn
                n_nodes += 1
            for f in range(4):
                new_mass[r, f] = cand[c, f]
        B = nb
        kmers = new_k
        node = new_node
        mass = new_mass
    final = np.empty(B)
    for i in range(B):
        acc = NEG_INF
        for e in range(4):
            acc = _lse2(acc, mass[i, e] + lex[e])
        final[i] = acc
    return parent_of[:n_nodes].copy(), node_kmer[:n_nodes].copy(), node, final


@njit(cache=True, nogil=True)
def nw_align(a, b, match, mismatch, gap):
    """Global alignment; returns op codes 0=match/mismatch, 1=insertion (b only), 2=deletion (a only).

    ``a`` is the truth, ``b`` the calls.  Ties prefer diagonal, then deletion.
    """
    n = a.shape[0]
    m = b.shape[0]
    H = np.empty((n + 1, m + 1))
    for i in range(n + 1):
        H[i, 0] = i * gap
    for j in range(m + 1):
        H[0, j] = j * gap
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            d = H[i - 1, j - 1] + (match if ai == b[j - 1] else mismatch)
            u = H[i - 1, j] + gap
            l = H[i, j - 1] + gap
            best = d
            if u > best:
                best = u
            if l > best:
                best = l
            H[i, j] = best
    ops = np.empty(n + m, dtype=np.int8)
    t = 0
    i = n
    j = m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            d = H[i - 1, j - 1] + (match if a[i - 1] == b[j - 1] else mismatch)
            if H[i, j] == d:
                ops[t] = 0
                i -= 1
                j -= 1
                t += 1
                continue
        if i > 0 and H[i, j] == H[i - 1, j] + gap:
            ops[t] = 2
            i -= 1
        else:
            ops[t] = 1
            j -= 1
        t += 1
    return ops[:t][::-1].copy()


@njit(cache=True, nogil=True)
def monotone_path(score):
    """Best path m_0=0 .. m_{N-1}=M-1 with steps in {0, 1}, maximising the summed score."""
    N, M = score.shape
    D = np.full((N, M), NEG_INF)
    moved = np.zeros((N, M), dtype=np.bool_)
    D[0, 0] = score[0, 0]
    slack = N - M
    for n in range(1, N):
        lo = max(0, n - slack)
        hi = min(n, M - 1)
        for m in range(lo, hi + 1):
            stay = D[n - 1, m]
            mv = D[n - 1, m - 1] if m > 0 else NEG_INF
            if mv > stay:
                D[n, m] = mv + score[n, m]
                moved[n, m] = True
            else:
                D[n, m] = stay + score[n, m]
    path = np.empty(N, dtype=np.int64)
    m = M - 1
    for n in range(N - 1, -1, -1):
        path[n] = m
        if n > 0 and moved[n, m]:
            m -= 1
    return path
