"""Small-k self-checks against exhaustive oracles.

Each suite draws random models and signals, compares the production
algorithm with an independent enumeration and reports a :class:`SuiteResult`.
The same suites back ``hhmm verify`` and the acceptance tests.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from helicase_hmm.clamped import brute_force_clamped, clamped_forward, forward_backward
from helicase_hmm.decoder import (
    exact_viterbi_joint,
    exhaustive_joint_max,
    exhaustive_marginal_map,
    mgbs_decode,
)
from helicase_hmm.model import N_EMIT, HelicaseModel, KmerConfig, default_inner_params


@dataclass
class SuiteResult:
    name: str
    instances: int
    failures: int
    max_error: float = 0.0
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.instances - self.failures}/{self.instances} "
                f"max_err={self.max_error:.3g} time={self.seconds:.1f}s")


def random_model(k: int, rng: np.random.Generator, sparse_outer: bool = False) -> HelicaseModel:
    """Random valid model keeping the default inner transition structure."""
    cfg = KmerConfig(k)
    nk = cfg.num_kmers
    prior = rng.dirichlet(np.ones(nk))
    trans = rng.dirichlet(np.ones(4), size=nk)
    if sparse_outer:
        # forbid one successor per k-mer so infeasible paths occur
        drop = rng.integers(0, 4, size=nk)
        trans[np.arange(nk), drop] = 0.0
        trans /= trans.sum(axis=1, keepdims=True)
    base = default_inner_params()
    mask = base.transition > 0
    inner = np.where(mask, rng.uniform(0.2, 1.0, size=mask.shape), 0.0)
    inner /= inner.sum(axis=1, keepdims=True)
    pi = rng.dirichlet(np.ones(N_EMIT))
    return HelicaseModel(
        config=cfg,
        outer_prior=prior,
        outer_transition=trans,
        inner_prior=pi,
        inner_transition=inner,
        emission_mean=rng.normal(0.0, 1.0, size=(nk, N_EMIT)),
        emission_var=rng.uniform(0.2, 1.5, size=(nk, N_EMIT)),
    )


def random_path(model: HelicaseModel, M: int, rng: np.random.Generator) -> np.ndarray:
    tail = 4 ** (model.k - 1)
    path = [int(rng.integers(model.num_kmers))]
    for _ in range(M - 1):
        path.append((path[-1] % tail) * 4 + int(rng.integers(4)))
    return np.asarray(path, dtype=np.int64)


def _relerr(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(b), 1e-300)


def forward_oracle_suite(instances: int = 500, seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    """clamped forward evidence against brute-force enumeration (k in 1..3, M <= 5, N <= 10)."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("forward vs brute force", instances, 0)
    t0 = time.perf_counter()
    for i in range(instances):
        k = int(rng.integers(1, 4))
        model = random_model(k, rng)
        M = int(rng.integers(1, 6))
        N = int(rng.integers(M, 11))
        path = random_path(model, M, rng)
        x = rng.normal(0.0, 1.2, size=N)
        got = clamped_forward(model, path, x).log_evidence
        ref = brute_force_clamped(model, path, x)
        err = _relerr(got, ref)
        res.max_error = max(res.max_error, err)
        if not err <= tol:
            res.failures += 1
            res.notes.append(f"instance {i}: {got!r} vs {ref!r}")
    res.seconds = time.perf_counter() - t0
    return res


def posterior_suite(instances: int = 100, seed: int = 1, tol: float = 1e-8) -> SuiteResult:
    """gamma columns sum to one and logsumexp(alpha + beta) is the same at every n."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("posterior normalization / flat evidence", instances, 0)
    t0 = time.perf_counter()
    for i in range(instances):
        k = int(rng.integers(1, 4))
        model = random_model(k, rng)
        M = int(rng.integers(1, 40))
        N = int(rng.integers(M, 4 * M + 20))
        path = random_path(model, M, rng)
        x = rng.normal(0.0, 1.2, size=N)
        alpha, beta, logz = forward_backward(model, path, x)
        s = alpha + beta
        peak = s.max(axis=(1, 2))
        lse = peak + np.log(np.exp(s - peak[:, None, None]).sum(axis=(1, 2)))
        col = np.exp(lse - logz)
        err = max(float(np.max(np.abs(col - 1.0))), float(np.max(np.abs(lse - logz))))
        res.max_error = max(res.max_error, err)
        if not err <= tol:
            res.failures += 1
            res.notes.append(f"instance {i}: err {err:.3g}")
    res.seconds = time.perf_counter() - t0
    return res


def decoder_oracle_suite(
    map_instances: int = 200, viterbi_instances: int = 100, seed: int = 2, max_n: int = 6
) -> tuple[SuiteResult, SuiteResult]:
    """At k=1: MGBS with a saturating beam equals exhaustive marginal MAP; Viterbi equals joint max."""
    rng = np.random.default_rng(seed)
    mres = SuiteResult("MGBS vs exhaustive marginal MAP", map_instances, 0)
    t0 = time.perf_counter()
    for i in range(map_instances):
        model = random_model(1, rng, sparse_outer=bool(i % 2))
        N = int(rng.integers(1, max_n + 1))
        x = rng.normal(0.0, 1.2, size=N)
        ref_bases, ref_score = exhaustive_marginal_map(model, x)
        got = mgbs_decode(model, x, beam_width=4 ** (N + 1))
        err = _relerr(got.score, ref_score)
        mres.max_error = max(mres.max_error, err)
        if got.bases != ref_bases or err > 1e-9:
            mres.failures += 1
            mres.notes.append(f"instance {i}: {got.bases} ({got.score!r}) vs {ref_bases} ({ref_score!r})")
    mres.seconds = time.perf_counter() - t0

    vres = SuiteResult("Viterbi vs exhaustive joint max", viterbi_instances, 0)
    t0 = time.perf_counter()
    for i in range(viterbi_instances):
        model = random_model(1, rng, sparse_outer=bool(i % 2))
        N = int(rng.integers(1, max_n + 1))
        x = rng.normal(0.0, 1.2, size=N)
        ref_score, ref_k, ref_h, ref_l = exhaustive_joint_max(model, x)
        got = exact_viterbi_joint(model, x)
        err = _relerr(got.score, ref_score)
        vres.max_error = max(vres.max_error, err)
        if err > 1e-9:
            vres.failures += 1
            vres.notes.append(f"instance {i}: {got.score!r} vs {ref_score!r}")
    vres.seconds = time.perf_counter() - t0
    return mres, vres


def run_all(seed: int = 0, quick: bool = False) -> list[SuiteResult]:
    scale = 5 if quick else 1
    out = [
        forward_oracle_suite(500 // scale, seed=seed),
        posterior_suite(100 // scale, seed=seed + 1),
    ]
    out.extend(decoder_oracle_suite(200 // scale, 100 // scale, seed=seed + 2))
    return out
