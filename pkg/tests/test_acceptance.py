"""End-to-end acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line (also collected into the terminal
summary) and then asserts the criterion at its stated tolerance.
"""

import time

import numpy as np
import pytest
from scipy import stats as sps

from conftest import ACCEPTANCE_LINES
from helicase_hmm.clamped import clamped_forward
from helicase_hmm.decoder import mgbs_decode, score_identity
from helicase_hmm.model import N_EMIT
from helicase_hmm.signal import (
    boundary_error,
    fit_normalization,
    predicted_currents,
    resquiggle,
    true_starts,
)
from helicase_hmm.simulator import (
    SimConfig,
    duration_pmf,
    chi_square_gof,
    level_gap,
    read_rng,
    sample_read,
    simulate_dataset,
    synthetic_model,
)
from helicase_hmm.training import Floors, e_step, total_loglik, train
from helicase_hmm.verify import decoder_oracle_suite, forward_oracle_suite, posterior_suite


def report(num, name, ok, detail, seconds):
    line = f"{'PASS' if ok else 'FAIL'} {num}: {name} | {detail} | {seconds:.1f}s"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _jittered(truth, rng, var):
    return truth.replace(
        emission_mean=truth.emission_mean + rng.normal(0.0, 0.3, size=truth.emission_mean.shape),
        emission_var=np.full_like(truth.emission_var, var),
    )


def test_1_forward_oracle():
    res = forward_oracle_suite(500, seed=0, tol=1e-10)
    ok = res.passed and res.instances >= 500 and res.seconds < 60
    assert report(1, "clamped forward vs brute force", ok,
                  f"{res.instances - res.failures}/{res.instances} max rel err {res.max_error:.2e}",
                  res.seconds)


def test_2_posterior_normalization():
    res = posterior_suite(100, seed=1, tol=1e-8)
    ok = res.passed and res.seconds < 60
    assert report(2, "posterior normalization and flat evidence", ok,
                  f"{res.instances - res.failures}/{res.instances} max err {res.max_error:.2e}",
                  res.seconds)


@pytest.mark.slow
def test_3_em_monotone():
    t0 = time.perf_counter()
    truth = synthetic_model(2, 0.2, seed=4)
    worst = np.inf
    bad = []
    for seed in range(5):
        reads = simulate_dataset(truth, SimConfig(200, target_samples=256, seed=100 + seed))
        init = _jittered(truth, np.random.default_rng(seed), 0.1)
        model, rep = train(init, reads, 10, Floors(transition_pseudocount=0.0))
        ll = np.array(rep.logliks + [total_loglik(model, reads)])
        steps = np.diff(ll) + 1e-9 * np.abs(ll[:-1])
        worst = min(worst, float(steps.min()))
        if (steps < 0).any():
            bad.append(seed)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 300
    assert report(3, "EM log-likelihood non-decreasing", ok,
                  f"5 seeds x 10 epochs, min tolerant step {worst:.3g}, failing seeds {bad}", dt)


@pytest.mark.slow
def test_4_parameter_recovery():
    t0 = time.perf_counter()
    truth = synthetic_model(3, 0.1, seed=7, state_offsets=(0.0, 1.0, -1.0), back_offset=2.0)
    reads = simulate_dataset(truth, SimConfig(2000, target_samples=512, seed=11))
    init = _jittered(truth, np.random.default_rng(3), 0.25)
    model, _ = train(init, reads, 10)
    weight = e_step(model, reads).weight
    dt = time.perf_counter() - t0
    cells = weight >= 100
    dmu = np.abs(model.emission_mean - truth.emission_mean)[cells]
    dvar = np.abs(model.emission_var / truth.emission_var - 1.0)[cells]
    ok = dmu.max() <= 0.05 and dvar.max() <= 0.20 and dt < 1800
    assert report(4, "parameter recovery", ok,
                  f"{cells.sum()}/{cells.size} cells, max |dmu| {dmu.max():.4f} (<=0.05), "
                  f"max rel dvar {dvar.max():.3f} (<=0.20)", dt)


def test_5_decoder_oracles():
    mres, vres = decoder_oracle_suite(200, 100, seed=2, max_n=6)
    dt = mres.seconds + vres.seconds
    ok = mres.passed and vres.passed and dt < 120
    assert report(5, "decoder oracle agreement", ok,
                  f"MGBS {mres.instances - mres.failures}/200, "
                  f"Viterbi {vres.instances - vres.failures}/100", dt)


@pytest.mark.slow
def test_6_end_to_end_basecalling():
    t0 = time.perf_counter()
    sigma = 0.5 * level_gap(synthetic_model(3, 1.0, seed=0))
    model = synthetic_model(3, sigma, seed=0)
    reads = simulate_dataset(model, SimConfig(500, target_samples=1024, seed=99))
    ident = {}
    for W in (512, 8, 1):
        ident[W] = np.array([
            score_identity(mgbs_decode(model, r.signal, beam_width=W).bases, r.truth_bases).identity
            for r in reads
        ])
    dt = time.perf_counter() - t0
    # one-sided paired tests: the wider beam is not worse in expectation
    p1 = sps.wilcoxon(ident[512], ident[8], alternative="less", zero_method="zsplit").pvalue
    p2 = sps.wilcoxon(ident[8], ident[1], alternative="less", zero_method="zsplit").pvalue
    means = {W: float(v.mean()) for W, v in ident.items()}
    ok = (means[512] >= 0.90 and means[512] >= means[8] >= means[1]
          and p1 > 0.01 and p2 > 0.01 and dt < 900)
    assert report(6, "end-to-end basecalling", ok,
                  f"sigma {sigma:.4f}, identity W=512 {means[512]:.4f} W=8 {means[8]:.4f} "
                  f"W=1 {means[1]:.4f}", dt)


def test_7_duration_law():
    t0 = time.perf_counter()
    model = synthetic_model(2, 0.2, seed=0)
    reads = simulate_dataset(model, SimConfig(1000, target_kmers=100, seed=5))
    lengths = np.concatenate([r.segment_lengths for r in reads])
    assert lengths.size == 100_000
    stat, dof, p = chi_square_gof(lengths, duration_pmf(model.inner_prior, model.inner_transition, 400))
    dt = time.perf_counter() - t0
    ok = p > 0.01 and dt < 60
    assert report(7, "duration law chi-square", ok, f"chi2 {stat:.1f} dof {dof} p {p:.3f}", dt)


@pytest.mark.slow
def test_8_resquiggle_fidelity():
    t0 = time.perf_counter()
    errors, exact = [], None
    for sigma in (0.5, 0.2, 0.1, 0.05, 0.01):
        model = synthetic_model(3, sigma, seed=5, level_range=25.2)
        reads = simulate_dataset(model, SimConfig(200, target_kmers=120, seed=21))
        diffs = []
        for r in reads:
            est = resquiggle(model, r.truth_kmers, r.signal).starts
            diffs.append(est - true_starts(r.segment_lengths))
        d = np.concatenate(diffs)
        errors.append(float(np.abs(d).mean()))
        exact = float(np.mean(d == 0))
    dt = time.perf_counter() - t0
    ok = bool(np.all(np.diff(errors) < 0)) and exact >= 0.99 and dt < 600
    assert report(8, "re-squiggle fidelity", ok,
                  "boundary error " + " > ".join(f"{e:.3f}" for e in errors)
                  + f", exact at 0.01: {exact:.4f}", dt)


def test_9_normalization():
    t0 = time.perf_counter()
    model = synthetic_model(3, 0.1, seed=1)
    read = sample_read(model, read_rng(0, 0), target_samples=4096)
    pred = predicted_currents(model.emission_mean[:, 0], np.repeat(read.truth_kmers, read.segment_lengths))
    exact = fit_normalization(1.7 * pred - 0.4, pred)
    ok_exact = (abs(exact.scale - 1.7) <= 1e-12 and abs(exact.shift + 0.4) <= 1e-12
                and exact.fit_residual <= 1e-12)
    rng = np.random.default_rng(8)
    within = 0
    trials = 20
    for _ in range(trials):
        raw = 1.7 * pred - 0.4 + rng.normal(0.0, 0.05, size=pred.size)
        fit = fit_normalization(raw, pred)
        # textbook OLS standard errors
        n = pred.size
        s2 = np.sum((raw - fit.scale * pred - fit.shift) ** 2) / (n - 2)
        sxx = np.sum((pred - pred.mean()) ** 2)
        se_scale = np.sqrt(s2 / sxx)
        se_shift = np.sqrt(s2 * (1.0 / n + pred.mean() ** 2 / sxx))
        within += abs(fit.scale - 1.7) <= 3 * se_scale and abs(fit.shift + 0.4) <= 3 * se_shift
    dt = time.perf_counter() - t0
    # joint 3-SE coverage is ~99.5% per trial, so allow one miss in 20
    ok = ok_exact and within >= trials - 1 and dt < 10
    assert report(9, "normalization exactness", ok,
                  f"noiseless scale err {abs(exact.scale - 1.7):.1e} shift err {abs(exact.shift + 0.4):.1e} "
                  f"residual {exact.fit_residual:.1e}; noisy within 3 SE {within}/{trials}", dt)


def _interleaved_best(fns, repeat=7):
    """Best-of-``repeat`` wall time per function, cycling through all of them each round."""
    best = np.full(len(fns), np.inf)
    for _ in range(repeat):
        for i, fn in enumerate(fns):
            t = time.perf_counter()
            fn()
            best[i] = min(best[i], time.perf_counter() - t)
    return best


def _r2(n, t):
    slope, icpt = np.polyfit(n, t, 1)
    resid = t - (slope * n + icpt)
    return 1.0 - resid @ resid / np.sum((t - t.mean()) ** 2)


@pytest.mark.slow
def test_10_linear_scaling(capsys):
    t0 = time.perf_counter()
    model = synthetic_model(3, 0.05, seed=0)
    sizes = np.array([1000, 2000, 4000, 8000, 16000])
    long_read = sample_read(model, read_rng(3, 0), target_samples=int(sizes[-1]))
    path = long_read.truth_kmers[:100]
    W = 64
    mgbs_decode(model, long_read.signal[:200], beam_width=W)
    clamped_forward(model, path, long_read.signal[:200])
    xs = [long_read.signal[:n] for n in sizes]
    tf = _interleaved_best([lambda x=x: clamped_forward(model, path, x) for x in xs])
    td = _interleaved_best([lambda x=x: mgbs_decode(model, x, beam_width=W) for x in xs])
    calls = [mgbs_decode(model, x, beam_width=W).bases for x in xs]
    nb = [len(c) for c in calls]
    r2f, r2d = _r2(sizes, tf), _r2(sizes, td)
    dt = time.perf_counter() - t0
    with capsys.disabled():
        print("\nmethod      W    N      identity   bases/s     (single CPU, informational)")
        for n, t, b, c in zip(sizes, td, nb, calls):
            ident = score_identity(c, long_read.truth_bases[: b + 20]).identity
            print(f"MGBS        {W:<4} {n:<6} {ident:<10.4f} {b / t:<10.0f}")
    ok = r2f >= 0.98 and r2d >= 0.98 and dt < 600
    assert report(10, "linear scaling in N", ok,
                  f"R^2 clamped_forward (M=100) {r2f:.4f}, MGBS (W={W}) {r2d:.4f}; "
                  f"MGBS {nb[-1] / td[-1]:.0f} bases/s at N=16000", dt)
