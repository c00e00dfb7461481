"""Command-line interface: ``hhmm <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from helicase_hmm import _accel
from helicase_hmm.decoder import mgbs_decode, score_identity
from helicase_hmm.errors import HHMMError
from helicase_hmm.io import (
    load_dataset,
    load_model,
    read_fasta,
    save_dataset,
    save_model,
    write_fasta,
)
from helicase_hmm.simulator import SimConfig, simulate_dataset, synthetic_model
from helicase_hmm.training import Floors, train

log = logging.getLogger("helicase_hmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
LARGE_K = 8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("HHMM_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _pmap(fn, items, workers):
    """Ordered map over reads; kernels release the GIL, so threads scale."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _by_id(reads):
    return sorted(reads, key=lambda r: r.read_id)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.model:
        model = load_model(args.model)
    else:
        if args.k is None or args.sigma is None:
            raise UsageError("simulate: give --model or both --k and --sigma")
        if args.k > LARGE_K:
            log.warning("k=%d: emission table alone is %.0f MB", args.k, 4**args.k * 4 * 8 * 2 / 1e6)
        model = synthetic_model(args.k, args.sigma, seed=args.seed)
    if (args.chunk_len is None) == (args.kmers is None):
        raise UsageError("simulate: give exactly one of --chunk-len / --kmers")
    cfg = SimConfig(
        num_reads=args.reads,
        target_samples=args.chunk_len,
        target_kmers=args.kmers,
        seed=args.seed,
        noiseless=args.noiseless,
    )
    reads = simulate_dataset(model, cfg)
    save_dataset(reads, args.out)
    if args.save_model:
        save_model(model, args.save_model)
    print(f"wrote {len(reads)} reads to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    model = load_model(args.model_in)
    reads = _by_id(load_dataset(args.data, model.config))
    if args.jitter:
        rng = np.random.default_rng(args.seed)
        noise = rng.normal(0.0, args.jitter, size=model.emission_mean.shape)
        model = model.replace(emission_mean=model.emission_mean + noise)
    floors = Floors(transition_pseudocount=args.pseudocount)
    model, report = train(
        model,
        reads,
        args.epochs,
        floors,
        update_transitions=not args.emissions_only,
        workers=_threads(args),
    )
    save_model(model, args.out)
    if args.report:
        Path(args.report).write_text(report.to_tsv())
    for rec in report.epochs:
        print(f"epoch {rec.epoch}\tloglik {rec.loglik:.6f}")
    return EXIT_OK


def cmd_resquiggle(args) -> int:
    from helicase_hmm.plots import resquiggle_svg
    from helicase_hmm.signal import resquiggle

    model = load_model(args.model)
    reads = _by_id(load_dataset(args.data, model.config))
    for r in reads:
        if r.truth_kmers is None:
            raise HHMMError(f"read {r.read_id} has no reference sequence to align to")
    results = _pmap(lambda r: resquiggle(model, r.truth_kmers, r.signal), reads, _threads(args))
    svg_dir = Path(args.svg_dir) if args.svg_dir else None
    if svg_dir:
        svg_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_tsv, "w") as fh:
        fh.write("read_id\tsample\tkmer_index\tkmer_string\tinner_state\tposterior\tback_flag\n")
        for r, res in zip(reads, results):
            for row in res.to_rows(model):
                fh.write(f"{r.read_id}\t{row[0]}\t{row[1]}\t{row[2]}\t{row[3]}\t{row[4]:.6g}\t{row[5]}\n")
            if svg_dir:
                resquiggle_svg(model, r.signal, res, svg_dir / f"{r.read_id}.svg")
    print(f"re-squiggled {len(reads)} reads")
    return EXIT_OK


def cmd_basecall(args) -> int:
    model = load_model(args.model)
    reads = _by_id(load_dataset(args.data))
    W = args.beam_width
    t0 = time.perf_counter()
    calls = _pmap(lambda r: mgbs_decode(model, r.signal, beam_width=W), reads, _threads(args))
    wall = time.perf_counter() - t0
    write_fasta(
        ((r.read_id, f"score={c.score:.6f} W={W}", c.bases) for r, c in zip(reads, calls)),
        args.out,
    )
    n_bases = sum(len(c.bases) for c in calls)
    rate = n_bases / wall if wall > 0 else float("inf")
    print(f"basecalled {len(reads)} reads, {n_bases} bases in {wall:.2f}s "
          f"({rate:.0f} bases/s, backend {_accel.backend_name()})")
    return EXIT_OK


def _load_truth(path) -> dict[str, str]:
    head = Path(path).read_bytes()[:1]
    if head == b">":
        return read_fasta(path)
    return {r.read_id: r.truth_bases for r in load_dataset(path) if r.truth_bases}


def cmd_score(args) -> int:
    calls = read_fasta(args.calls)
    truth = _load_truth(args.truth)
    shared = sorted(set(calls) & set(truth))
    if not shared:
        raise HHMMError("no read ids in common between calls and truth")
    rows = []
    for rid in shared:
        s = score_identity(calls[rid], truth[rid])
        rows.append((rid, s.identity, s.insert, s.delete, s.substitute))
    mean = np.mean([r[1:] for r in rows], axis=0)
    lines = ["read_id\tidentity\tinsert\tdelete\tsubstitute"]
    lines += [f"{rid}\t{a:.4f}\t{b:.4f}\t{c:.4f}\t{d:.4f}" for rid, a, b, c, d in rows]
    lines.append("mean\t" + "\t".join(f"{v:.4f}" for v in mean))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"identity {mean[0]:.4f}  insert {mean[1]:.4f}  delete {mean[2]:.4f}  "
          f"substitute {mean[3]:.4f}  ({len(rows)} reads)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    m = load_model(args.model)
    print(f"k\t{m.k}")
    print(f"num_kmers\t{m.num_kmers}")
    print(f"mean_duration\t{m.mean_duration():.6f}")
    print(f"emission_mean_norm\t{np.linalg.norm(m.emission_mean):.6f}")
    print(f"emission_mean_range\t{m.emission_mean.min():.6f}\t{m.emission_mean.max():.6f}")
    print(f"emission_var_norm\t{np.linalg.norm(m.emission_var):.6f}")
    print(f"emission_var_range\t{m.emission_var.min():.6g}\t{m.emission_var.max():.6g}")
    print(f"outer_transition_norm\t{np.linalg.norm(m.outer_transition):.6f}")
    print("inner_prior\t" + "\t".join(f"{v:.6f}" for v in m.inner_prior))
    for row, name in zip(m.inner_transition, ("1", "2", "3", "back")):
        print(f"inner_transition[{name}]\t" + "\t".join(f"{v:.6f}" for v in row))
    return EXIT_OK


def cmd_verify(args) -> int:
    from helicase_hmm.verify import run_all

    results = run_all(seed=args.seed, quick=args.quick)
    for r in results:
        print(r.line())
        for note in r.notes[:5]:
            print(f"  {note}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_DATA


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hhmm", description="Helicase HMM for nanopore signals")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $HHMM_THREADS or 1)")

    sp = sub.add_parser("simulate", help="simulate a labelled dataset")
    sp.add_argument("--model", help="model file; otherwise a synthetic model from --k/--sigma")
    sp.add_argument("--k", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--reads", type=int, default=100)
    sp.add_argument("--chunk-len", type=int, help="samples per read (read is truncated there)")
    sp.add_argument("--kmers", type=int, help="k-mers per read")
    sp.add_argument("--noiseless", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--save-model", help="also write the generating model")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="EM training on labelled reads")
    sp.add_argument("--model-in", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.add_argument("--emissions-only", action="store_true")
    sp.add_argument("--pseudocount", type=float, default=1.0)
    sp.add_argument("--jitter", type=float, default=0.0, help="perturb initial means by N(0, jitter)")
    sp.add_argument("--seed", type=int, default=0)
    threads(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("resquiggle", help="align samples to the reference k-mers")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out-tsv", required=True)
    sp.add_argument("--svg-dir")
    threads(sp)
    sp.set_defaults(func=cmd_resquiggle)

    sp = sub.add_parser("basecall", help="decode bases with marginalized beam search")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--beam-width", type=int, default=512)
    sp.add_argument("--out", required=True)
    threads(sp)
    sp.set_defaults(func=cmd_basecall)

    sp = sub.add_parser("score", help="identity and error rates of calls against truth")
    sp.add_argument("--calls", required=True)
    sp.add_argument("--truth", required=True, help="FASTA or dataset file with truth bases")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("inspect", help="summarize a model file")
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("verify", help="run the small-k oracle suites")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--quick", action="store_true")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HHMMError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
