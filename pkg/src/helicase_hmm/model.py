"""State spaces, parameter container and k-mer arithmetic of the Helicase HMM.

The outer chain runs over k-mers, indexed base-4 with the leftmost base as
the most significant digit (A=0, C=1, G=2, T=3).  Consecutive k-mers
overlap in k-1 bases, so the successors of ``i`` are
``(i % 4**(k-1)) * 4 + b`` for ``b`` in 0..3.

Each k-mer drives an inner chain over the helicase states.  ``End`` is
non-emitting: entering it hands control back to the outer chain, and the
inner prior puts no mass on it, so every k-mer emits at least one sample.
Tables indexed by emitting state use the order S1, S2, S3, Back.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from helicase_hmm.errors import (
    IndexOutOfRange,
    InsufficientReference,
    InvalidBase,
    LengthMismatch,
    ModelValidation,
    NonEmittingState,
)

ALPHABET = "ACGT"
MAX_K = 12
VARIANCE_FLOOR = 1e-6
SUM_TOL = 1e-9
LOG_2PI = math.log(2.0 * math.pi)

_BASE_CODE = {b: i for i, b in enumerate(ALPHABET)}
_LUT = np.full(256, -1, dtype=np.int8)
for _b, _i in _BASE_CODE.items():
    _LUT[ord(_b)] = _i
    _LUT[ord(_b.lower())] = _i


class InnerState(enum.IntEnum):
    END = 0
    S1 = 1
    S2 = 2
    S3 = 3
    BACK = 4

    @property
    def emitting(self) -> bool:
        return self is not InnerState.END

    @property
    def emit_index(self) -> int:
        """Column of this state in the emission tables."""
        if self is InnerState.END:
            raise NonEmittingState("End does not emit")
        return int(self) - 1

    @classmethod
    def from_emit_index(cls, e: int) -> "InnerState":
        return cls(int(e) + 1)

    @property
    def label(self) -> str:
        return {0: "end", 1: "1", 2: "2", 3: "3", 4: "back"}[int(self)]


EMITTING = (InnerState.S1, InnerState.S2, InnerState.S3, InnerState.BACK)
N_EMIT = 4
BACK = InnerState.BACK.emit_index


@dataclass(frozen=True)
class KmerConfig:
    k: int
    alphabet: str = ALPHABET

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or not 1 <= self.k <= MAX_K:
            raise ValueError(f"k must be an integer in [1, {MAX_K}], got {self.k!r}")
        if self.alphabet != ALPHABET:
            raise ValueError("only the ACGT alphabet is supported")

    @property
    def num_kmers(self) -> int:
        return 4 ** self.k


def _as_codes(bases: str) -> np.ndarray:
    raw = np.frombuffer(bases.encode("ascii", errors="replace"), dtype=np.uint8)
    codes = _LUT[raw]
    if codes.size and codes.min() < 0:
        bad = bases[int(np.argmax(codes < 0))]
        raise InvalidBase(f"invalid base {bad!r}")
    return codes.astype(np.int64)


def encode_kmer(bases: str, config: KmerConfig) -> int:
    if len(bases) != config.k:
        raise LengthMismatch(f"expected {config.k} bases, got {len(bases)}")
    idx = 0
    for d in _as_codes(bases):
        idx = idx * 4 + int(d)
    return idx


def decode_kmer(index: int, config: KmerConfig) -> str:
    if not 0 <= index < config.num_kmers:
        raise IndexOutOfRange(f"k-mer index {index} outside [0, {config.num_kmers})")
    out = []
    for _ in range(config.k):
        out.append(ALPHABET[index & 3])
        index >>= 2
    return "".join(reversed(out))


def successors(kmer_index: int, config: KmerConfig) -> list[int]:
    """The four k-mers reachable by one base shift, ordered A, C, G, T."""
    if not 0 <= kmer_index < config.num_kmers:
        raise IndexOutOfRange(f"k-mer index {kmer_index} outside [0, {config.num_kmers})")
    base = (kmer_index % 4 ** (config.k - 1)) * 4
    return [base + b for b in range(4)]


def predecessors(kmer_index: int, config: KmerConfig) -> list[int]:
    if not 0 <= kmer_index < config.num_kmers:
        raise IndexOutOfRange(f"k-mer index {kmer_index} outside [0, {config.num_kmers})")
    head = kmer_index >> 2
    step = 4 ** (config.k - 1)
    return [head + j * step for j in range(4)]


def kmers_from_bases(bases: str, config: KmerConfig) -> np.ndarray:
    """Rewrite a base string as its sequence of overlapping k-mer indices."""
    codes = _as_codes(bases)
    k = config.k
    if codes.size < k:
        raise LengthMismatch(f"need at least {k} bases, got {codes.size}")
    n = codes.size - k + 1
    idx = np.zeros(n, dtype=np.int64)
    for j in range(k):
        idx = idx * 4 + codes[j : j + n]
    return idx


def bases_from_kmers(kmers: Sequence[int], config: KmerConfig) -> str:
    kmers = np.asarray(kmers, dtype=np.int64)
    if kmers.size == 0:
        return ""
    check_kmer_path(kmers, config)
    return decode_kmer(int(kmers[0]), config) + "".join(ALPHABET[int(i) & 3] for i in kmers[1:])


def is_kmer_path(kmers: Sequence[int], config: KmerConfig) -> bool:
    kmers = np.asarray(kmers, dtype=np.int64)
    if kmers.size == 0:
        return True
    if kmers.min() < 0 or kmers.max() >= config.num_kmers:
        return False
    tail = 4 ** (config.k - 1)
    return bool(np.all((kmers[:-1] % tail) == (kmers[1:] >> 2)))


def check_kmer_path(kmers: Sequence[int], config: KmerConfig) -> None:
    from helicase_hmm.errors import InvalidKmerPath

    if not is_kmer_path(kmers, config):
        raise InvalidKmerPath("consecutive k-mers must overlap in k-1 bases")


def emission_logpdf(model: "HelicaseModel", kmer_index: int, inner_state, x: float) -> float:
    state = InnerState(inner_state)
    if not state.emitting:
        raise NonEmittingState("End does not emit")
    e = state.emit_index
    mu = model.emission_mean[kmer_index, e]
    var = model.emission_var[kmer_index, e]
    return -0.5 * (LOG_2PI + math.log(var)) - (x - mu) ** 2 / (2.0 * var)


class InnerParams(NamedTuple):
    """Inner chain parameters: prior over emitting states, transitions to End + emitting."""

    prior: np.ndarray
    transition: np.ndarray


def default_inner_params() -> InnerParams:
    # rows S1, S2, S3, Back; columns End, S1, S2, S3, Back
    transition = np.array(
        [
            [0.20, 0.55, 0.20, 0.00, 0.05],
            [0.20, 0.00, 0.55, 0.20, 0.05],
            [0.20, 0.00, 0.00, 0.75, 0.05],
            [0.20, 0.70, 0.00, 0.00, 0.10],
        ]
    )
    prior = np.array([1.0, 0.0, 0.0, 0.0])
    return InnerParams(prior, transition)


class Violation(NamedTuple):
    kind: str
    where: str
    detail: str

    def __str__(self):
        return f"{self.kind}[{self.where}]: {self.detail}"


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HelicaseModel:
    """Full parameter set of a Helicase HMM.

    Arrays are copied and made read-only on construction; derive new models
    with :meth:`replace` instead of mutating.
    """

    config: KmerConfig
    outer_prior: np.ndarray
    outer_transition: np.ndarray
    inner_prior: np.ndarray
    inner_transition: np.ndarray
    emission_mean: np.ndarray
    emission_var: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in (
            "outer_prior",
            "outer_transition",
            "inner_prior",
            "inner_transition",
            "emission_mean",
            "emission_var",
        ):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def num_kmers(self) -> int:
        return self.config.num_kmers

    def replace(self, **changes) -> "HelicaseModel":
        fields = dict(
            config=self.config,
            outer_prior=self.outer_prior,
            outer_transition=self.outer_transition,
            inner_prior=self.inner_prior,
            inner_transition=self.inner_transition,
            emission_mean=self.emission_mean,
            emission_var=self.emission_var,
            meta=dict(self.meta),
        )
        fields.update(changes)
        return HelicaseModel(**fields)

    def quantized(self) -> "HelicaseModel":
        """Copy with every table rounded to float32, as stored on disk."""
        q = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)  # noqa: E731
        return self.replace(
            outer_prior=q(self.outer_prior),
            outer_transition=q(self.outer_transition),
            inner_prior=q(self.inner_prior),
            inner_transition=q(self.inner_transition),
            emission_mean=q(self.emission_mean),
            emission_var=q(self.emission_var),
        )

    # log-domain views used by the kernels
    @cached_property
    def log_outer_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.outer_prior)

    @cached_property
    def log_outer_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.outer_transition)

    @cached_property
    def log_inner_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.inner_prior)

    @cached_property
    def log_inner_stay(self) -> np.ndarray:
        """Log transitions among emitting states, shape (4, 4)."""
        with np.errstate(divide="ignore"):
            return np.ascontiguousarray(np.log(self.inner_transition[:, 1:]))

    @cached_property
    def log_inner_exit(self) -> np.ndarray:
        """Log probability of moving to End from each emitting state."""
        with np.errstate(divide="ignore"):
            return np.ascontiguousarray(np.log(self.inner_transition[:, 0]))

    @cached_property
    def log_norm_const(self) -> np.ndarray:
        return -0.5 * (LOG_2PI + np.log(self.emission_var))

    @cached_property
    def inv_two_var(self) -> np.ndarray:
        return 0.5 / self.emission_var

    def mean_duration(self) -> float:
        from helicase_hmm.simulator import mean_duration

        return mean_duration(self.inner_prior, self.inner_transition)


def validate_model(model: HelicaseModel, tol: float = SUM_TOL) -> list[Violation]:
    """Check every model invariant; an empty list means the model is valid."""
    out: list[Violation] = []
    nk = model.config.num_kmers
    shapes = {
        "outer_prior": (nk,),
        "outer_transition": (nk, 4),
        "inner_prior": (N_EMIT,),
        "inner_transition": (N_EMIT, N_EMIT + 1),
        "emission_mean": (nk, N_EMIT),
        "emission_var": (nk, N_EMIT),
    }
    bad_shape = False
    for name, shape in shapes.items():
        arr = getattr(model, name)
        if arr.shape != shape:
            out.append(Violation("Shape", name, f"expected {shape}, got {arr.shape}"))
            bad_shape = True
    if bad_shape:
        return out

    for name in shapes:
        arr = getattr(model, name)
        if not np.all(np.isfinite(arr)):
            out.append(Violation("NonFinite", name, "contains NaN or infinity"))
    for name in ("outer_prior", "outer_transition", "inner_prior", "inner_transition"):
        arr = getattr(model, name)
        if np.any(arr < 0):
            out.append(Violation("Negative", name, "negative probability"))

    s = float(model.outer_prior.sum())
    if abs(s - 1.0) > tol:
        out.append(Violation("PriorSum", "outer_prior", f"sums to {s!r}"))
    rows = model.outer_transition.sum(axis=1)
    for i in np.flatnonzero(np.abs(rows - 1.0) > tol):
        out.append(
            Violation(
                "RowSum",
                f"outer_transition[{decode_kmer(int(i), model.config)}]",
                f"sums to {rows[i]!r}",
            )
        )
    s = float(model.inner_prior.sum())
    if abs(s - 1.0) > tol:
        out.append(Violation("PriorSum", "inner_prior", f"sums to {s!r}"))
    rows = model.inner_transition.sum(axis=1)
    for e in np.flatnonzero(np.abs(rows - 1.0) > tol):
        label = InnerState.from_emit_index(e).label
        out.append(Violation("RowSum", f"inner_transition[{label}]", f"sums to {rows[e]!r}"))
    if not np.any(model.inner_transition[:, 0] > 0):
        out.append(Violation("NoEnd", "inner_transition", "End unreachable from every state"))

    low = np.argwhere(~(model.emission_var >= VARIANCE_FLOOR))
    for kidx, e in low:
        out.append(
            Violation(
                "VarianceFloor",
                f"emission_var[{decode_kmer(int(kidx), model.config)},"
                f"{InnerState.from_emit_index(e).label}]",
                f"{model.emission_var[kidx, e]!r} < {VARIANCE_FLOOR}",
            )
        )
    return out


def ensure_valid(model: HelicaseModel, tol: float = SUM_TOL) -> HelicaseModel:
    violations = validate_model(model, tol=tol)
    if violations:
        raise ModelValidation(violations)
    return model


def uniform_model(
    config: KmerConfig,
    inner_params: InnerParams | None = None,
    mu_init=0.0,
    var_init=1.0,
) -> HelicaseModel:
    """Uniform outer chain with the given inner chain and emission initialisation.

    ``mu_init`` and ``var_init`` may be scalars or full ``(4**k, 4)`` tables.
    """
    if inner_params is None:
        inner_params = default_inner_params()
    nk = config.num_kmers
    model = HelicaseModel(
        config=config,
        outer_prior=np.full(nk, 1.0 / nk),
        outer_transition=np.full((nk, 4), 0.25),
        inner_prior=inner_params.prior,
        inner_transition=inner_params.transition,
        emission_mean=np.broadcast_to(np.asarray(mu_init, dtype=float), (nk, N_EMIT)),
        emission_var=np.broadcast_to(np.asarray(var_init, dtype=float), (nk, N_EMIT)),
    )
    return ensure_valid(model)


def priors_from_reference(reference: str, config: KmerConfig, pseudocount: float = 1.0):
    """Outer prior and one-base transition table estimated by counting a reference.

    Rows of k-mers never followed by anything in the reference (with a zero
    pseudocount) fall back to uniform.
    """
    if pseudocount < 0:
        raise ValueError("pseudocount must be >= 0")
    k = config.k
    if len(reference) < k + 1:
        raise InsufficientReference(f"reference needs at least {k + 1} bases")
    kmers = kmers_from_bases(reference, config)
    nk = config.num_kmers
    prior = np.bincount(kmers, minlength=nk).astype(float) + pseudocount
    prior /= prior.sum()

    trans = np.zeros((nk, 4))
    np.add.at(trans, (kmers[:-1], kmers[1:] & 3), 1.0)
    trans += pseudocount
    rows = trans.sum(axis=1, keepdims=True)
    empty = rows[:, 0] == 0
    trans[empty] = 1.0
    rows[empty] = 4.0
    trans /= rows
    return prior, trans
