from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from helicase_hmm.errors import InvalidKmerPath, LengthMismatch
from helicase_hmm.model import KmerConfig, is_kmer_path, kmers_from_bases


@dataclass
class Read:
    """A signal chunk with optional ground truth.

    ``segment_lengths`` gives the number of samples emitted by each k-mer of
    ``truth_kmers``; ``inner_states`` (simulator output only) holds one
    :class:`~helicase_hmm.model.InnerState` code per sample.
    """

    read_id: str
    signal: np.ndarray
    truth_bases: str | None = None
    truth_kmers: np.ndarray | None = None
    segment_lengths: np.ndarray | None = None
    inner_states: np.ndarray | None = None
    truncated: bool = False
    log_prob: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 1 or self.signal.size < 1:
            raise LengthMismatch(f"read {self.read_id}: signal must hold at least one sample")
        if self.truth_kmers is not None:
            self.truth_kmers = np.asarray(self.truth_kmers, dtype=np.int64)
        if self.segment_lengths is not None:
            self.segment_lengths = np.asarray(self.segment_lengths, dtype=np.int64)
            if int(self.segment_lengths.sum()) != self.signal.size:
                raise LengthMismatch(
                    f"read {self.read_id}: segment lengths sum to "
                    f"{int(self.segment_lengths.sum())}, signal has {self.signal.size} samples"
                )
            if self.truth_kmers is not None and self.truth_kmers.size != self.segment_lengths.size:
                raise LengthMismatch(f"read {self.read_id}: one segment length per k-mer required")

    @property
    def n_samples(self) -> int:
        return self.signal.size

    def labelled(self, config: KmerConfig) -> "Read":
        """Copy with ``truth_kmers`` derived from ``truth_bases``."""
        if self.truth_bases is None:
            return self
        kmers = kmers_from_bases(self.truth_bases, config)
        if not is_kmer_path(kmers, config):
            raise InvalidKmerPath(self.read_id)
        if self.segment_lengths is not None and self.segment_lengths.size != kmers.size:
            raise LengthMismatch(
                f"read {self.read_id}: {self.segment_lengths.size} segments for {kmers.size} k-mers"
            )
        return replace(self, truth_kmers=kmers)

    def sample_positions(self) -> np.ndarray:
        """k-mer position of every sample, from the ground-truth segmentation."""
        if self.segment_lengths is None:
            raise LengthMismatch(f"read {self.read_id} has no segmentation")
        return np.repeat(np.arange(self.segment_lengths.size), self.segment_lengths)
