"""Turn a response matrix into authentication and stochastic seeds.

The head of the spectrum (largest ``k_head`` components) is the device
fingerprint; the tail left after discarding the ``k_removed`` largest
components is the stochastic part.  Both reconstructions are binarised
against their row means and hashed.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AnalysisError, ConfigError, DegenerateTailError, NumericInputError
from .svd import SvdFactorization, TruncationSpec, reconstruct, svd

# Tail components below this fraction of the largest singular value count as zero.
DEGENERATE_RTOL = 1e-9
REPORT_VERSION = 1


@dataclass(frozen=True)
class PipelineParams:
    k_head: int = 1
    k_removed: int = 7
    hash_alg: str = "sha256"

    def __post_init__(self):
        if self.k_head < 1:
            raise ConfigError(f"k_head must be >= 1, got {self.k_head}")
        if self.k_removed < self.k_head:
            raise ConfigError(f"k_removed ({self.k_removed}) must be >= k_head ({self.k_head})")
        try:
            h = hashlib.new(self.hash_alg)
        except ValueError:
            raise ConfigError(f"unknown hash algorithm {self.hash_alg!r}") from None
        if h.digest_size != 32:
            raise ConfigError(f"hash algorithm {self.hash_alg!r} does not produce 32-byte digests")

    def check_shape(self, shape: tuple[int, int]) -> None:
        r = min(shape)
        if self.k_removed >= r:
            raise ConfigError(f"k_removed={self.k_removed} must be < min(m, n)={r}")

    def describe(self) -> str:
        return f"k_head={self.k_head};k_removed={self.k_removed};hash_alg={self.hash_alg}"


@dataclass(frozen=True, eq=False)
class SeedBundle:
    auth_bits: np.ndarray
    auth_hash: bytes
    stoch_bits: np.ndarray
    stoch_hash: bytes
    params: PipelineParams
    device_id: str | None = None

    def verify(self) -> bool:
        """True when both digests can be recomputed from the stored bits."""
        return (
            hash_bits(self.auth_bits, self.params.hash_alg) == self.auth_hash
            and hash_bits(self.stoch_bits, self.params.hash_alg) == self.stoch_hash
        )


def _values(A) -> np.ndarray:
    a = np.asarray(getattr(A, "values", A), dtype=np.float64)
    if a.ndim != 2:
        raise NumericInputError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericInputError("matrix contains non-finite entries")
    return a


def binarize_rows(M) -> np.ndarray:
    """1 where an entry is >= the mean of its row, else 0 (uint8 array)."""
    a = _values(M)
    return (a >= a.mean(axis=1, keepdims=True)).astype(np.uint8)


def pack_bits(bits: np.ndarray) -> bytes:
    """Big-endian u64 rows and cols, then the bits row-major, MSB-first, zero-padded."""
    b = np.asarray(bits)
    rows, cols = b.shape
    return struct.pack(">QQ", rows, cols) + np.packbits(b.astype(bool).ravel()).tobytes()


def hash_bits(bits: np.ndarray, alg: str = "sha256") -> bytes:
    return hashlib.new(alg, pack_bits(bits)).digest()


def _auth_from(F: SvdFactorization, p: PipelineParams) -> tuple[np.ndarray, bytes]:
    bits = binarize_rows(reconstruct(F, TruncationSpec("head", p.k_head)))
    return bits, hash_bits(bits, p.hash_alg)


def _stoch_from(F: SvdFactorization, p: PipelineParams) -> tuple[np.ndarray, bytes]:
    r = len(F.S)
    keep = r - p.k_removed
    if F.S[p.k_removed] <= DEGENERATE_RTOL * F.S[0] or F.S[0] == 0.0:
        raise DegenerateTailError(
            f"tail after removing {p.k_removed} components is numerically zero "
            f"(sigma_{p.k_removed + 1} = {F.S[p.k_removed]:.3e}, sigma_1 = {F.S[0]:.3e})"
        )
    bits = binarize_rows(reconstruct(F, TruncationSpec("tail", keep)))
    return bits, hash_bits(bits, p.hash_alg)


def derive_auth(A, p: PipelineParams | None = None) -> tuple[np.ndarray, bytes]:
    p = p or PipelineParams()
    a = _values(A)
    p.check_shape(a.shape)
    return _auth_from(svd(a), p)


def derive_stochastic(A, p: PipelineParams | None = None) -> tuple[np.ndarray, bytes]:
    p = p or PipelineParams()
    a = _values(A)
    p.check_shape(a.shape)
    return _stoch_from(svd(a), p)


def derive_bundle(A, p: PipelineParams | None = None) -> SeedBundle:
    """Both seeds from a single factorisation of ``A``."""
    p = p or PipelineParams()
    a = _values(A)
    p.check_shape(a.shape)
    F = svd(a)
    auth_bits, h1 = _auth_from(F, p)
    stoch_bits, h2 = _stoch_from(F, p)
    return SeedBundle(auth_bits, h1, stoch_bits, h2, p, getattr(A, "source_device_id", None))


def stochastic_stream(matrices: Iterable, n_bits: int, p: PipelineParams | None = None) -> np.ndarray:
    """Concatenate row-major stochastic bits of successive matrices up to ``n_bits``."""
    p = p or PipelineParams()
    chunks, have = [], 0
    for A in matrices:
        if have >= n_bits:
            break
        bits = derive_stochastic(A, p)[0].ravel()
        chunks.append(bits)
        have += bits.size
    if have < n_bits:
        raise AnalysisError(f"matrices supplied only {have} of {n_bits} requested bits")
    return np.concatenate(chunks)[:n_bits]


def avg_row_hamming(B) -> float:
    """Mean fraction of differing bits over all unordered pairs of rows."""
    b = np.asarray(B, dtype=np.int64)
    if b.ndim != 2 or b.shape[0] < 2:
        raise AnalysisError("average row Hamming distance needs at least two rows")
    r, c = b.shape
    ones = b.sum(axis=0)
    # each column contributes ones * zeros differing pairs
    return float(np.sum(ones * (r - ones)) / (r * (r - 1) / 2 * c))


# -- Hamming report -------------------------------------------------------------


@dataclass(frozen=True)
class HammingGroup:
    group: str
    raw_avg: float
    processed_avg: float
    n_matrices: int
    params: str


def hamming_group(name: str, matrices: Sequence, p: PipelineParams | None = None) -> HammingGroup:
    """Compare the responses of one group with each other, raw and processed.

    Every matrix contributes one row (its bits flattened row-major), so the
    raw value measures how much repeated responses differ before processing.
    """
    p = p or PipelineParams()
    if len(matrices) < 2:
        raise AnalysisError(f"group {name!r} needs at least two matrices, got {len(matrices)}")
    raw = np.stack([binarize_rows(A).ravel() for A in matrices])
    processed = np.stack([derive_stochastic(A, p)[0].ravel() for A in matrices])
    return HammingGroup(name, avg_row_hamming(raw), avg_row_hamming(processed), len(matrices), p.describe())


def hamming_report(groups: Mapping[str, Sequence], p: PipelineParams | None = None) -> list[HammingGroup]:
    return [hamming_group(name, mats, p) for name, mats in groups.items()]


def format_hamming_report(groups: Iterable[HammingGroup]) -> str:
    lines = ["format = rosvd-hamming-report", f"version = {REPORT_VERSION}"]
    for g in groups:
        lines += [
            "",
            f"group = {g.group}",
            f"raw_avg = {g.raw_avg:.6f}",
            f"processed_avg = {g.processed_avg:.6f}",
            f"n_matrices = {g.n_matrices}",
            f"params = {g.params}",
        ]
    return "\n".join(lines) + "\n"


def parse_hamming_report(text: str) -> list[HammingGroup]:
    blocks = [b for b in text.strip().split("\n\n") if b.strip()]
    header = dict(line.split(" = ", 1) for line in blocks[0].splitlines())
    if header.get("format") != "rosvd-hamming-report" or int(header.get("version", 0)) != REPORT_VERSION:
        raise AnalysisError("not a version-1 rosvd hamming report")
    out = []
    for block in blocks[1:]:
        kv = dict(line.split(" = ", 1) for line in block.splitlines())
        out.append(
            HammingGroup(kv["group"], float(kv["raw_avg"]), float(kv["processed_avg"]), int(kv["n_matrices"]), kv["params"])
        )
    return out
