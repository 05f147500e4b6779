"""Five statistical tests from NIST SP 800-22 Rev. 1a.

Frequency (monobit), runs, binary matrix rank, discrete Fourier transform
and non-overlapping template matching.  Parameters default to the values
recommended by the NIST document; ``strict=False`` lifts the minimum-length
checks so that the short worked examples from the document can be run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erfc, gammaincc

from .errors import AnalysisError, InsufficientBitsError

ALPHA = 0.01
PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not_applicable"
DEFAULT_TEMPLATE = "000000001"
TEST_NAMES = ("frequency", "runs", "rank", "fft", "nonoverlapping_template")


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    test_name: str
    p_value: float | None
    status: str
    n_bits: int
    parameters: dict = field(default_factory=dict)
    alpha: float = ALPHA
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS


def _verdict(name: str, p: float, n: int, alpha: float, **params) -> TestResult:
    p = float(min(1.0, max(0.0, p)))
    return TestResult(name, p, PASS if p >= alpha else FAIL, n, params, alpha)


def as_bits(bits) -> np.ndarray:
    if isinstance(bits, str):
        bits = [c for c in bits if not c.isspace()]
        if any(c not in "01" for c in bits):
            raise AnalysisError("bit strings may contain only '0' and '1'")
        return np.frombuffer("".join(bits).encode(), dtype=np.uint8) - ord("0")
    b = np.asarray(bits).ravel()
    if b.size and (b.min() < 0 or b.max() > 1):
        raise AnalysisError("bit arrays may contain only 0 and 1")
    return b.astype(np.uint8)


def _require(n: int, minimum: int, name: str, strict: bool) -> None:
    if strict and n < minimum:
        raise InsufficientBitsError(f"{name} needs at least {minimum} bits, got {n}")
    if n == 0:
        raise InsufficientBitsError(f"{name} needs a non-empty bit sequence")


def frequency_monobit(bits, *, alpha: float = ALPHA, strict: bool = True) -> TestResult:
    eps = as_bits(bits)
    n = eps.size
    _require(n, 100, "frequency test", strict)
    s = 2 * int(eps.sum(dtype=np.int64)) - n
    s_obs = abs(s) / math.sqrt(n)
    return _verdict("frequency", erfc(s_obs / math.sqrt(2)), n, alpha, s_n=s, s_obs=s_obs)


def runs_test(bits, *, alpha: float = ALPHA, strict: bool = True) -> TestResult:
    eps = as_bits(bits)
    n = eps.size
    _require(n, 100, "runs test", strict)
    pi = eps.sum(dtype=np.int64) / n
    tau = 2 / math.sqrt(n)
    if abs(pi - 0.5) >= tau:
        return TestResult(
            "runs", None, NOT_APPLICABLE, n, {"pi": pi, "tau": tau}, alpha, "frequency prerequisite failed"
        )
    v_obs = 1 + int(np.count_nonzero(eps[1:] != eps[:-1]))
    num = abs(v_obs - 2 * n * pi * (1 - pi))
    den = 2 * math.sqrt(2 * n) * pi * (1 - pi)
    return _verdict("runs", erfc(num / den), n, alpha, pi=pi, v_obs=v_obs)


def rank_probabilities(M: int, Q: int) -> tuple[float, float, float]:
    """Probabilities that a random M x Q binary matrix has rank M, M-1, or less."""

    def p_rank(r: int) -> float:
        prod = 1.0
        for i in range(r):
            prod *= (1 - 2.0 ** (i - Q)) * (1 - 2.0 ** (i - M)) / (1 - 2.0 ** (i - r))
        return 2.0 ** (r * (Q + M - r) - M * Q) * prod

    full, deficient = p_rank(M), p_rank(M - 1)
    return full, deficient, 1.0 - full - deficient


def gf2_ranks(blocks: np.ndarray) -> np.ndarray:
    """Ranks over GF(2) of a stack of binary matrices, shape (N, M, Q)."""
    N, M, Q = blocks.shape
    if Q > 63:
        raise AnalysisError("rows wider than 63 bits are not supported")
    weights = (1 << np.arange(Q - 1, -1, -1, dtype=np.uint64)).astype(np.uint64)
    rows = (blocks.astype(np.uint64) * weights).sum(axis=2, dtype=np.uint64)
    used = np.zeros((N, M), dtype=bool)
    rank = np.zeros(N, dtype=np.int64)
    idx = np.arange(N)
    for c in range(Q):
        bit = np.uint64(1 << (Q - 1 - c))
        has = (rows & bit) != 0
        eligible = has & ~used
        found = eligible.any(axis=1)
        pivot = np.argmax(eligible, axis=1)
        pivot_rows = rows[idx, pivot]
        clear = has & found[:, None]
        clear[idx, pivot] = False
        rows = np.where(clear, rows ^ pivot_rows[:, None], rows)
        used[idx[found], pivot[found]] = True
        rank += found
    return rank


def rank_test(
    bits,
    *,
    M: int = 32,
    Q: int = 32,
    alpha: float = ALPHA,
    strict: bool = True,
    reference_shape: tuple[int, int] | None = (32, 32),
) -> TestResult:
    """Binary matrix rank test.

    The rank classes are full, full minus one, and lower.  Their expected
    frequencies come from ``reference_shape``: SP 800-22 always uses the 32x32
    probabilities, even for its small worked example, so that is the default.
    Pass ``None`` to use the exact probabilities for ``M`` x ``Q`` blocks.
    """
    eps = as_bits(bits)
    n = eps.size
    _require(n, 38 * M * Q, "rank test", strict)
    N = n // (M * Q)
    if N == 0:
        raise InsufficientBitsError(f"rank test needs at least one {M}x{Q} block")
    ranks = gf2_ranks(eps[: N * M * Q].reshape(N, M, Q))
    f_full = int(np.count_nonzero(ranks == M))
    f_def = int(np.count_nonzero(ranks == M - 1))
    observed = np.array([f_full, f_def, N - f_full - f_def])
    expected = N * np.array(rank_probabilities(*(reference_shape or (M, Q))))
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    return _verdict("rank", math.exp(-chi2 / 2), n, alpha, M=M, Q=Q, N=N, counts=observed.tolist(), chi2=chi2)


def fft_test(bits, *, alpha: float = ALPHA, strict: bool = True) -> TestResult:
    eps = as_bits(bits)
    n = eps.size
    _require(n, 1000, "DFT test", strict)
    x = 2.0 * eps - 1.0
    modulus = np.abs(np.fft.fft(x)[: n // 2])
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2
    n1 = int(np.count_nonzero(modulus < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return _verdict("fft", erfc(abs(d) / math.sqrt(2)), n, alpha, n0=n0, n1=n1, d=d, threshold=threshold)


def _count_nonoverlapping(block: np.ndarray, template: np.ndarray) -> int:
    m = template.size
    windows = np.lib.stride_tricks.sliding_window_view(block, m)
    hits = np.flatnonzero((windows == template).all(axis=1))
    count, next_free = 0, 0
    for pos in hits:
        if pos >= next_free:
            count += 1
            next_free = pos + m
    return count


def nonoverlapping_template(
    bits,
    template: str | Sequence[int] = DEFAULT_TEMPLATE,
    *,
    n_blocks: int = 8,
    alpha: float = ALPHA,
    strict: bool = True,
) -> TestResult:
    eps = as_bits(bits)
    tmpl = as_bits(template)
    n, m = eps.size, tmpl.size
    _require(n, n_blocks * 1032, "non-overlapping template test", strict)
    M = n // n_blocks
    if m == 0 or m > M:
        raise AnalysisError(f"template of length {m} does not fit blocks of {M} bits")
    W = np.array([_count_nonoverlapping(eps[j * M : (j + 1) * M], tmpl) for j in range(n_blocks)])
    mu = (M - m + 1) / 2**m
    var = M * (1 / 2**m - (2 * m - 1) / 2 ** (2 * m))
    chi2 = float(np.sum((W - mu) ** 2) / var)
    p = gammaincc(n_blocks / 2, chi2 / 2)
    tmpl_str = "".join(map(str, tmpl))
    return _verdict(
        "nonoverlapping_template", p, n, alpha, template=tmpl_str, N=n_blocks, M=M, W=W.tolist(), chi2=chi2
    )


@dataclass(frozen=True)
class SuiteConfig:
    alpha: float = ALPHA
    tests: tuple[str, ...] = TEST_NAMES
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        unknown = set(self.tests) - set(TEST_NAMES)
        if unknown:
            raise AnalysisError(f"unknown randomness tests: {sorted(unknown)}")


def run_suite(bits, config: SuiteConfig | None = None) -> list[TestResult]:
    """Run every selected test; too-short input yields ``not_applicable``, never an exception."""
    config = config or SuiteConfig()
    eps = as_bits(bits)
    runners = {
        "frequency": lambda: frequency_monobit(eps, alpha=config.alpha),
        "runs": lambda: runs_test(eps, alpha=config.alpha),
        "rank": lambda: rank_test(eps, alpha=config.alpha),
        "fft": lambda: fft_test(eps, alpha=config.alpha),
        "nonoverlapping_template": lambda: nonoverlapping_template(eps, config.template, alpha=config.alpha),
    }
    results = []
    for name in config.tests:
        try:
            results.append(runners[name]())
        except InsufficientBitsError as exc:
            results.append(TestResult(name, None, NOT_APPLICABLE, int(eps.size), {}, config.alpha, str(exc)))
    return results


def format_suite_report(results: Sequence[TestResult]) -> str:
    lines = ["# test\tn\tp_value\tverdict"]
    for r in results:
        p = "-" if r.p_value is None else f"{r.p_value:.6f}"
        lines.append(f"{r.test_name}\t{r.n_bits}\t{p}\t{r.status}")
    return "\n".join(lines) + "\n"


def read_bitstream(path) -> np.ndarray:
    """Read ASCII '0'/'1' text or raw binary (MSB-first per byte), auto-detected."""
    data = Path(path).read_bytes()
    if data and set(data) <= set(b"01 \t\r\n"):
        return as_bits(data.decode())
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def write_bitstream(path, bits, *, ascii: bool = False) -> None:
    eps = as_bits(bits)
    if ascii:
        Path(path).write_text("".join(map(str, eps.tolist())) + "\n")
    else:
        if eps.size % 8:
            raise AnalysisError("raw binary output needs a multiple of 8 bits")
        Path(path).write_bytes(np.packbits(eps).tobytes())
