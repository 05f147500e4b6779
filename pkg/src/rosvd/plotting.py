"""Matplotlib figures for the analysis reports (rendered off-screen)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def spectrum_figure(path, spectrum: Sequence[tuple[int, float]], k_removed: int | None = None) -> None:
    """Singular values on a log scale, with the head/tail cut marked."""
    idx = np.array([i for i, _ in spectrum])
    s = np.array([v for _, v in spectrum])
    fig, ax = plt.subplots(figsize=(6, 4))
    positive = s > 0
    if positive.any():
        ax.semilogy(idx[positive], s[positive], "o-", ms=3)
    else:
        ax.plot(idx, s, "o-", ms=3)
    if k_removed is not None:
        ax.axvline(k_removed + 0.5, color="tab:red", ls="--", label=f"k_removed = {k_removed}")
        ax.legend()
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.set_title("Singular value spectrum")
    _save(fig, path)


def hamming_figure(path, groups) -> None:
    """Raw versus processed average row Hamming distance per group."""
    names = [g.group for g in groups]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, [g.raw_avg for g in groups], 0.4, label="raw")
    ax.bar(x + 0.2, [g.processed_avg for g in groups], 0.4, label="processed")
    ax.axhline(0.5, color="grey", lw=0.8, ls=":")
    ax.set_xticks(x, names)
    ax.set_ylim(0, 0.6)
    ax.set_ylabel("average row Hamming distance")
    ax.legend()
    _save(fig, path)


def randomness_figure(path, results, alpha: float = 0.01) -> None:
    """P-value per test against the significance level."""
    names = [r.test_name for r in results]
    p = [r.p_value if r.p_value is not None else 0.0 for r in results]
    colors = ["tab:green" if r.passed else "tab:red" if r.p_value is not None else "tab:grey" for r in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.barh(names, p, color=colors)
    ax.axvline(alpha, color="black", ls="--", label=f"alpha = {alpha}")
    ax.set_xlim(0, 1)
    ax.set_xlabel("p-value")
    ax.legend()
    _save(fig, path)
