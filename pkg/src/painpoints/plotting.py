"""Matplotlib figures rendered next to the report. PNG metadata is stripped so reruns
produce identical bytes."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def painpoint_bars(words: Sequence[str], freqs: Sequence[int], title: str, path: str | Path) -> Path:
    """Horizontal bars, most frequent on top."""
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.25 * len(words) + 1)))
    ax.barh(range(len(words))[::-1], freqs, color="#b5483b")
    ax.set_yticks(range(len(words))[::-1])
    ax.set_yticklabels(words)
    ax.set_xlabel("reviews")
    ax.set_title(title)
    return _save(fig, Path(path))


def itm_history(steps: Sequence[int], outlier: Sequence[float], changes: Sequence[int], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, outlier, marker="o", color="#2b6a99")
    ax.set_xlabel("step")
    ax.set_ylabel("outlier ratio", color="#2b6a99")
    ax2 = ax.twinx()
    ax2.bar(steps, changes, alpha=0.3, color="#888888")
    ax2.set_ylabel("label changes")
    ax.set_title("Iterative topic modification")
    return _save(fig, Path(path))


def topic_sizes(sizes: Mapping[int, int], path: str | Path) -> Path:
    ids = sorted(sizes)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar([str(t) if t else "outlier" for t in ids], [sizes[t] for t in ids], color="#4d8a55")
    ax.set_xlabel("topic")
    ax.set_ylabel("reviews")
    ax.set_title("Final topic sizes")
    return _save(fig, Path(path))
