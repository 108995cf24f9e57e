"""Selection and prediction quality measures."""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

NME_FLOOR_DB = -300.0
PHASE_FNSR_LIMIT = 0.005


def fpsr(selected: Iterable[int], truth: Iterable[int]) -> Optional[float]:
    """|Ŝ \\ S| / |Ŝ|; ``None`` when nothing was selected."""
    sel, tru = set(selected), set(truth)
    if not sel:
        return None
    return len(sel - tru) / len(sel)


def fnsr(selected: Iterable[int], truth: Iterable[int]) -> Optional[float]:
    """|S \\ Ŝ| / |S|; ``None`` when the true support is empty."""
    sel, tru = set(selected), set(truth)
    if not tru:
        return None
    return len(tru - sel) / len(tru)


def mse(predictions, targets) -> float:
    """Mean over samples of the squared error summed over outputs."""
    p = np.asarray(predictions, dtype=np.float64).reshape(len(predictions), -1)
    t = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
    return float(np.mean(np.sum((t - p) ** 2, axis=1)))


def nme_db(predictions, targets, normalization: str = "variance") -> float:
    """10 log10 of residual energy over target spread, floored at -300 dB.

    ``normalization="variance"`` divides by sum ||t - mean(t)||^2 so the
    constant mean predictor sits at 0 dB; ``"energy"`` divides by sum ||t||^2.
    """
    p = np.asarray(predictions, dtype=np.float64).reshape(len(predictions), -1)
    t = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    num = float(np.sum((t - p) ** 2))
    if normalization == "variance":
        den = float(np.sum((t - t.mean(axis=0)) ** 2))
    elif normalization == "energy":
        den = float(np.sum(t ** 2))
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if den == 0.0:
        raise ValueError("targets have zero variance")
    if num == 0.0:
        return NME_FLOOR_DB
    return max(10.0 * math.log10(num / den), NME_FLOOR_DB)


def accuracy(predictions, labels) -> float:
    """Share of rows whose argmax (first on ties) equals the label."""
    p = np.asarray(predictions, dtype=np.float64)
    lab = np.asarray(labels)
    if lab.ndim == 2:
        lab = lab.argmax(axis=1)
    return float(np.mean(p.argmax(axis=1) == lab))


def phase_indicator(avg_fnsr: float) -> int:
    """1 when average FNSR <= 0.005 (declared perfect recovery), else 0."""
    if not 0.0 <= avg_fnsr <= 1.0:
        raise ValueError(f"average FNSR must lie in [0, 1], got {avg_fnsr}")
    return int(avg_fnsr <= PHASE_FNSR_LIMIT)
