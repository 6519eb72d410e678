"""Temporal smoothing of per-keyframe tag scores.

A tag's score at keyframe k becomes a Gaussian-weighted sum of its scores at
keyframes k-d..k+d, each term gated by the probability that the tag is still
relevant i keyframes away.  Those probabilities are estimated from
ground-truth relevance bits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, InputError

GLOBAL = "*"


@dataclass(frozen=True)
class TransitionTable:
    """``probs[(tag, lag)]``; tag ``"*"`` holds the pooled fallback."""

    probs: Mapping[tuple, float]
    d_max: int
    counts: Mapping[tuple, tuple] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d_max < 0:
            raise ConfigError("d_max must be >= 0")
        for key, p in self.probs.items():
            if not 0.0 <= p <= 1.0:
                raise InputError(f"probability {p} outside [0, 1]", item=str(key))

    @classmethod
    def uniform(cls, d_max: int = 1_000_000) -> "TransitionTable":
        """Table with P=1 everywhere, i.e. plain Gaussian smoothing."""
        return cls({}, d_max)

    @property
    def tags(self) -> set:
        return {t for t, _ in self.probs if t != GLOBAL}

    def source(self, tag: str) -> str:
        if tag in self.tags:
            return "tag"
        if any(t == GLOBAL for t, _ in self.probs):
            return "global"
        return "none"

    def prob(self, tag: str, lag: int) -> float:
        if lag == 0:
            return 1.0
        if abs(lag) > self.d_max:
            raise ConfigError(f"lag {lag} exceeds table d_max {self.d_max}")
        p = self.probs.get((tag, lag))
        if p is None:
            p = self.probs.get((GLOBAL, lag), 1.0)
        return p

    def save(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# d_max={self.d_max}\n")
            w = csv.writer(fh)
            w.writerow(["tag", "lag", "probability", "numerator", "denominator"])
            for (tag, lag) in sorted(self.probs):
                num, den = self.counts.get((tag, lag), ("", ""))
                w.writerow([tag, lag, repr(self.probs[(tag, lag)]), num, den])

    @classmethod
    def load(cls, path) -> "TransitionTable":
        d_max = None
        probs, counts = {}, {}
        with open(path, newline="", encoding="utf-8") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for part in line[1:].split():
                        if part.startswith("d_max="):
                            d_max = int(part.split("=", 1)[1])
                    continue
                lines.append(line)
        try:
            for row in csv.DictReader(lines):
                key = (row["tag"], int(row["lag"]))
                probs[key] = float(row["probability"])
                if row.get("numerator") not in (None, ""):
                    counts[key] = (int(row["numerator"]), int(row["denominator"]))
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: malformed transition table ({exc})") from None
        if d_max is None:
            d_max = max((abs(lag) for _, lag in probs), default=0)
        return cls(probs, d_max, counts)


def _lag_counts(bits: np.ndarray, lag: int) -> tuple[int, int]:
    # pairs (k - lag, k) with both inside the sequence; condition on the k - lag end
    n = len(bits)
    if abs(lag) >= n:
        return 0, 0
    if lag >= 0:
        cond, target = bits[: n - lag], bits[lag:]
    else:
        cond, target = bits[-lag:], bits[: n + lag]
    return int(np.sum(cond & target)), int(np.sum(cond))


def estimate_transitions(truth: Iterable, d_max: int, alpha: float = 1.0) -> TransitionTable:
    """Estimate ``P(tag at k | tag at k - i)`` from ``(video, tag, bits)`` triples.

    Counts are pooled over videos per tag and also into a global ``"*"`` row.
    ``alpha`` is the additive smoothing; ``alpha=0`` gives raw ratios and
    leaves lags with no eligible pair to the global fallback.
    """
    if d_max < 0:
        raise ConfigError("d_max must be >= 0")
    counts: dict = {}
    for _video, tag, bits in truth:
        b = np.asarray(bits, dtype=bool)
        for lag in range(-d_max, d_max + 1):
            num, den = _lag_counts(b, lag)
            for key in ((tag, lag), (GLOBAL, lag)):
                n0, d0 = counts.get(key, (0, 0))
                counts[key] = (n0 + num, d0 + den)
    probs = {}
    for (tag, lag), (num, den) in counts.items():
        if lag == 0:
            probs[(tag, lag)] = 1.0
        elif den + 2 * alpha > 0:
            probs[(tag, lag)] = (num + alpha) / (den + 2 * alpha)
    return TransitionTable(probs, d_max, counts)


@dataclass(frozen=True)
class GaussianWeights:
    d: int
    sigma: float
    w: tuple  # w[-d] .. w[+d]

    def at(self, lag: int) -> float:
        return self.w[lag + self.d]


def gaussian_weights(d: int, sigma: float | None = None) -> GaussianWeights:
    if d < 0:
        raise ConfigError("d must be >= 0")
    sigma = float(max(d, 1)) if sigma is None else float(sigma)
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    raw = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-d, d + 1)]
    total = math.fsum(raw)
    w = [x / total for x in raw]
    for i in range(d):  # exact symmetry
        w[2 * d - i] = w[i]
    return GaussianWeights(d, sigma, tuple(w))


@dataclass(frozen=True)
class FrameScoreSeries:
    tag: str
    scores: tuple  # score at keyframe 0..n-1


def smooth(series: FrameScoreSeries, table: TransitionTable, weights: GaussianWeights) -> FrameScoreSeries:
    """Windowed re-scoring; at the sequence ends the window is truncated and
    the surviving weights renormalized."""
    if weights.d > table.d_max:
        raise ConfigError(f"window d={weights.d} exceeds transition table d_max={table.d_max}")
    s = series.scores
    n, d = len(s), weights.d
    gate = {i: weights.at(i) * table.prob(series.tag, i) for i in range(-d, d + 1)}
    out = []
    for k in range(n):
        acc, wsum = None, 0.0
        for i in range(-d, d + 1):
            j = k - i
            if 0 <= j < n:
                term = gate[i] * s[j]
                acc = term if acc is None else acc + term
                wsum += weights.at(i)
        out.append(acc / wsum)
    return FrameScoreSeries(series.tag, tuple(out))
