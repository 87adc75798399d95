"""Navigation metrics: TL, NE, SR, SPL and nDTW."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

Point = Sequence[float]


def navigation_error(final: Point, goal: Point) -> float:
    return math.hypot(final[0] - goal[0], final[1] - goal[1])


def success(ne: float, radius: float = 3.0) -> int:
    """1 if the agent stopped within ``radius`` of the goal (boundary inclusive)."""
    return int(ne <= radius)


def trajectory_length(path: Sequence[Point]) -> float:
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:])))


def spl(succeeded: int, shortest: float, tl: float) -> float:
    if not succeeded:
        return 0.0
    if not shortest > 0:
        raise ValueError("shortest path length must be positive")
    return shortest / max(shortest, tl)


def dtw(path: Sequence[Point], reference: Sequence[Point]) -> float:
    """Dynamic time warping cost under Euclidean point distance."""
    a = np.asarray(path, dtype=float)[:, :2]
    b = np.asarray(reference, dtype=float)[:, :2]
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[n, m])


def ndtw(path: Sequence[Point], reference: Sequence[Point], d_th: float = 3.0) -> float:
    if len(path) == 0 or len(reference) == 0:
        raise ValueError("nDTW needs non-empty sequences")
    return math.exp(-dtw(path, reference) / (len(reference) * d_th))


@dataclass(frozen=True)
class MetricReport:
    episode: str
    TL: float
    NE: float
    success: int
    SPL: Optional[float]
    nDTW: Optional[float]

    def to_json(self) -> dict:
        return asdict(self)


def episode_report(
    episode: str,
    path: Sequence[Point],
    goal: Point,
    radius: float,
    shortest: Optional[float],
    reference: Sequence[Point] = (),
) -> MetricReport:
    """Per-episode metrics; nDTW uses the success radius as its threshold."""
    tl = trajectory_length(path)
    ne = navigation_error(path[-1], goal)
    s = success(ne, radius)
    if shortest is None or not math.isfinite(shortest) or shortest <= 0:
        spl_value = float(s) if shortest == 0 else None
    else:
        spl_value = spl(s, shortest, tl)
    n = ndtw(path, reference, radius) if len(reference) else None
    return MetricReport(episode, tl, ne, s, spl_value, n)


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def aggregate(reports: Sequence[MetricReport]) -> dict:
    """Mean over episodes; SR as a percentage, SPL and nDTW as ratios."""
    if not reports:
        raise ValueError("no episodes to aggregate")
    return {
        "episodes": len(reports),
        "TL": _mean(r.TL for r in reports),
        "NE": _mean(r.NE for r in reports),
        "nDTW": _mean(r.nDTW for r in reports),
        "SR": 100.0 * sum(r.success for r in reports) / len(reports),
        "SPL": _mean(r.SPL for r in reports),
    }
