"""Incomplete bus-run observations: recording vectors and alignment matrices.

Link indices are 0-based throughout the library. Stop ``k`` of the target
route sits between link ``k - 1`` and link ``k``, so skipping stop ``k``
merges those two links into a single ragged value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class AlignmentError(ValueError):
    """Inconsistent route coverage or skip specification."""


Rows = tuple[tuple[int, ...], ...]


def rows_to_matrix(rows: Sequence[Sequence[int]], n: int) -> np.ndarray:
    G = np.zeros((len(rows), n))
    for a, links in enumerate(rows):
        G[a, list(links)] = 1.0
    return G


def matrix_to_rows(G: np.ndarray) -> Rows:
    return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in np.asarray(G))


@dataclass(frozen=True)
class Observation:
    """One bus run: ``recording = alignment @ x`` for the latent link times ``x``."""

    recording: np.ndarray
    rows: Rows
    n: int
    route_id: str = ""
    bus_id: str = ""
    start_time: datetime | None = None

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.recording, dtype=float))
        rows = tuple(tuple(int(j) for j in row) for row in self.rows)
        if r.size != len(rows):
            raise ValueError(f"recording has {r.size} entries but alignment has {len(rows)} rows")
        object.__setattr__(self, "recording", r)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_matrix(cls, recording, alignment, **kw) -> "Observation":
        alignment = np.asarray(alignment)
        return cls(recording, matrix_to_rows(alignment), alignment.shape[1], **kw)

    @property
    def alignment(self) -> np.ndarray:
        return rows_to_matrix(self.rows, self.n)

    @property
    def n_recorded(self) -> int:
        return len(self.rows)

    @property
    def is_complete(self) -> bool:
        return self.rows == tuple((j,) for j in range(self.n))

    @property
    def max_span(self) -> int:
        return max((len(r) for r in self.rows), default=0)

    @property
    def kind(self) -> str:
        """'full', 'ragged' (any multi-link row) or 'missing'."""
        if self.is_complete:
            return "full"
        if self.max_span > 1:
            return "ragged"
        return "missing"

    def residual(self, x: np.ndarray) -> float:
        """Max-norm of ``G x - r``."""
        return float(np.max(np.abs(self.alignment @ x - self.recording)))

    def to_json(self) -> dict:
        return {
            "route": self.route_id,
            "bus": self.bus_id,
            "t0": self.start_time.isoformat() if self.start_time else None,
            "r": [float(v) for v in self.recording],
            "rows": [list(row) for row in self.rows],
            "n": self.n,
        }

    @classmethod
    def from_json(cls, d: dict, n: int | None = None) -> "Observation":
        rows = d["rows"]
        if "n" in d:
            n = int(d["n"])
        elif n is None:
            n = 1 + max(max(row) for row in rows)
        t0 = datetime.fromisoformat(d["t0"]) if d.get("t0") else None
        return cls(np.asarray(d["r"], dtype=float), rows, n,
                   route_id=str(d.get("route", "")), bus_id=str(d.get("bus", "")), start_time=t0)


def validate(obs: Observation) -> list[str]:
    """Check the alignment invariants; returns violations (empty means ok).

    Rows are reported 1-based to match how alignment matrices are usually
    written out.
    """
    out = []
    if obs.n_recorded > obs.n:
        out.append(f"more recorded values ({obs.n_recorded}) than links ({obs.n})")
    seen: dict[int, int] = {}
    for a, row in enumerate(obs.rows, start=1):
        if not row:
            out.append(f"empty row {a}")
            continue
        bad = [j for j in row if j < 0 or j >= obs.n]
        if bad:
            out.append(f"row {a} references links outside 0..{obs.n - 1}: {bad}")
        srt = sorted(row)
        if len(set(srt)) != len(srt):
            out.append(f"row {a} repeats a link")
        elif srt[-1] - srt[0] != len(srt) - 1:
            out.append(f"row {a} is not a run of consecutive links")
        for j in row:
            if j in seen and seen[j] != a:
                out.append(f"overlapping support: rows {seen[j]} and {a} share column {j + 1}")
            seen[j] = a
    if not np.all(np.isfinite(obs.recording)):
        out.append("recording contains non-finite values")
    return out


def least_norm_fill(obs: Observation, fallback_mean: Sequence[float]) -> np.ndarray:
    """A feasible latent vector: ``G x = r`` holds exactly.

    Singletons copy their recorded value; ragged sums are split in
    proportion to ``fallback_mean`` over the span (uniformly when that span
    sums to a non-positive value); unobserved links take ``fallback_mean``.
    """
    fallback_mean = np.asarray(fallback_mean, dtype=float)
    if fallback_mean.size != obs.n:
        raise ValueError(f"fallback_mean has length {fallback_mean.size}, expected {obs.n}")
    x = fallback_mean.copy()
    for value, row in zip(obs.recording, obs.rows):
        idx = list(row)
        if len(idx) == 1:
            x[idx[0]] = value
            continue
        w = fallback_mean[idx]
        total = w.sum()
        if total <= 0 or np.any(w < 0):
            x[idx] = value / len(idx)
        else:
            x[idx] = value * w / total
            # exact rebalancing of the rounding error onto the last link
            x[idx[-1]] = value - x[idx[:-1]].sum()
    return x


# -- route geometry --------------------------------------------------------

@dataclass(frozen=True)
class RoutePattern:
    """How one contributing route overlays the target route.

    ``covered`` lists inclusive link ranges ``(lo, hi)``; ``skip_stops`` are
    target stops the route never serves (a structural ragged span).
    """

    covered: tuple[tuple[int, int], ...]
    skip_stops: frozenset[int] = frozenset()

    def covered_links(self) -> list[int]:
        links: list[int] = []
        for lo, hi in self.covered:
            links.extend(range(lo, hi + 1))
        return links


@dataclass
class RouteGeometry:
    target_links: list[str]
    patterns: dict[str, RoutePattern] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.target_links)

    def __post_init__(self):
        for route, pat in self.patterns.items():
            prev = -1
            for lo, hi in pat.covered:
                if not (0 <= lo <= hi < self.n):
                    raise AlignmentError(f"route {route}: range ({lo}, {hi}) outside 0..{self.n - 1}")
                if lo <= prev:
                    raise AlignmentError(f"route {route}: covered ranges overlap or are unordered")
                prev = hi

    @classmethod
    def full(cls, n: int) -> "RouteGeometry":
        return cls([str(i) for i in range(n)], {"target": RoutePattern(((0, n - 1),))})


def build_alignment(geometry: RouteGeometry, route_id: str,
                    skipped_stops: Iterable[int] = ()) -> np.ndarray:
    """Alignment matrix for one run of ``route_id``.

    ``skipped_stops`` are merged with the route's structural skips. A
    skipped stop ``k`` joins links ``k - 1`` and ``k``; both must be covered
    by the same contiguous range.
    """
    return rows_to_matrix(alignment_rows(geometry, route_id, skipped_stops), geometry.n)


def alignment_rows(geometry: RouteGeometry, route_id: str, skipped_stops: Iterable[int] = ()) -> Rows:
    try:
        pat = geometry.patterns[route_id]
    except KeyError:
        raise AlignmentError(f"unknown route {route_id!r}") from None
    if not pat.covered:
        raise AlignmentError(f"route {route_id!r} covers no target links")
    skips = set(pat.skip_stops) | set(int(s) for s in skipped_stops)
    for k in sorted(skips):
        if not any(lo < k <= hi for lo, hi in pat.covered):
            raise AlignmentError(
                f"route {route_id!r}: skipped stop {k} touches a link that is not covered"
            )
    rows: list[tuple[int, ...]] = []
    for lo, hi in pat.covered:
        current = [lo]
        for j in range(lo + 1, hi + 1):
            if j in skips:
                current.append(j)
            else:
                rows.append(tuple(current))
                current = [j]
        rows.append(tuple(current))
    return tuple(rows)


# -- JSON lines ------------------------------------------------------------

def write_observations(observations: Iterable[Observation], path: str | Path) -> None:
    with open(path, "w") as fh:
        for obs in observations:
            fh.write(json.dumps(obs.to_json()) + "\n")


def read_observations(path: str | Path, n: int | None = None) -> list[Observation]:
    with open(path) as fh:
        return [Observation.from_json(json.loads(line), n=n) for line in fh if line.strip()]
