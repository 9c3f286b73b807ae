"""Synthetic benchmark: graph-kernel covariance on a route, corrupted samples.

The kernel is ``K = expm(beta * L)`` with ``L`` the symmetric-normalized
Laplacian of the route chain plus extra "virtual" adjacencies. Note that the
sign convention is ``+beta``; the usual diffusion kernel is obtained by
passing a negative ``beta``. ``sigma`` multiplies the correlation matrix, so
it is a *variance* (every diagonal entry of the covariance equals sigma).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .gaussian import GaussianParams, matrix_to_json, sample_gaussian
from .observation import Observation, write_observations

BENCHMARK_MEAN = (14, 15, 18, 13, 17, 15, 10, 24, 15, 11, 12, 15, 9, 13, 17, 15, 19, 21)


@dataclass(frozen=True)
class KernelSpec:
    n_links: int
    extra_edges: tuple[tuple[int, int], ...] = ()   # 0-based link pairs
    beta: float = 3.0
    sigma: float = 10.0

    def __post_init__(self):
        if self.n_links < 1:
            raise ValueError("n_links must be positive")
        edges = []
        for i, j in self.extra_edges:
            if i == j or not (0 <= i < self.n_links and 0 <= j < self.n_links):
                raise ValueError(f"invalid extra edge ({i}, {j})")
            edges.append((min(i, j), max(i, j)))
        object.__setattr__(self, "extra_edges", tuple(sorted(set(edges))))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def benchmark_kernel(beta: float = 3.0, sigma: float = 10.0) -> KernelSpec:
    """18-link route with virtual adjacencies (4,13), (5,12), (7,15) in 1-based numbering."""
    return KernelSpec(18, ((3, 12), (4, 11), (6, 14)), beta, sigma)


def adjacency(spec: KernelSpec) -> np.ndarray:
    n = spec.n_links
    A = np.zeros((n, n))
    idx = np.arange(n - 1)
    A[idx, idx + 1] = A[idx + 1, idx] = 1.0
    for i, j in spec.extra_edges:
        A[i, j] = A[j, i] = 1.0
    return A


def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    d = A.sum(axis=1)
    if np.any(d == 0):
        raise ValueError(f"isolated vertex {int(np.flatnonzero(d == 0)[0])}: degree is zero")
    s = 1.0 / np.sqrt(d)
    L = np.eye(len(d)) - s[:, None] * A * s[None, :]
    return 0.5 * (L + L.T)


def expm_symmetric(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    K = (V * np.exp(w)) @ V.T
    return 0.5 * (K + K.T)


def graph_kernel_covariance(spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(corr, cov)`` for the kernel spec."""
    if spec.n_links == 1:
        return np.ones((1, 1)), np.full((1, 1), float(spec.sigma))
    L = normalized_laplacian(adjacency(spec))
    K = expm_symmetric(spec.beta * L)
    s = 1.0 / np.sqrt(np.diag(K))
    corr = s[:, None] * K * s[None, :]
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr, spec.sigma * corr


@dataclass(frozen=True)
class RouteDraw:
    """Samples assigned to a contributing route covering links ``lo..hi`` (inclusive)."""

    route_id: str
    coverage: tuple[int, int]
    count: int
    skip_stops: tuple[int, ...] = ()


@dataclass(frozen=True)
class SyntheticDesign:
    full: int = 80
    ragged: int = 80
    ragged_skips: tuple[int, ...] = (5,)   # stop 5 joins links 4 and 5 (links #5 + #6)
    target_route: str = "route1"
    routes: tuple[RouteDraw, ...] = (
        RouteDraw("route2", (0, 11), 80),
        RouteDraw("route3", (4, 17), 80),
    )

    @property
    def total(self) -> int:
        return self.full + self.ragged + sum(r.count for r in self.routes)


@dataclass
class SyntheticDataset:
    observations: list[Observation]
    truth: GaussianParams
    corr: np.ndarray
    complete: np.ndarray          # the uncorrupted draws, one row per observation
    kinds: list[str] = field(default_factory=list)

    def select(self, kinds: Sequence[str]) -> list[Observation]:
        return [o for o, k in zip(self.observations, self.kinds) if k in kinds]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_observations(self.observations, directory / "observations.jsonl")
        truth = {"mean": [float(v) for v in self.truth.mean],
                 "cov": matrix_to_json(self.truth.cov), "corr": matrix_to_json(self.corr)}
        (directory / "truth.json").write_text(json.dumps(truth))


def _rows_for(lo: int, hi: int, skips: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    rows, current = [], [lo]
    for j in range(lo + 1, hi + 1):
        if j in skips:
            current.append(j)
        else:
            rows.append(tuple(current))
            current = [j]
    rows.append(tuple(current))
    return tuple(rows)


def generate_dataset(spec: KernelSpec, mean: Sequence[float], design: SyntheticDesign,
                     rng: np.random.Generator, total: int | None = None,
                     start_time: datetime | None = None) -> SyntheticDataset:
    """Draw complete samples and corrupt them according to ``design``.

    Samples are assigned in order: full observations of the target route,
    ragged ones, then each contributing route. ``total`` draws more samples
    than needed (the surplus is discarded); fewer raises.
    """
    mean = np.asarray(mean, dtype=float)
    n = spec.n_links
    if mean.size != n:
        raise ValueError(f"mean has length {mean.size}, expected {n}")
    need = design.total
    total = need if total is None else total
    if need > total:
        raise ValueError(f"design needs {need} samples but only {total} are drawn")
    corr, cov = graph_kernel_covariance(spec)
    truth = GaussianParams(mean, cov)
    X = sample_gaussian(truth, rng, size=total)[:need]

    obs, kinds = [], []
    identity = tuple((j,) for j in range(n))
    pos = 0

    def add(x, rows, route, kind):
        nonlocal pos
        r = np.array([x[list(row)].sum() for row in rows])
        obs.append(Observation(r, rows, n, route_id=route, bus_id=f"b{pos}", start_time=start_time))
        kinds.append(kind)
        pos += 1

    for x in X[:design.full]:
        add(x, identity, design.target_route, "full")
    ragged_rows = _rows_for(0, n - 1, design.ragged_skips)
    for x in X[design.full:design.full + design.ragged]:
        add(x, ragged_rows, design.target_route, "ragged")
    start = design.full + design.ragged
    for route in design.routes:
        lo, hi = route.coverage
        rows = _rows_for(lo, hi, route.skip_stops)
        kind = "ragged" if route.skip_stops else ("full" if (lo, hi) == (0, n - 1) else "missing")
        for x in X[start:start + route.count]:
            add(x, rows, route.route_id, kind)
        start += route.count
    return SyntheticDataset(obs, truth, corr, X, kinds)


def benchmark_dataset(seed: int, beta: float = 3.0, sigma: float = 10.0) -> SyntheticDataset:
    """The 18-link benchmark: 80 full + 80 ragged on route 1, 80 each on routes 2 and 3."""
    return generate_dataset(benchmark_kernel(beta, sigma), BENCHMARK_MEAN, SyntheticDesign(),
                            np.random.default_rng(seed))


def spec_from_dict(d: dict) -> tuple[KernelSpec, np.ndarray, SyntheticDesign]:
    """Parse a synthetic spec JSON object; missing keys fall back to the 18-link benchmark.

    Link numbers in the JSON are 1-based, as on a route diagram. A skipped
    stop is named by the link it follows: ``"skip_after": [5]`` merges
    links #5 and #6.
    """
    kd = d.get("kernel", {})
    default = benchmark_kernel()
    n = int(kd.get("n_links", default.n_links))
    if "extra_edges" in kd:
        edges = tuple((int(i) - 1, int(j) - 1) for i, j in kd["extra_edges"])
    else:
        edges = default.extra_edges if n == default.n_links else ()
    spec = KernelSpec(n, edges, float(kd.get("beta", default.beta)), float(kd.get("sigma", default.sigma)))
    mean = np.asarray(d.get("mean", BENCHMARK_MEAN if n == len(BENCHMARK_MEAN) else np.zeros(n)), dtype=float)
    dd = d.get("design", {})
    base = SyntheticDesign()
    if "routes" in dd:
        routes = tuple(
            RouteDraw(str(r.get("route", f"route{k + 2}")), (int(r["from"]) - 1, int(r["to"]) - 1),
                      int(r["count"]), tuple(int(s) for s in r.get("skip_after", ())))
            for k, r in enumerate(dd["routes"])
        )
    else:
        routes = base.routes
    design = SyntheticDesign(
        full=int(dd.get("full", base.full)),
        ragged=int(dd.get("ragged", base.ragged)),
        ragged_skips=tuple(int(s) for s in dd.get("ragged_skip_after", base.ragged_skips)),
        routes=routes,
    )
    return spec, mean, design
