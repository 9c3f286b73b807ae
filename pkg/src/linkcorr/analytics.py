"""Posterior summaries: credible intervals, ROPE equivalence tests, Gaussian KL."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .gaussian import DomainError, GaussianParams, PositiveDefiniteError, cholesky

ROPE = (-0.05, 0.05)
REJECT_THRESHOLD = 0.05
ACCEPT_THRESHOLD = 0.95

REJECT, ACCEPT, UNDECIDED = "reject_null", "accept_null", "undecided"


@dataclass(frozen=True)
class RopeDecision:
    entry: tuple[int, int]
    posterior_mean: float
    ci_low: float
    ci_high: float
    fraction_in_rope: float
    verdict: str


def credible_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval from empirical quantiles.

    Quantiles interpolate linearly between order statistics with plotting
    position ``(k - 1) / (N - 1)``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def fraction_in_rope(samples: Sequence[float], rope: tuple[float, float] = ROPE) -> float:
    x = np.asarray(samples, dtype=float)
    return float(np.mean((x > rope[0]) & (x < rope[1])))


def verdict(fraction: float, reject_threshold: float = REJECT_THRESHOLD,
            accept_threshold: float = ACCEPT_THRESHOLD) -> str:
    if fraction < reject_threshold:
        return REJECT
    if fraction > accept_threshold:
        return ACCEPT
    return UNDECIDED


def rope_test(samples: Sequence[float], rope: tuple[float, float] = ROPE,
              reject_threshold: float = REJECT_THRESHOLD, accept_threshold: float = ACCEPT_THRESHOLD,
              level: float = 0.95, entry: tuple[int, int] = (0, 0)) -> RopeDecision:
    """Equivalence test of a null value against the share of posterior mass inside ``rope``.

    The null is rejected when that share falls below ``reject_threshold``
    and accepted when it exceeds ``accept_threshold``.
    """
    if not rope[0] < rope[1]:
        raise ValueError("rope must satisfy low < high")
    x = np.asarray(samples, dtype=float)
    frac = fraction_in_rope(x, rope)
    lo, hi = credible_interval(x, level)
    return RopeDecision(entry, float(x.mean()), lo, hi, frac,
                        verdict(frac, reject_threshold, accept_threshold))


def chain_decisions(corr_samples: np.ndarray, rope: tuple[float, float] = ROPE,
                    reject_threshold: float = REJECT_THRESHOLD, accept_threshold: float = ACCEPT_THRESHOLD,
                    level: float = 0.95) -> list[RopeDecision]:
    """ROPE decisions for every upper-triangle entry of a stack of correlation samples."""
    corr_samples = np.asarray(corr_samples)
    n = corr_samples.shape[1]
    out = []
    for i, j in zip(*np.triu_indices(n, 1)):
        out.append(rope_test(corr_samples[:, i, j], rope, reject_threshold, accept_threshold,
                             level, entry=(int(i), int(j))))
    return out


def threshold_display(corr: np.ndarray, decisions: Iterable[RopeDecision]) -> np.ndarray:
    """Zero every correlation whose null value was not rejected."""
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    by_entry = {}
    for d in decisions:
        i, j = d.entry
        by_entry[(min(i, j), max(i, j))] = d.verdict
    out = np.eye(n)
    for i, j in zip(*np.triu_indices(n, 1)):
        key = (int(i), int(j))
        if key not in by_entry:
            raise KeyError(f"no decision for entry {key}")
        if by_entry[key] == REJECT:
            out[i, j] = out[j, i] = corr[i, j]
    return out


def threshold_truth(corr: np.ndarray, rope: tuple[float, float] = ROPE) -> np.ndarray:
    """Zero true correlations that lie inside the ROPE, keeping the diagonal."""
    corr = np.array(corr, dtype=float)
    inside = (corr > rope[0]) & (corr < rope[1])
    np.fill_diagonal(inside, False)
    corr[inside] = 0.0
    return corr


def misclassification_rate(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Share of off-diagonal pairs whose zero / non-zero status disagrees."""
    iu = np.triu_indices(np.asarray(truth).shape[0], 1)
    return float(np.mean((np.asarray(estimate)[iu] != 0) != (np.asarray(truth)[iu] != 0)))


def kl_gaussian(p: GaussianParams, q: GaussianParams) -> float:
    """``KL(p || q)`` with ``p`` the reference and ``q`` the estimate."""
    if p.n != q.n:
        raise ValueError(f"dimension mismatch: {p.n} vs {q.n}")
    try:
        Lp = cholesky(p.cov)
        Lq = cholesky(q.cov)
    except PositiveDefiniteError as exc:
        raise DomainError(f"KL needs positive definite covariances: {exc}") from None
    logdet_ratio = 2.0 * (np.sum(np.log(np.diag(Lq))) - np.sum(np.log(np.diag(Lp))))
    M = linalg.solve_triangular(Lq, Lp, lower=True)
    trace = float(np.sum(M * M))
    dz = linalg.solve_triangular(Lq, q.mean - p.mean, lower=True)
    kl = 0.5 * (logdet_ratio - p.n + trace + float(dz @ dz))
    return max(kl, 0.0)


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction.

    ``chains`` has shape (n_chains, n_draws, ...); each chain is cut in half
    and the usual between/within variance ratio is computed per parameter.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    n_draws = chains.shape[1] // 2
    if n_draws < 2:
        raise ValueError("need at least 4 draws per chain")
    halves = np.concatenate([chains[:, :n_draws], chains[:, n_draws:2 * n_draws]], axis=0)
    W = halves.var(axis=1, ddof=1).mean(axis=0)
    B = n_draws * halves.mean(axis=1).var(axis=0, ddof=1)
    var_plus = (n_draws - 1) / n_draws * W + B / n_draws
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    return np.where(W > 0, rhat, 1.0)


def energy_test(x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                n_perm: int = 199) -> tuple[float, float]:
    """Two-sample energy-distance permutation test; returns (statistic, p-value)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    y = y[:, None] if y.ndim == 1 else y
    z = np.vstack([x, y])
    nx, n = x.shape[0], z.shape[0]
    D = cdist(z, z)

    def stat(idx):
        a, b = idx[:nx], idx[nx:]
        return (2.0 * D[np.ix_(a, b)].mean() - D[np.ix_(a, a)].mean() - D[np.ix_(b, b)].mean())

    e0 = stat(np.arange(n))
    exceed = sum(stat(rng.permutation(n)) >= e0 for _ in range(n_perm))
    return float(e0), (exceed + 1) / (n_perm + 1)


def write_decisions(decisions: Iterable[RopeDecision], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "mean", "ci_low", "ci_high", "fraction_in_rope", "verdict"])
        for d in decisions:
            w.writerow([d.entry[0], d.entry[1], repr(d.posterior_mean), repr(d.ci_low),
                        repr(d.ci_high), repr(d.fraction_in_rope), d.verdict])


def read_decisions(path: str | Path) -> list[RopeDecision]:
    with open(path, newline="") as fh:
        return [RopeDecision((int(r["i"]), int(r["j"])), float(r["mean"]), float(r["ci_low"]),
                             float(r["ci_high"]), float(r["fraction_in_rope"]), r["verdict"])
                for r in csv.DictReader(fh)]
