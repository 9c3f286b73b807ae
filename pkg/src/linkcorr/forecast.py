"""Conditional-Gaussian forecasting of link and trip travel times.

Predictive distributions are equal-weight mixtures over retained posterior
draws of ``(mu, Sigma)``; each component is the Gaussian conditional on the
observed links. ``mode="plugin"`` collapses the mixture to the single
component given by the posterior-mean parameters.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, stats

from .gaussian import DomainError, GaussianParams, condition
from .gibbs import PosteriorChain


def _components(chain: PosteriorChain, mode: str) -> list[GaussianParams]:
    if mode == "mix":
        return list(chain.draws())
    if mode == "plugin":
        return [chain.posterior_mean()]
    raise ValueError(f"unknown mode {mode!r}; expected 'mix' or 'plugin'")


def _check_sets(n: int, observed_idx, forecast_idx) -> tuple[np.ndarray, np.ndarray]:
    o = np.asarray(observed_idx, dtype=int).ravel()
    f = np.asarray(forecast_idx, dtype=int).ravel()
    if o.size == 0 or f.size == 0:
        raise ValueError("observed and forecast index sets must be non-empty")
    if np.intersect1d(o, f).size:
        raise ValueError("observed and forecast index sets overlap")
    for idx in (o, f):
        if idx.min() < 0 or idx.max() >= n:
            raise IndexError(f"link index out of range 0..{n - 1}")
    return o, f


def mixture_quantile(means: np.ndarray, sds: np.ndarray, q: float) -> float:
    """Quantile of an equal-weight Gaussian mixture."""
    means = np.asarray(means, dtype=float)
    sds = np.maximum(np.asarray(sds, dtype=float), 1e-12)
    if np.all(sds <= 1e-12) and np.ptp(means) == 0:
        return float(means[0])
    lo = float(np.min(means - 12 * sds))
    hi = float(np.max(means + 12 * sds))
    cdf = lambda x: float(np.mean(stats.norm.cdf((x - means) / sds))) - q
    return float(optimize.brentq(cdf, lo, hi, xtol=1e-10))


@dataclass
class LinkForecast:
    links: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    samples: np.ndarray          # (k, len(links)), one draw per component
    cond_means: np.ndarray       # (k, len(links))
    cond_covs: np.ndarray        # (k, len(links), len(links))
    model_mean: np.ndarray       # unconditional mean on the forecast links

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    @property
    def mean_correction(self) -> np.ndarray:
        """Conditional mean minus the model mean, per link."""
        return self.mean - self.model_mean

    def quantile(self, q: float) -> np.ndarray:
        sds = np.sqrt(np.einsum("kii->ki", self.cond_covs))
        return np.array([mixture_quantile(self.cond_means[:, a], sds[:, a], q)
                         for a in range(len(self.links))])


@dataclass
class TripForecast:
    links: np.ndarray
    mean: float
    var: float
    samples: np.ndarray
    comp_means: np.ndarray
    comp_vars: np.ndarray

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))

    def quantile(self, q: float) -> float:
        return mixture_quantile(self.comp_means, np.sqrt(self.comp_vars), q)


def forecast_links(chain: PosteriorChain, observed_idx: Sequence[int], observed_vals: Sequence[float],
                   forecast_idx: Sequence[int], mode: str = "mix",
                   rng: np.random.Generator | None = None) -> LinkForecast:
    o, f = _check_sets(chain.n, observed_idx, forecast_idx)
    v = np.asarray(observed_vals, dtype=float).ravel()
    rng = rng if rng is not None else np.random.default_rng(0)
    comps = _components(chain, mode)
    k, nf = len(comps), f.size
    means = np.empty((k, nf))
    covs = np.empty((k, nf, nf))
    model = np.empty((k, nf))
    for c, params in enumerate(comps):
        cond, rest = condition(params, o, v)
        pos = np.searchsorted(rest, f)
        means[c] = cond.mean[pos]
        covs[c] = cond.cov[np.ix_(pos, pos)]
        model[c] = params.mean[f]
    # law of total variance over the equal-weight mixture
    var = np.einsum("kii->ki", covs).mean(axis=0) + means.var(axis=0)
    Z = rng.standard_normal((k, nf))
    samples = np.empty((k, nf))
    for c in range(k):
        L = np.linalg.cholesky(covs[c] + 1e-12 * np.eye(nf) * max(np.trace(covs[c]), 1.0))
        samples[c] = means[c] + L @ Z[c]
    return LinkForecast(f, means.mean(axis=0), var, samples, means, covs, model.mean(axis=0))


def predictive_mean_operator(chain: PosteriorChain, observed_idx: Sequence[int],
                             forecast_idx: Sequence[int], mode: str = "mix") -> tuple[np.ndarray, np.ndarray]:
    """``(a, B)`` such that the predictive mean for observed values ``v`` is ``a + B @ v``.

    Every conditional mean is affine in ``v``, and so is their average, which
    makes scoring many held-out rows cheap.
    """
    o, f = _check_sets(chain.n, observed_idx, forecast_idx)
    comps = _components(chain, mode)
    a = np.zeros(f.size)
    B = np.zeros((f.size, o.size))
    for params in comps:
        S = params.cov
        c = linalg.cho_factor(S[np.ix_(o, o)], lower=True)
        K = linalg.cho_solve(c, S[np.ix_(o, f)]).T
        a += params.mean[f] - K @ params.mean[o]
        B += K
    return a / len(comps), B / len(comps)


def forecast_trip(chain: PosteriorChain, observed_idx: Sequence[int], observed_vals: Sequence[float],
                  trip_links: Sequence[int], mode: str = "mix",
                  rng: np.random.Generator | None = None) -> TripForecast:
    """Predictive distribution of the total travel time over ``trip_links``.

    Observed links in the trip contribute their observed values.
    """
    o = np.asarray(observed_idx, dtype=int).ravel()
    v = np.asarray(observed_vals, dtype=float).ravel()
    trip = np.asarray(trip_links, dtype=int).ravel()
    if trip.size == 0:
        raise ValueError("trip_links is empty")
    observed_part = float(sum(v[np.flatnonzero(o == j)[0]] for j in trip if j in o))
    unobserved = np.array([j for j in trip if j not in o], dtype=int)
    rng = rng if rng is not None else np.random.default_rng(0)
    if unobserved.size == 0:
        k = len(_components(chain, mode))
        zeros = np.zeros(k)
        return TripForecast(trip, observed_part, 0.0, np.full(k, observed_part),
                            np.full(k, observed_part), zeros)
    fc = forecast_links(chain, o, v, unobserved, mode=mode, rng=rng)
    comp_means = fc.cond_means.sum(axis=1) + observed_part
    comp_vars = fc.cond_covs.sum(axis=(1, 2))
    var = float(comp_vars.mean() + comp_means.var())
    samples = fc.samples.sum(axis=1) + observed_part
    return TripForecast(trip, float(comp_means.mean()), var, samples, comp_means, comp_vars)


def historical_average(train, forecast_idx: Sequence[int]) -> np.ndarray:
    train = np.atleast_2d(np.asarray(train, dtype=float))
    if train.shape[0] == 0 or train.size == 0:
        raise ValueError("empty training set")
    return train[:, np.asarray(forecast_idx, dtype=int)].mean(axis=0)


@dataclass
class Score:
    rmse: float
    mape: float
    excluded: list = field(default_factory=list)

    def __iter__(self):
        yield self.rmse
        yield self.mape


def score(y_true, y_pred, lenient: bool = False) -> Score:
    """RMSE and MAPE over all entries.

    Entries with ``|y_true| < 1e-9`` make MAPE undefined: they raise unless
    ``lenient`` is set, in which case they are left out of MAPE and listed
    in ``Score.excluded``.
    """
    y = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {p.shape}")
    err = y - p
    rmse = float(np.sqrt(np.mean(err ** 2)))
    zero = np.abs(y) < 1e-9
    excluded = [tuple(int(i) for i in ix) for ix in np.argwhere(zero)]
    if excluded and not lenient:
        raise DomainError(f"MAPE undefined: zero true values at {excluded}")
    if excluded:
        warnings.warn(f"MAPE excludes {len(excluded)} zero-valued entries", RuntimeWarning)
    keep = ~zero
    mape = float(np.mean(np.abs(err[keep] / y[keep]))) if keep.any() else float("nan")
    return Score(rmse, mape, excluded)


def write_link_forecasts(rows: Sequence[tuple[int, LinkForecast]], path: str | Path) -> None:
    """CSV with 1-based link numbers: row, link, mean, std, q025, q975."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "link", "mean", "std", "q025", "q975"])
        for row, fc in rows:
            lo, hi = fc.quantile(0.025), fc.quantile(0.975)
            for a, link in enumerate(fc.links):
                w.writerow([row, int(link) + 1, repr(float(fc.mean[a])), repr(float(fc.std[a])),
                            repr(float(lo[a])), repr(float(hi[a]))])


def write_trip_forecasts(rows: Sequence[tuple[int, list[TripForecast]]], path: str | Path) -> None:
    """CSV of cumulative trips: row, last_link, mean, std, q025, q975."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "last_link", "mean", "std", "q025", "q975"])
        for row, trips in rows:
            for t in trips:
                w.writerow([row, int(t.links.max()) + 1, repr(t.mean), repr(t.std),
                            repr(t.quantile(0.025)), repr(t.quantile(0.975))])
