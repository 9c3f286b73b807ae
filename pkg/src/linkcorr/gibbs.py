"""Gibbs sampler for the mean and covariance of link travel times.

Each sweep draws ``(mu, Sigma)`` from the NIW posterior given the current
latent link-time vectors, then redraws every latent vector from the
Gaussian restricted to its observation's constraint set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .gaussian import GaussianParams, batch_cov_to_corr
from .hyperplane import BatchPlan, SingularConstraintError
from .niw import NIWParams, default_prior, draw_niw, update_from_stats
from .observation import Observation, least_norm_fill

log = logging.getLogger(__name__)

CHAIN_FORMAT = "linkcorr-chain/1"


@dataclass(frozen=True)
class GibbsConfig:
    k1: int = 10000
    k2: int = 5000
    seed: int = 0
    thin: int = 1
    jitter: bool = True
    # Run the sampler on travel times minus per-link empirical means, so that
    # the prior mean refers to deviations rather than raw seconds.
    center: bool = True
    workers: int = 1
    check_every: int = 100

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be non-negative")
        if self.k2 < 1:
            raise ValueError("k2 must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")


@dataclass
class PosteriorChain:
    corr_samples: np.ndarray   # (k, n, n)
    cov_samples: np.ndarray    # (k, n, n)
    mean_samples: np.ndarray   # (k, n)
    config: GibbsConfig = field(default_factory=GibbsConfig)
    prior: NIWParams | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.mean_samples)
        if k < 1 or len(self.cov_samples) != k or len(self.corr_samples) != k:
            raise ValueError("sample lists must have equal, non-zero length")

    def __len__(self) -> int:
        return len(self.mean_samples)

    @property
    def n(self) -> int:
        return self.mean_samples.shape[1]

    def posterior_mean(self) -> GaussianParams:
        """Plug-in Gaussian from the posterior means of ``mu`` and ``Sigma``."""
        cov = self.cov_samples.mean(axis=0)
        return GaussianParams(self.mean_samples.mean(axis=0), 0.5 * (cov + cov.T))

    def draws(self):
        for mu, cov in zip(self.mean_samples, self.cov_samples):
            yield GaussianParams(mu, cov)

    def save(self, directory: str | Path) -> None:
        save_chain(self, directory)

    @classmethod
    def load(cls, directory: str | Path) -> "PosteriorChain":
        return load_chain(directory)


def link_means(observations: Sequence[Observation], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-link empirical means and a mask of links seen as singletons.

    Links never recorded alone fall back to the average per-link share of
    the ragged values covering them, and to 0 when never covered at all.
    """
    s_sum, s_cnt = np.zeros(n), np.zeros(n)
    r_sum, r_cnt = np.zeros(n), np.zeros(n)
    for obs in observations:
        for value, row in zip(obs.recording, obs.rows):
            if len(row) == 1:
                s_sum[row[0]] += value
                s_cnt[row[0]] += 1
            else:
                idx = list(row)
                r_sum[idx] += value / len(idx)
                r_cnt[idx] += 1
    singleton = s_cnt > 0
    means = np.zeros(n)
    means[singleton] = s_sum[singleton] / s_cnt[singleton]
    ragged_only = ~singleton & (r_cnt > 0)
    means[ragged_only] = r_sum[ragged_only] / r_cnt[ragged_only]
    return means, singleton


def initial_latents(observations: Sequence[Observation], fallback: np.ndarray) -> np.ndarray:
    return np.stack([least_norm_fill(obs, fallback) for obs in observations])


def run_gibbs(observations: Sequence[Observation], prior: NIWParams | None = None,
              config: GibbsConfig | None = None) -> PosteriorChain:
    if not observations:
        raise ValueError("no observations")
    config = config or GibbsConfig()
    n = observations[0].n
    prior = prior or default_prior(n)
    if prior.n != n:
        raise ValueError(f"prior has n = {prior.n}, observations have n = {n}")

    plan = BatchPlan(observations)
    means, seen = link_means(observations, n)
    offset = means if config.center else np.zeros(n)
    work = plan.shifted(offset)

    fallback = np.where(seen, means, prior.mu0 + offset)
    X = initial_latents(observations, fallback) - offset
    m = X.shape[0]

    rng = np.random.default_rng(config.seed)
    n_keep = len(range(0, config.k2, config.thin))
    mus = np.empty((n_keep, n))
    covs = np.empty((n_keep, n, n))
    kept = 0
    total = config.k1 + config.k2
    for it in range(total):
        xbar = X.mean(axis=0)
        D = X - xbar
        post = update_from_stats(prior, m, xbar, D.T @ D)
        draw, L = draw_niw(post, rng, jitter=config.jitter)
        mu, sigma = draw.mean, draw.cov
        if it >= config.k1 and (it - config.k1) % config.thin == 0:
            mus[kept] = mu + offset
            covs[kept] = sigma
            kept += 1
        try:
            X = work.draw(draw, rng, chol=L, workers=config.workers,
                          jitter=config.jitter)
        except SingularConstraintError as exc:
            raise SingularConstraintError(f"iteration {it}: {exc}", exc.condition, exc.index) from exc
        if config.check_every and (it + 1) % config.check_every == 0:
            worst = work.max_residual(X)
            if worst > 1e-8:
                raise RuntimeError(f"iteration {it}: constraint residual {worst:.3g} exceeds 1e-8")
        if (it + 1) % 1000 == 0:
            log.debug("gibbs iteration %d / %d", it + 1, total)

    return PosteriorChain(batch_cov_to_corr(covs), covs, mus, config=config, prior=prior, offset=offset)


def posterior_mean_corr(chain: PosteriorChain) -> np.ndarray:
    corr = chain.corr_samples.mean(axis=0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


# -- persistence -----------------------------------------------------------

_ARRAYS = ("mean_samples", "cov_samples", "corr_samples")


def save_chain(chain: PosteriorChain, directory: str | Path) -> None:
    """Write ``config.json``, ``prior.json``, ``manifest.json`` and one ``.npy`` per sample array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(json.dumps(asdict(chain.config), indent=2, sort_keys=True))
    prior = chain.prior.to_dict() if chain.prior is not None else None
    (directory / "prior.json").write_text(json.dumps(prior, sort_keys=True))
    manifest = {
        "format": CHAIN_FORMAT,
        "n": chain.n,
        "samples": len(chain),
        "offset": None if chain.offset is None else [float(v) for v in chain.offset],
        "arrays": {},
    }
    for name in _ARRAYS:
        arr = np.ascontiguousarray(getattr(chain, name), dtype="<f8")
        np.save(directory / f"{name}.npy", arr, allow_pickle=False)
        manifest["arrays"][name] = {"file": f"{name}.npy", "shape": list(arr.shape), "dtype": "<f8"}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_chain(directory: str | Path) -> PosteriorChain:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format") != CHAIN_FORMAT:
        raise ValueError(f"unrecognised chain format {manifest.get('format')!r}")
    arrays = {}
    for name, meta in manifest["arrays"].items():
        arr = np.load(directory / meta["file"], allow_pickle=False)
        if list(arr.shape) != meta["shape"]:
            raise ValueError(f"{name}: shape {arr.shape} does not match manifest {meta['shape']}")
        arrays[name] = arr
    config = GibbsConfig(**json.loads((directory / "config.json").read_text()))
    prior_d = json.loads((directory / "prior.json").read_text())
    prior = NIWParams.from_dict(prior_d) if prior_d else None
    offset = np.asarray(manifest["offset"]) if manifest.get("offset") is not None else None
    return PosteriorChain(arrays["corr_samples"], arrays["cov_samples"], arrays["mean_samples"],
                          config=config, prior=prior, offset=offset)
