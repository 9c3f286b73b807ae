"""Sampling a Gaussian restricted to the affine set ``{x : G x = r}``.

The sampler draws ``y ~ N(mu, Sigma)`` and projects it onto the constraint
set along ``Sigma G^T``::

    (G Sigma G^T) alpha = r - G y
    x = y + Sigma G^T alpha

which is an exact draw from the conditional Gaussian. Observations that
share an alignment pattern share the factorization of ``G Sigma G^T``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .gaussian import GaussianParams, PositiveDefiniteError, jitter_repair
from .observation import Observation, Rows, rows_to_matrix

MAX_CONDITION = 1e12


class SingularConstraintError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition: float = np.inf, index: int | None = None):
        super().__init__(message)
        self.condition = condition
        self.index = index


@dataclass
class PatternGroup:
    rows: Rows
    G: np.ndarray         # (n_i, n)
    indices: np.ndarray   # positions in the input batch
    R: np.ndarray         # (k, n_i) stacked recordings


def _gram_factor(cov: np.ndarray, G: np.ndarray):
    """Cholesky of ``G cov G^T`` and a 1-norm condition estimate."""
    SG = cov @ G.T
    gram = G @ SG
    c, info = lapack.dpotrf(gram, lower=1, clean=1)
    if info != 0:
        return SG, None, np.inf
    anorm = np.max(np.sum(np.abs(gram), axis=0))
    rcond, info = lapack.dpocon(c, anorm, uplo="L")
    cond = np.inf if rcond <= 0 else 1.0 / rcond
    return SG, c, cond


class BatchPlan:
    """Observations grouped by alignment pattern, ready for repeated draws."""

    def __init__(self, observations: Sequence[Observation]):
        if not observations:
            raise ValueError("no observations")
        n = observations[0].n
        by_rows: dict[Rows, list[int]] = {}
        for i, obs in enumerate(observations):
            if obs.n != n:
                raise ValueError(f"observation {i} has n = {obs.n}, expected {n}")
            by_rows.setdefault(obs.rows, []).append(i)
        self.n = n
        self.m = len(observations)
        self.groups = [
            PatternGroup(rows, rows_to_matrix(rows, n), np.asarray(idx),
                         np.stack([observations[i].recording for i in idx]))
            for rows, idx in by_rows.items()
        ]

    def shifted(self, offset: np.ndarray) -> "BatchPlan":
        """Same plan for latent ``x - offset`` (recordings become ``r - G offset``)."""
        new = object.__new__(BatchPlan)
        new.n, new.m = self.n, self.m
        new.groups = [PatternGroup(g.rows, g.G, g.indices, g.R - offset @ g.G.T) for g in self.groups]
        return new

    def _project(self, group: PatternGroup, cov: np.ndarray, Y: np.ndarray, jitter: bool) -> np.ndarray:
        SG, c, cond = _gram_factor(cov, group.G)
        if cond > MAX_CONDITION and jitter:
            try:
                SG, c, cond = _gram_factor(jitter_repair(cov), group.G)
            except PositiveDefiniteError:
                c, cond = None, np.inf
        if c is None or cond > MAX_CONDITION:
            raise SingularConstraintError(
                f"G Sigma G^T is singular or ill-conditioned (condition estimate {cond:.3g}) "
                f"for observation {int(group.indices[0])}",
                condition=cond, index=int(group.indices[0]),
            )
        Yg = Y[group.indices]
        alpha = linalg.cho_solve((c, True), (group.R - Yg @ group.G.T).T)
        return Yg + (SG @ alpha).T

    def draw(self, params: GaussianParams, rng: np.random.Generator, chol: np.ndarray | None = None,
             workers: int = 1, jitter: bool = True) -> np.ndarray:
        """One joint draw for every observation, rows in input order.

        All standard normals are taken from ``rng`` up front in input
        order, so the result does not depend on ``workers``.
        """
        L = params.chol(jitter=jitter) if chol is None else chol
        Z = rng.standard_normal((self.m, self.n))
        Y = params.mean + Z @ L.T
        X = np.empty_like(Y)
        if workers <= 1 or len(self.groups) == 1:
            parts = [self._project(g, params.cov, Y, jitter) for g in self.groups]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda g: self._project(g, params.cov, Y, jitter), self.groups))
        for g, part in zip(self.groups, parts):
            X[g.indices] = part
        return X

    def max_residual(self, X: np.ndarray) -> float:
        """Largest relative constraint violation over the batch."""
        worst = 0.0
        for g in self.groups:
            res = np.abs(X[g.indices] @ g.G.T - g.R)
            scale = np.maximum(1.0, np.max(np.abs(g.R), axis=1))
            worst = max(worst, float(np.max(np.max(res, axis=1) / scale)))
        return worst


def sample_truncated(params: GaussianParams, observation: Observation, rng: np.random.Generator,
                     jitter: bool = True) -> np.ndarray:
    return BatchPlan([observation]).draw(params, rng, jitter=jitter)[0]


def sample_truncated_batch(params: GaussianParams, observations: Sequence[Observation],
                           rng: np.random.Generator, workers: int = 1, jitter: bool = True) -> list[np.ndarray]:
    X = BatchPlan(observations).draw(params, rng, workers=workers, jitter=jitter)
    return list(X)


def sample_constrained(params: GaussianParams, G: np.ndarray, r: np.ndarray, rng: np.random.Generator,
                       size: int) -> np.ndarray:
    """``size`` independent draws for a single ``(G, r)``; ``G`` may be any full-row-rank matrix."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    group = PatternGroup((), G, np.arange(size), np.broadcast_to(np.asarray(r, dtype=float), (size, G.shape[0])))
    plan = object.__new__(BatchPlan)
    plan.n, plan.m, plan.groups = params.n, size, [group]
    return plan.draw(params, rng)
