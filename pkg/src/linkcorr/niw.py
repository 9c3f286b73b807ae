"""Gaussian-inverse-Wishart prior and its conjugate update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gaussian import GaussianParams, PositiveDefiniteError, cholesky, matrix_from_json, matrix_to_json


@dataclass(frozen=True)
class NIWParams:
    """``Sigma ~ IW(psi0, nu0)``, ``mu | Sigma ~ N(mu0, Sigma / lambda0)``."""

    mu0: np.ndarray
    lambda0: float
    psi0: np.ndarray
    nu0: float

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        psi0 = np.atleast_2d(np.asarray(self.psi0, dtype=float))
        n = mu0.size
        if psi0.shape != (n, n):
            raise ValueError(f"psi0 shape {psi0.shape} does not match mu0 length {n}")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not self.nu0 >= n:
            raise ValueError(f"nu0 must be at least n = {n}")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "nu0", float(self.nu0))

    @property
    def n(self) -> int:
        return self.mu0.size

    def to_dict(self) -> dict:
        return {"mu0": self.mu0.tolist(), "lambda0": self.lambda0,
                "psi0": matrix_to_json(self.psi0), "nu0": self.nu0}

    @classmethod
    def from_dict(cls, d: dict) -> "NIWParams":
        return cls(np.asarray(d["mu0"], dtype=float), d["lambda0"],
                   matrix_from_json(d["psi0"]), d["nu0"])


def default_prior(n: int) -> NIWParams:
    """Zero mean, ``lambda0 = 10``, identity scale and ``nu0 = n + 2``."""
    if n < 1:
        raise ValueError("n must be positive")
    return NIWParams(np.zeros(n), 10.0, np.eye(n), n + 2)


def update_from_stats(prior: NIWParams, m: int, xbar: np.ndarray, scatter: np.ndarray) -> NIWParams:
    """Conjugate update from sufficient statistics (count, mean, centred scatter)."""
    if m == 0:
        return prior
    lam = prior.lambda0
    d = xbar - prior.mu0
    mu = (lam * prior.mu0 + m * xbar) / (lam + m)
    psi = prior.psi0 + scatter + (lam * m / (lam + m)) * np.outer(d, d)
    psi = 0.5 * (psi + psi.T)
    return NIWParams(mu, lam + m, psi, prior.nu0 + m)


def posterior_update(prior: NIWParams, X) -> NIWParams:
    """Posterior NIW given complete vectors ``X`` (rows)."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return prior
    X = np.atleast_2d(X)
    if X.shape[1] != prior.n:
        raise ValueError(f"data have {X.shape[1]} columns, prior has n = {prior.n}")
    m = X.shape[0]
    xbar = X.mean(axis=0)
    D = X - xbar
    return update_from_stats(prior, m, xbar, D.T @ D)


def sample_inverse_wishart(psi: np.ndarray, nu: float, rng: np.random.Generator,
                           psi_chol: np.ndarray | None = None) -> np.ndarray:
    """Draw ``Sigma ~ IW(psi, nu)`` by the Bartlett construction.

    With ``psi = U U^T`` and ``A`` the Bartlett factor of ``W(I, nu)``,
    ``Sigma^-1 = U^-T A A^T U^-1`` so ``Sigma = T T^T`` with ``T = U A^-T``.
    Only triangular solves are used.
    """
    n = psi.shape[0]
    U = cholesky(psi) if psi_chol is None else psi_chol
    A = np.zeros((n, n))
    A[np.diag_indices(n)] = np.sqrt(rng.chisquare(nu - np.arange(n)))
    A[np.tril_indices(n, -1)] = rng.standard_normal(n * (n - 1) // 2)
    # T^T = A^-1 U^T
    Tt = linalg.solve_triangular(A, U.T, lower=True)
    sigma = Tt.T @ Tt
    return 0.5 * (sigma + sigma.T)


def draw_niw(params: NIWParams, rng: np.random.Generator,
             jitter: bool = True) -> tuple[GaussianParams, np.ndarray]:
    """Joint ``(mu, Sigma)`` draw plus the Cholesky factor of ``Sigma``."""
    try:
        U = cholesky(params.psi0)
    except PositiveDefiniteError:
        raise PositiveDefiniteError("psi0 is not positive definite") from None
    sigma = sample_inverse_wishart(params.psi0, params.nu0, rng, psi_chol=U)
    L = cholesky(sigma, jitter=jitter)
    mu = params.mu0 + (L @ rng.standard_normal(params.n)) / np.sqrt(params.lambda0)
    return GaussianParams(mu, sigma), L


def sample_niw(params: NIWParams, rng: np.random.Generator) -> GaussianParams:
    return draw_niw(params, rng)[0]
