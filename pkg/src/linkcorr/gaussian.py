"""Dense multivariate Gaussian primitives.

Everything that needs a solve goes through a Cholesky factor; no routine here
forms an explicit inverse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg


class PositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization fails."""


class ConditioningError(ValueError):
    """Raised when a Gaussian cannot be conditioned on the requested block."""


class DomainError(ValueError):
    """Raised for inputs outside an operation's mathematical domain."""


def cholesky(cov: np.ndarray, jitter: bool = False, max_tries: int = 3) -> np.ndarray:
    """Lower Cholesky factor of ``cov``.

    With ``jitter=True`` a failed factorization is retried after adding
    ``eps * I`` with ``eps = 1e-8 * trace / n``, growing tenfold per retry.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        if not jitter:
            raise PositiveDefiniteError("matrix is not positive definite") from None
    n = cov.shape[0]
    eps = 1e-8 * max(np.trace(cov), 0.0) / n
    if eps <= 0.0:
        eps = 1e-8
    for _ in range(max_tries):
        try:
            return np.linalg.cholesky(cov + eps * np.eye(n))
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise PositiveDefiniteError(
        f"matrix is not positive definite even after jitter up to {eps / 10.0:.3g}"
    )


def jitter_repair(cov: np.ndarray, max_tries: int = 3) -> np.ndarray:
    """Return ``cov + eps * I`` for the smallest tried ``eps`` that factorizes."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    eps = 1e-8 * max(np.trace(cov), 0.0) / n or 1e-8
    for _ in range(max_tries):
        repaired = cov + eps * np.eye(n)
        try:
            np.linalg.cholesky(repaired)
            return repaired
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise PositiveDefiniteError("jitter repair failed")


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector (seconds) and covariance matrix (seconds^2)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        scale = np.max(np.abs(cov)) if cov.size else 0.0
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-9 * max(scale, 1e-300)):
            raise ValueError("cov is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.mean.size

    def chol(self, jitter: bool = False) -> np.ndarray:
        return cholesky(self.cov, jitter=jitter)

    def check_pd(self) -> None:
        cholesky(self.cov)

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean.tolist(), "cov": matrix_to_json(self.cov)}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianParams":
        return cls(np.asarray(d["mean"], dtype=float), matrix_from_json(d["cov"]))


def cov_to_corr(cov: np.ndarray) -> np.ndarray:
    """Rescale a covariance matrix to a correlation matrix.

    The diagonal is set to exactly 1 and off-diagonal entries are clipped
    to [-1, 1] to absorb rounding.
    """
    cov = np.asarray(cov, dtype=float)
    d = np.diag(cov)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise DomainError(f"non-positive variance at index {int(bad[0])}")
    s = np.sqrt(d)
    corr = cov / s[:, None] / s[None, :]
    corr = 0.5 * (corr + corr.T)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def batch_cov_to_corr(covs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`cov_to_corr` over a stack of shape (k, n, n)."""
    covs = np.asarray(covs, dtype=float)
    d = np.einsum("kii->ki", covs)
    if np.any(~(d > 0)):
        k, i = np.argwhere(~(d > 0))[0]
        raise DomainError(f"non-positive variance at index {int(i)} of sample {int(k)}")
    s = np.sqrt(d)
    corr = covs / s[:, :, None] / s[:, None, :]
    corr = 0.5 * (corr + np.swapaxes(corr, 1, 2))
    np.clip(corr, -1.0, 1.0, out=corr)
    idx = np.arange(covs.shape[1])
    corr[:, idx, idx] = 1.0
    return corr


def correlation_violations(corr: np.ndarray, atol: float = 1e-12) -> list[str]:
    """List the ways ``corr`` fails to be a correlation matrix (empty if valid)."""
    corr = np.asarray(corr, dtype=float)
    out = []
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        return [f"not square: shape {corr.shape}"]
    if np.any(np.abs(np.diag(corr) - 1.0) > atol):
        out.append("diagonal entries differ from 1")
    if np.any(np.abs(corr) > 1.0 + atol):
        out.append("entries outside [-1, 1]")
    if not np.allclose(corr, corr.T, rtol=0.0, atol=atol):
        out.append("not symmetric")
    return out


def sample_gaussian(params: GaussianParams, rng: np.random.Generator, size: int | None = None,
                    chol: np.ndarray | None = None) -> np.ndarray:
    """Draw ``mu + L z``; ``size`` rows if given, else a single vector."""
    L = params.chol() if chol is None else chol
    if size is None:
        z = rng.standard_normal(params.n)
        return params.mean + L @ z
    z = rng.standard_normal((size, params.n))
    return params.mean + z @ L.T


def _as_index(idx: Sequence[int], n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"index out of range for dimension {n}")
    if np.unique(idx).size != idx.size:
        raise ValueError("duplicate indices")
    return idx


def condition(params: GaussianParams, observed_idx: Sequence[int],
              observed_vals: Sequence[float]) -> tuple[GaussianParams, np.ndarray]:
    """Condition on ``x[observed_idx] = observed_vals``.

    Returns the conditional Gaussian over the remaining coordinates and
    the (sorted) indices of those coordinates.
    """
    n = params.n
    o = _as_index(observed_idx, n)
    v = np.asarray(observed_vals, dtype=float).ravel()
    if o.size == 0:
        raise ConditioningError("observed index set is empty")
    if o.size >= n:
        raise ConditioningError("observed index set must be a strict subset")
    if v.size != o.size:
        raise ValueError("observed_vals length does not match observed_idx")
    f = np.setdiff1d(np.arange(n), o)
    S = params.cov
    try:
        c = linalg.cho_factor(S[np.ix_(o, o)], lower=True)
    except np.linalg.LinAlgError:
        raise ConditioningError("observed block of the covariance is singular") from None
    S_fo = S[np.ix_(f, o)]
    mean = params.mean[f] + S_fo @ linalg.cho_solve(c, v - params.mean[o])
    cov = S[np.ix_(f, f)] - S_fo @ linalg.cho_solve(c, S_fo.T)
    cov = 0.5 * (cov + cov.T)
    return GaussianParams(mean, cov), f


def log_density(params: GaussianParams, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != params.mean.shape:
        raise ValueError("dimension mismatch")
    L = params.chol()
    z = linalg.solve_triangular(L, x - params.mean, lower=True)
    half_logdet = np.sum(np.log(np.diag(L)))
    return float(-0.5 * params.n * math.log(2 * math.pi) - half_logdet - 0.5 * z @ z)


def logdet(cov: np.ndarray) -> float:
    return float(2.0 * np.sum(np.log(np.diag(cholesky(cov)))))


# -- serialization ---------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def matrix_to_csv(mat: np.ndarray) -> str:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    lines = [str(mat.shape[0])]
    lines += [",".join(_fmt(v) for v in row) for row in mat]
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n = int(lines[0])
    rows = [[float(t) for t in ln.split(",")] for ln in lines[1:]]
    mat = np.array(rows, dtype=float).reshape(len(rows), -1)
    if mat.shape[0] != n:
        raise ValueError(f"expected {n} rows, found {mat.shape[0]}")
    return mat


def matrix_to_json(mat: np.ndarray) -> dict:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    return {"n": int(mat.shape[0]), "data": [float(v) for v in mat.ravel()]}


def matrix_from_json(obj: dict) -> np.ndarray:
    n = int(obj["n"])
    data = np.asarray(obj["data"], dtype=float)
    return data.reshape(n, data.size // n)


def save_matrix(mat: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(matrix_to_json(mat)))
    else:
        path.write_text(matrix_to_csv(mat))


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        return matrix_from_json(json.loads(path.read_text()))
    return matrix_from_csv(path.read_text())
