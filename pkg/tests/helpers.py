"""Independent oracles shared by the test modules."""

import numpy as np

from linkcorr.observation import Observation


def precision_condition(mean, cov, o, v):
    """Gaussian conditioning written through the precision matrix."""
    n = len(mean)
    f = np.setdiff1d(np.arange(n), o)
    P = np.linalg.inv(cov)
    Pff = P[np.ix_(f, f)]
    Pfo = P[np.ix_(f, o)]
    cov_c = np.linalg.inv(Pff)
    mean_c = mean[f] - cov_c @ Pfo @ (np.asarray(v) - mean[o])
    return mean_c, cov_c, f


def basis_oracle(mean, cov, G, r):
    """Law of ``x | G x = r`` by completing ``G`` to an invertible basis.

    With ``B = [G; N]`` (``N`` spanning the null space of ``G``), ``z = B x``
    is Gaussian; condition its first block on ``r`` and map back.
    """
    G = np.asarray(G, dtype=float)
    p, n = G.shape
    _, _, Vt = np.linalg.svd(G)
    N = Vt[p:]
    B = np.vstack([G, N])
    mz = B @ mean
    Sz = B @ cov @ B.T
    S11, S12, S22 = Sz[:p, :p], Sz[:p, p:], Sz[p:, p:]
    K = np.linalg.solve(S11, S12).T
    m2 = mz[p:] + K @ (np.asarray(r) - mz[:p])
    C2 = S22 - K @ S12
    Binv = np.linalg.inv(B)
    mean_x = Binv @ np.concatenate([r, m2])
    cov_x = Binv[:, p:] @ C2 @ Binv[:, p:].T
    return mean_x, 0.5 * (cov_x + cov_x.T)


def random_rows(rng, n, p_missing=0.3, p_merge=0.3):
    """Random valid alignment rows: consecutive runs, some links unrecorded."""
    rows, current = [], [0]
    for j in range(1, n):
        if rng.random() < p_merge:
            current.append(j)
        else:
            rows.append(tuple(current))
            current = [j]
    rows.append(tuple(current))
    kept = [row for row in rows if rng.random() >= p_missing]
    return tuple(kept) if kept else (rows[0],)


def random_observation(rng, n, x=None, **kw):
    rows = random_rows(rng, n, **kw)
    x = rng.normal(10, 3, n) if x is None else x
    r = np.array([x[list(row)].sum() for row in rows])
    return Observation(r, rows, n)
