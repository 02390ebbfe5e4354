"""Hot-loop kernels for the exponential-weights linear learner.

Two interchangeable implementations: plain numpy (the reference) and a fused
loop version compiled with numba when it is importable.  On the tiny arrays
these learners use (tens of actions, single-digit dimensions), per-call
dispatch overhead dominates the numpy path, so fusing one round into one
compiled call is worth about an order of magnitude in the simulation loop.
The numpy functions stay the source of truth; a test pins both paths to
agree whenever numba is present.

`propose_core(A, S, dw, eta, gamma, u)` returns (p, X, lev, ident, k):
the play distribution mixing softmax(eta * S) with the design weights dw,
the solve covariance^{-1} A^T, per-action leverages, the leverage identity
sum p * lev, and the index sampled with uniform draw u.

`observe_core(A, X, lev, S, k, scaled_reward, bonus)` adds the estimated
reward vector scaled_reward * (A covariance^{-1} a_k) + bonus * lev into S
in place and returns its largest absolute entry.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def propose_core_py(A, S, dw, eta, gamma, u):
    z = eta * S
    z = z - z.max()
    q = np.exp(z)
    q /= q.sum()
    p = (1.0 - gamma) * q + gamma * dw
    sigma = (A * p[:, None]).T @ A
    x = np.linalg.solve(sigma, A.T)
    lev = np.einsum("ij,ji->i", A, x)
    ident = float(p @ lev)
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return p, x, lev, ident, min(k, len(p) - 1)


def observe_core_py(A, x, lev, S, k, scaled_reward, bonus):
    r_tilde = scaled_reward * (A @ x[:, k]) + bonus * lev
    S += r_tilde
    return float(np.max(np.abs(r_tilde)))


def _propose_loops(A, S, dw, eta, gamma, u):
    n, d = A.shape
    zmax = eta * S[0]
    for i in range(1, n):
        z = eta * S[i]
        if z > zmax:
            zmax = z
    q = np.empty(n)
    ssum = 0.0
    for i in range(n):
        q[i] = np.exp(eta * S[i] - zmax)
        ssum += q[i]
    p = np.empty(n)
    for i in range(n):
        p[i] = (1.0 - gamma) * q[i] / ssum + gamma * dw[i]
    sigma = np.zeros((d, d))
    for i in range(n):
        pi = p[i]
        for a in range(d):
            va = pi * A[i, a]
            for b in range(d):
                sigma[a, b] += va * A[i, b]
    x = np.linalg.solve(sigma, A.T.copy())
    lev = np.empty(n)
    ident = 0.0
    for i in range(n):
        acc = 0.0
        for a in range(d):
            acc += A[i, a] * x[a, i]
        lev[i] = acc
        ident += p[i] * acc
    acc = 0.0
    k = n - 1
    for i in range(n):
        acc += p[i]
        if u < acc:
            k = i
            break
    return p, x, lev, ident, k


def _observe_loops(A, x, lev, S, k, scaled_reward, bonus):
    n, d = A.shape
    rmax = 0.0
    for i in range(n):
        acc = 0.0
        for a in range(d):
            acc += A[i, a] * x[a, k]
        rt = scaled_reward * acc + bonus * lev[i]
        S[i] += rt
        if abs(rt) > rmax:
            rmax = abs(rt)
    return rmax


if HAVE_NUMBA:
    propose_core = njit(cache=True)(_propose_loops)
    observe_core = njit(cache=True)(_observe_loops)
else:  # pragma: no cover - exercised only without numba
    propose_core = propose_core_py
    observe_core = observe_core_py
