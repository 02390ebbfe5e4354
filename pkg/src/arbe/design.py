"""Near-optimal exploration designs over finite action sets.

`optimal_design` runs the Fedorov-Wynn / Frank-Wolfe exchange scheme for the
D-optimal criterion and stops once the Kiefer-Wolfowitz condition holds
approximately: max leverage <= d * (1 + eps).  By Kiefer-Wolfowitz duality the
same weights are then eps-optimal for the G-criterion, which is what the
learners need (uniformly small leverage under the exploration distribution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["DesignResult", "DesignError", "optimal_design", "design_min_eigenvalue"]

_SUPPORT_TOL = 1e-10


class DesignError(RuntimeError):
    """Raised when the exchange scheme fails to certify eps-optimality."""


@dataclass(frozen=True)
class DesignResult:
    """An exploration design over a finite action set.

    Attributes
    ----------
    weights : array of shape (n,)
        Sampling probabilities, nonnegative, summing to one.
    covariance : array of shape (d, d)
        Second-moment matrix sum_a weights[a] * a a^T.
    max_leverage : float
        max_a a^T covariance^{-1} a over all actions (certified <= d(1+eps)).
    support_size : int
        Number of actions with nonzero weight.
    """

    weights: np.ndarray
    covariance: np.ndarray
    max_leverage: float
    support_size: int


def _leverages(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cov = (points * weights[:, None]).T @ points
    sol = np.linalg.solve(cov, points.T)
    return np.einsum("ij,ji->i", points, sol), cov


def optimal_design(points, eps: float = 0.05,
                   max_iter: int | None = None) -> DesignResult:
    """Compute an eps-approximate G-optimal design over the rows of `points`.

    Starts from the uniform design and repeatedly shifts mass toward the
    highest-leverage action with the exact D-optimal line-search step
    (g - d) / (d (g - 1)).  Deterministic: no randomness, no tie-breaking
    beyond argmax order.

    Parameters
    ----------
    points : array of shape (n, d)
        Action coordinates; must span R^d.
    eps : float
        Target slack in the Kiefer-Wolfowitz condition.
    max_iter : int, optional
        Iteration cap; defaults to ceil(10 d ln(n) / eps).  Failure to
        certify within the cap raises DesignError rather than returning a
        silently bad design.

    Returns
    -------
    DesignResult
        Weights below 1e-10 are pruned and the rest renormalized before the
        final statistics are computed.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a nonempty (n, d) array")
    n, d = pts.shape
    if np.linalg.matrix_rank(pts) < d:
        raise ValueError("points do not span R^%d" % d)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if max_iter is None:
        max_iter = int(math.ceil(10.0 * d * math.log(max(n, 2)) / eps))

    w = np.full(n, 1.0 / n)
    target = d * (1.0 + eps)
    for _ in range(max_iter):
        lev, _ = _leverages(pts, w)
        top = int(np.argmax(lev))
        g = float(lev[top])
        if g <= target:
            break
        lam = (g - d) / (d * (g - 1.0))
        w *= 1.0 - lam
        w[top] += lam
    else:
        raise DesignError(
            "no eps-optimal design after %d iterations (eps=%g, d=%d, n=%d)"
            % (max_iter, eps, d, n)
        )

    w[w < _SUPPORT_TOL] = 0.0
    w /= w.sum()
    lev, cov = _leverages(pts, w)
    return DesignResult(weights=w, covariance=cov,
                        max_leverage=float(lev.max()),
                        support_size=int(np.count_nonzero(w)))


def design_min_eigenvalue(result: DesignResult) -> float:
    """Smallest eigenvalue of the design covariance (diagnostic)."""
    return float(np.linalg.eigvalsh(result.covariance)[0])
