"""Anytime-valid confidence radii.

Everything here is built on a curved boundary for self-normalized
martingales (Howard, Ramdas, McAuliffe and Sekhon, "Time-uniform, nonparametric,
nonasymptotic confidence sequences", Ann. Statist. 2021), specialized with
stitching parameters s = 1.4, eta = 2.  The base radius is

    1.44 * sqrt(max(W, m) * L) + 0.41 * c * L,
    L = 1.4 * ln ln(2 * max(W / m, 1)) + ln(5.2 / delta),

where W is the accumulated variance proxy, m the variance scale the boundary
is tuned to, and c a bound on individual increments (0 for bounded-range
Hoeffding-style sums).  The ln ln argument is at least 2 by construction, so
the bracket is finite, and positive for every delta in (0, 1).

Windowed radii for importance-weighted reward sums multiply the whole radius
by `restart_factor` (3 by default covers a delta / n^2 union bound over up to
ln t re-anchorings of the window; set it to 1 and shrink delta directly for
the exact variant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "BoundaryParams",
    "howard_radius",
    "hoeffding_radius",
    "bernstein_radius",
    "cum_reward_radius",
    "gap_width",
    "exploit_width",
]


@dataclass(frozen=True)
class BoundaryParams:
    """Parameters of the stitched boundary.

    Parameters
    ----------
    delta : float
        Failure probability, in (0, 1).
    m : float
        Variance scale the boundary is tuned to (the radius is tightest
        around W of this order).  Positive.
    c_scale : float
        Almost-sure bound on single increments; 0 disables the linear term.
    restart_factor : float
        Multiplier applied to windowed radii to absorb repeated re-anchoring;
        must be >= 1.
    """

    delta: float
    m: float = 1.0
    c_scale: float = 0.0
    restart_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.m <= 0.0:
            raise ValueError("m must be positive")
        if self.c_scale < 0.0:
            raise ValueError("c_scale must be nonnegative")
        if self.restart_factor < 1.0:
            raise ValueError("restart_factor must be >= 1")


def _stitched(w: float, m: float, c: float, delta: float) -> float:
    ell = 1.4 * math.log(math.log(2.0 * max(w / m, 1.0))) + math.log(5.2 / delta)
    return 1.44 * math.sqrt(max(w, m) * ell) + 0.41 * c * ell


def howard_radius(variance_sum: float, p: BoundaryParams) -> float:
    """Radius of the stitched boundary at accumulated variance `variance_sum`.

    Covers sub-exponential increments bounded by `p.c_scale`; the radius is
    uniformly valid over time with probability at least 1 - p.delta.
    """
    if variance_sum < 0.0:
        raise ValueError("variance_sum must be nonnegative")
    return _stitched(variance_sum, p.m, p.c_scale, p.delta)


def hoeffding_radius(range_variance_sum: float, p: BoundaryParams) -> float:
    """Boundary for sums of bounded increments.

    `range_variance_sum` is sum_i (b_i - a_i)^2 / 4 for increments supported
    on [a_i, b_i]; the linear correction vanishes (c = 0).
    """
    return howard_radius(range_variance_sum, replace(p, c_scale=0.0))


def bernstein_radius(var_sum: float, c_bound: float, p: BoundaryParams) -> float:
    """Boundary for sums with conditional variance `var_sum`, increments <= c_bound."""
    return howard_radius(var_sum, replace(p, c_scale=c_bound))


def _check_window(t0: int, t: int) -> int:
    if t != int(t) or t0 != int(t0):
        raise ValueError("window endpoints must be integers")
    span = int(t) - int(t0)
    if span < 2:
        raise ValueError("window must contain at least 2 rounds (got %d)" % span)
    return span


def cum_reward_radius(t0: int, t: int, rho: float, p: BoundaryParams) -> float:
    """Deviation radius for an importance-weighted reward sum over (t0, t].

    The sum accumulates mask * r / rho with a Bernoulli(rho) mask and rewards
    in [0, 1]; increments are bounded by 1 / rho with conditional variance at
    most 1 / rho per round, giving

        restart_factor * (1.44 * sqrt((t - t0) / rho * B) + 0.41 / rho * B),
        B = 1.4 * ln ln(4 (t - t0)) + ln(5.2 / p.delta).
    """
    span = _check_window(t0, t)
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    b = 1.4 * math.log(math.log(4.0 * span)) + math.log(5.2 / p.delta)
    return p.restart_factor * (1.44 * math.sqrt(span / rho * b) + 0.41 / rho * b)


def gap_width(t0: int, t: int, rho_top: float, r_top: float, n: int,
              p: BoundaryParams, c_w: float = 1.0) -> float:
    """Half-width of the confidence interval around the running gap estimate.

    `rho_top` and `r_top` are the balancing probability and complexity of the
    top slot, `n` counts how often the estimation window has been re-anchored
    (the union bound over re-anchorings enters through the logs, so no
    restart_factor here).  Requires a window of at least 2 rounds.
    """
    span = _check_window(t0, t)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < rho_top <= 1.0:
        raise ValueError("rho_top must lie in (0, 1]")
    wide = r_top / math.sqrt(rho_top) * math.sqrt(math.log(n * span / p.delta) / span)
    inner = math.log(max(span, math.e))
    fine = math.log(n * inner / p.delta) / (rho_top * span)
    return c_w * (wide + fine)


def exploit_width(t_e: int, t: int, rho_e: float, r: float, delta_e: float,
                  c_v: float = 1.0) -> float:
    """Half-width of the per-epoch mean-reward interval during exploitation.

    The window starts at the epoch anchor `t_e`; `rho_e` is the epoch's
    exploration probability and `delta_e` its failure budget.  The second
    term carries no 1 / rho_e factor: it reflects the unweighted count of
    rounds, not the weighted sum.
    """
    span = _check_window(t_e, t)
    if not 0.0 < rho_e <= 1.0:
        raise ValueError("rho_e must lie in (0, 1]")
    if not 0.0 < delta_e < 1.0:
        raise ValueError("delta_e must lie in (0, 1)")
    wide = r * math.sqrt(math.log(span / delta_e) / (rho_e * span))
    fine = math.log(math.log(max(span, math.e)) / delta_e) / span
    return c_v * (wide + fine)
