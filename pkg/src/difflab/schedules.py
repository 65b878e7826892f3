"""Variance schedules, their closed-form integrals, and time-discretization grids.

A schedule is the diffusion coefficient g(t) of the forward noising SDE.  Two
kinds are supported:

* ``constant``: g(t) = 1.
* ``power``: g(t) = t^a below the switch point t* = (2a+1)^(1/(2a+1)) and 1
  above it.  The switch point is chosen so that the accumulated clock
  G(t*) = int_0^{t*} g(u)^2 du equals 1 exactly.

All integrals (G, the mean contraction alpha and the conditional variance
sigma^2) have closed forms; no quadrature is used anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentOrderError,
    DegenerateGridError,
    InvalidGridError,
    InvalidParameterError,
)


@dataclass(frozen=True)
class VarianceSchedule:
    """Diffusion coefficient g(t) with closed-form integrals.

    kind is "constant" or "power"; alpha is the power exponent (ignored for
    the constant kind).
    """

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise InvalidParameterError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "power":
            if self.alpha is None or self.alpha <= 0:
                raise InvalidParameterError("power schedule needs alpha > 0")

    @property
    def switch_point(self) -> float:
        """t* where the power schedule switches to g = 1."""
        if self.kind == "constant":
            return 0.0
        p = 2 * self.alpha + 1
        return p ** (1.0 / p)

    def g(self, t: float) -> float:
        """Evaluate g(t)."""
        if self.kind == "constant":
            return 1.0
        return t ** self.alpha if t <= self.switch_point else 1.0

    def _antiderivative(self, t: float) -> float:
        # Antiderivative of g(u)^2 with value 0 at u = 0.
        if self.kind == "constant":
            return t
        p = 2 * self.alpha + 1
        ts = self.switch_point
        if t <= ts:
            return t ** p / p
        return 1.0 + (t - ts)

    def g_squared_integral(self, t: float, s: float) -> float:
        """G_{t,s} = int_t^s g(u)^2 du (exact)."""
        if t < 0 or s < t:
            raise ArgumentOrderError(f"need 0 <= t <= s, got t={t}, s={s}")
        return self._antiderivative(s) - self._antiderivative(t)

    def big_g(self, t: float) -> float:
        """G_t = G_{0,t}."""
        return self.g_squared_integral(0.0, t)

    def alpha_coef(self, t: float, s: float) -> float:
        """Mean contraction alpha_{t,s} = exp(-G_{t,s}/2) in (0, 1]."""
        return math.exp(-0.5 * self.g_squared_integral(t, s))

    def sigma_sq(self, t: float) -> float:
        """Conditional variance sigma_t^2 = 1 - exp(-G_t) in [0, 1)."""
        return -math.expm1(-self.big_g(t))

    def time_at_g(self, g_value: float) -> float:
        """Inverse clock: the time t with G_t = g_value."""
        if g_value < 0:
            raise InvalidParameterError("G must be nonnegative")
        if self.kind == "constant":
            return g_value
        p = 2 * self.alpha + 1
        if g_value <= 1.0:
            return (p * g_value) ** (1.0 / p)
        return self.switch_point + (g_value - 1.0)


@dataclass(frozen=True)
class DiscretizationGrid:
    """Ordered time points t_0 < t_1 < ... < t_N with t_0 = delta >= 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        # A single point is allowed as the degenerate zero-step grid.
        if pts.ndim != 1 or pts.size < 1:
            raise InvalidGridError("grid needs at least one point")
        if not np.all(np.diff(pts) > 0):
            raise InvalidGridError("grid points must be strictly increasing")
        if pts[0] < 0:
            raise InvalidGridError("grid must start at t0 >= 0")

    @property
    def delta(self) -> float:
        return float(self.points[0])

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    def step_g(self, schedule: VarianceSchedule) -> np.ndarray:
        """Per-step clock increments G_k = G_{t_{k-1}, t_k}, k = 1..N."""
        anti = np.array([schedule._antiderivative(t) for t in self.points])
        return np.diff(anti)


def build_uniform_grid(delta: float, horizon: float, n: int) -> DiscretizationGrid:
    """Uniform grid t_k = delta + k (T - delta) / n."""
    if n < 1:
        raise InvalidGridError("need at least one step")
    if not 0 <= delta < horizon:
        raise InvalidGridError(f"need 0 <= delta < T, got delta={delta}, T={horizon}")
    pts = delta + np.arange(n + 1) * (horizon - delta) / n
    pts[-1] = horizon
    return DiscretizationGrid(pts)


def build_exp_decreasing_grid(
    delta: float,
    horizon: float,
    c: float,
    floor: float | None = None,
) -> DiscretizationGrid:
    """Grid with step sizes h_k = c * min(max(t_k, floor), 1).

    In the geometric region (t_k <= 1, above the floor) the implicit relation
    h_k = c t_k is satisfied exactly by the forward recursion
    t_k = t_{k-1} / (1 - c).  Above 1 the steps are a fixed c; below the floor
    (when given) they are a fixed c * floor.  The final point is clamped to the
    horizon, so the last step may be shorter.
    """
    if not 0 < c < 1:
        raise InvalidParameterError(f"need 0 < c < 1, got c={c}")
    if not 0 < delta < horizon:
        raise InvalidGridError(f"need 0 < delta < T, got delta={delta}, T={horizon}")
    if floor is not None and not 0 < floor <= 1:
        raise InvalidParameterError(f"need 0 < floor <= 1, got floor={floor}")
    pts = [delta]
    t = delta
    while True:
        t_geom = t / (1.0 - c)
        if floor is not None and t_geom < floor:
            t_next = t + c * floor
        elif t_geom <= 1.0:
            t_next = t_geom
        else:
            t_next = t + c
        if t_next >= horizon:
            pts.append(horizon)
            break
        pts.append(t_next)
        t = t_next
    return DiscretizationGrid(np.array(pts))


@dataclass(frozen=True)
class ScheduleFunctionals:
    """The sums Pi_2 = sum G_k^2, Pi_3 = sum G_k^3, Pi = sum G_k^2 / sigma^4."""

    pi2: float
    pi3: float
    _pi: float | None = field(default=None, repr=False)

    @property
    def pi(self) -> float:
        if self._pi is None:
            raise DegenerateGridError("Pi is undefined for a grid with t0 = 0")
        return self._pi


def schedule_functionals(
    grid: DiscretizationGrid, schedule: VarianceSchedule
) -> ScheduleFunctionals:
    """Compute (Pi_2, Pi_3, Pi) for a grid; Pi is undefined when t0 = 0."""
    gk = grid.step_g(schedule)
    pi2 = float(np.sum(gk ** 2))
    pi3 = float(np.sum(gk ** 3))
    pi = None
    if grid.delta > 0:
        sig_sq = np.array([schedule.sigma_sq(t) for t in grid.points[:-1]])
        pi = float(np.sum(gk ** 2 / sig_sq ** 2))
    return ScheduleFunctionals(pi2, pi3, pi)


def check_step_condition(
    grid: DiscretizationGrid,
    schedule: VarianceSchedule,
    d: int,
    big_k: float = 2.0,
) -> tuple[bool, float]:
    """Check max_k G_k / sigma_{t_{k-1}}^2 <= 1/(K d); returns (ok, worst ratio)."""
    if grid.delta <= 0:
        raise DegenerateGridError("step condition needs t0 > 0")
    gk = grid.step_g(schedule)
    sig_sq = np.array([schedule.sigma_sq(t) for t in grid.points[:-1]])
    worst = float(np.max(gk / sig_sq))
    return worst <= 1.0 / (big_k * d), worst
