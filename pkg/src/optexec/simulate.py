"""Euler-Maruyama simulation of controlled liquidation.

Paths evolve in log-price space, dY = (b(Y) - g(x_t)) dt + vol(Y) dW, and
are exponentiated back, which keeps prices non-negative; once Y falls below
a configurable floor the price is absorbed at zero for the rest of the path.
Cash and inventory integrate with the explicit left-point rule, and a step
that would oversell is clipped to the remaining inventory.

Noise comes from counter-based Philox streams keyed by (seed, path_index),
so results are bit-reproducible for a given (seed, n_paths, n_steps,
strategy) regardless of chunking, and distinct strategies simulated with the
same seed share noise path-by-path (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .closed_form import Schedule
from .hjb import ValueSurface
from .impact import ImpactModel

__all__ = [
    "CoefficientSet",
    "DeterministicStrategy",
    "FeedbackStrategy",
    "Utility",
    "TerminalStats",
    "SimResult",
    "UnimpactedResult",
    "simulate",
    "simulate_unimpacted",
    "feedback_strategy_from_policy",
    "StrategyComparison",
    "compare_strategies",
    "QUANTILE_LEVELS",
]

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
_CHUNK = 4096


@dataclass(frozen=True)
class CoefficientSet:
    """Bounded Lipschitz log-price coefficients with caller-declared bounds."""

    drift: Callable[[np.ndarray], np.ndarray]
    vol: Callable[[np.ndarray], np.ndarray]
    drift_bound: float
    vol_bound: float

    @classmethod
    def black_scholes(cls, mu: float, sigma: float) -> "CoefficientSet":
        def drift(y):
            return np.full_like(np.asarray(y, dtype=float), mu)

        def vol(y):
            return np.full_like(np.asarray(y, dtype=float), sigma)

        return cls(drift=drift, vol=vol, drift_bound=abs(mu), vol_bound=abs(sigma))

    def spot_check(self, ys) -> None:
        """Verify the declared bounds on a sample of log-prices."""
        ys = np.asarray(ys, dtype=float)
        b = np.asarray(self.drift(ys), dtype=float)
        v = np.asarray(self.vol(ys), dtype=float)
        if np.any(np.abs(b) > self.drift_bound * (1.0 + 1e-12) + 1e-15):
            raise ValueError("drift exceeds its declared bound")
        if np.any(np.abs(v) > self.vol_bound * (1.0 + 1e-12) + 1e-15):
            raise ValueError("volatility exceeds its declared bound")


class DeterministicStrategy:
    """Open-loop selling along a fixed schedule."""

    def __init__(self, schedule: Schedule):
        self.schedule = schedule
        self.horizon = float(schedule.horizon)

    def speeds(self, t: float, remaining: np.ndarray) -> np.ndarray:
        rate = max(float(self.schedule.rates(t)), 0.0)
        return np.full(remaining.shape, rate)


class FeedbackStrategy:
    """Closed-loop selling read off a solved value surface's policy.

    The surface is indexed by time-to-go, so at calendar time t the speed is
    the bilinear policy at (horizon - t, remaining).  Interpolated speeds
    that land in the forbidden interval (0, threshold] are projected to 0,
    so every emitted speed is 0 or strictly above the threshold.
    """

    def __init__(self, surface: ValueSurface):
        if surface.policy is None:
            raise ValueError("surface carries no policy")
        self.surface = surface
        self.horizon = float(surface.t_grid[-1])
        self.threshold = float(surface.threshold)

    def speeds(self, t: float, remaining: np.ndarray) -> np.ndarray:
        ttg = min(max(self.horizon - t, 0.0), self.horizon)
        y = self.surface.policy_row(ttg, remaining)
        y = np.where((y > 0.0) & (y <= self.threshold), 0.0, y)
        return np.where(remaining > 0.0, np.maximum(y, 0.0), 0.0)


def feedback_strategy_from_policy(surface: ValueSurface) -> FeedbackStrategy:
    return FeedbackStrategy(surface)


@dataclass(frozen=True)
class Utility:
    """Terminal utility u(c, x, s).  None means risk-neutral: u = c.

    Custom callables are the caller's responsibility (declared non-decreasing
    with polynomial growth); `spot_check_monotone` probes that claim.
    """

    fn: Optional[Callable] = None

    def evaluate(self, c, x, s) -> np.ndarray:
        if self.fn is None:
            return np.array(c, dtype=float, copy=True)
        return np.asarray(self.fn(c, x, s), dtype=float)

    def spot_check_monotone(self, points, bumps=1e-3) -> None:
        for c, x, s in points:
            base = float(self.evaluate(np.array([c]), np.array([x]), np.array([s]))[0])
            for dc, dx, ds in ((bumps, 0, 0), (0, bumps, 0), (0, 0, bumps)):
                up = float(
                    self.evaluate(np.array([c + dc]), np.array([x + dx]), np.array([s + ds]))[0]
                )
                if up < base - 1e-12:
                    raise ValueError("utility decreased along a coordinate bump")


@dataclass
class TerminalStats:
    mean: float
    variance: float
    quantiles: tuple


def _stats(arr: np.ndarray) -> TerminalStats:
    return TerminalStats(
        mean=float(arr.mean()),
        variance=float(arr.var(ddof=1)) if arr.size > 1 else 0.0,
        quantiles=tuple(float(q) for q in np.quantile(arr, QUANTILE_LEVELS)),
    )


@dataclass(eq=False)
class SimResult:
    mean_utility: float
    std_error: float
    n_paths: int
    cash: TerminalStats
    inventory: TerminalStats
    price: TerminalStats
    absorption_count: int
    utilities: np.ndarray
    paths: Optional[dict] = None


@dataclass(eq=False)
class UnimpactedResult:
    price: TerminalStats
    paths: Optional[np.ndarray] = None


def _path_noise(seed: int, start: int, count: int, n_steps: int) -> np.ndarray:
    out = np.empty((count, n_steps))
    for i in range(count):
        bits = np.random.Philox(key=np.array([seed, start + i], dtype=np.uint64))
        out[i] = np.random.Generator(bits).standard_normal(n_steps)
    return out


def _validate_common(n_paths, n_steps, seed, horizon):
    if n_paths < 1 or n_steps < 1:
        raise ValueError("need n_paths >= 1 and n_steps >= 1")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if not isinstance(seed, (int, np.integer)) or seed < 0 or seed >= 2**63:
        raise ValueError("seed must be a non-negative integer below 2**63")


def simulate(
    strategy,
    coeffs: CoefficientSet,
    model: ImpactModel,
    c0: float,
    x0: float,
    s0: float,
    horizon: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    utility: Optional[Utility] = None,
    log_floor: float = -60.0,
    return_paths: bool = False,
) -> SimResult:
    """Monte Carlo estimate of E[u(C_T, X_T, S_T)] under the given strategy."""
    _validate_common(n_paths, n_steps, seed, horizon)
    if x0 < 0.0 or s0 < 0.0:
        raise ValueError("need x0 >= 0 and s0 >= 0")
    if abs(strategy.horizon - horizon) > 1e-12 * max(1.0, horizon):
        raise ValueError("strategy horizon does not match the simulation horizon")
    probe = math.log(s0) if s0 > 0.0 else 0.0
    coeffs.spot_check(np.linspace(probe - 5.0, probe + 5.0, 9))
    utility = utility or Utility()

    dt = horizon / n_steps
    sqdt = math.sqrt(dt)
    y0 = math.log(s0) if s0 > 0.0 else log_floor - 1.0

    ct = np.empty(n_paths)
    xt = np.empty(n_paths)
    st = np.empty(n_paths)
    absorbed_total = 0
    hist = None
    if return_paths:
        hist = {
            "t": np.linspace(0.0, horizon, n_steps + 1),
            "S": np.empty((n_paths, n_steps + 1)),
            "C": np.empty((n_paths, n_steps + 1)),
            "X": np.empty((n_paths, n_steps + 1)),
        }

    for start in range(0, n_paths, _CHUNK):
        count = min(_CHUNK, n_paths - start)
        noise = _path_noise(seed, start, count, n_steps)
        Y = np.full(count, y0)
        S = np.full(count, float(s0))
        X = np.full(count, float(x0))
        C = np.full(count, float(c0))
        alive = np.full(count, s0 > 0.0)
        if hist is not None:
            hist["S"][start : start + count, 0] = S
            hist["C"][start : start + count, 0] = C
            hist["X"][start : start + count, 0] = X

        for k in range(n_steps):
            t = k * dt
            sp = np.asarray(strategy.speeds(t, X), dtype=float)
            sp = np.where(X > 0.0, sp, 0.0)
            sell = np.minimum(sp * dt, X)
            sp_eff = sell / dt
            C = C + sell * S
            X = X - sell
            dY = (coeffs.drift(Y) - model.g(sp_eff)) * dt + coeffs.vol(Y) * sqdt * noise[:, k]
            Y = np.where(alive, Y + dY, Y)
            alive = alive & (Y >= log_floor)
            S = np.where(alive, np.exp(Y), 0.0)
            if hist is not None:
                hist["S"][start : start + count, k + 1] = S
                hist["C"][start : start + count, k + 1] = C
                hist["X"][start : start + count, k + 1] = X

        ct[start : start + count] = C
        xt[start : start + count] = X
        st[start : start + count] = S
        absorbed_total += int(np.count_nonzero(~alive))

    utilities = utility.evaluate(ct, xt, st)
    se = float(utilities.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return SimResult(
        mean_utility=float(utilities.mean()),
        std_error=se,
        n_paths=n_paths,
        cash=_stats(ct),
        inventory=_stats(xt),
        price=_stats(st),
        absorption_count=absorbed_total,
        utilities=utilities,
        paths=hist,
    )


def simulate_unimpacted(
    coeffs: CoefficientSet,
    s0: float,
    horizon: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    return_paths: bool = False,
) -> UnimpactedResult:
    """Impact-free reference price driven by the same noise streams as
    `simulate` with matching (seed, path_index): under shared noise the
    controlled price never exceeds this one."""
    _validate_common(n_paths, n_steps, seed, horizon)
    if s0 < 0.0:
        raise ValueError("s0 must be non-negative")
    dt = horizon / n_steps
    sqdt = math.sqrt(dt)
    y0 = math.log(s0) if s0 > 0.0 else -math.inf

    zt = np.empty(n_paths)
    hist = np.empty((n_paths, n_steps + 1)) if return_paths else None
    for start in range(0, n_paths, _CHUNK):
        count = min(_CHUNK, n_paths - start)
        noise = _path_noise(seed, start, count, n_steps)
        Y = np.full(count, y0)
        if hist is not None:
            hist[start : start + count, 0] = s0
        for k in range(n_steps):
            # same grouping as the controlled step with g = 0, so a zero-impact
            # run reproduces this price bit for bit
            dY = coeffs.drift(Y) * dt + coeffs.vol(Y) * sqdt * noise[:, k]
            Y = Y + dY
            if hist is not None:
                hist[start : start + count, k + 1] = np.exp(Y)
        zt[start : start + count] = np.exp(Y) if s0 > 0.0 else 0.0
    return UnimpactedResult(price=_stats(zt), paths=hist)


@dataclass
class StrategyComparison:
    names: list
    means: list
    std_errors: list
    pairs: list  # (name_i, name_j, mean_diff, se_diff)

    def best(self) -> str:
        return self.names[int(np.argmax(self.means))]


def compare_strategies(
    strategies,
    coeffs: CoefficientSet,
    model: ImpactModel,
    c0: float,
    x0: float,
    s0: float,
    horizon: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    utility: Optional[Utility] = None,
) -> StrategyComparison:
    """Simulate named strategies under common random numbers and rank them.

    `strategies` is a sequence of (name, strategy) pairs sharing the same
    horizon; the pairwise differences are computed path-by-path, so their
    standard errors reflect the variance reduction of the shared noise.
    """
    strategies = list(strategies)
    if len(strategies) < 2:
        raise ValueError("need at least two strategies to compare")
    for name, s in strategies:
        if abs(s.horizon - horizon) > 1e-12 * max(1.0, horizon):
            raise ValueError(f"strategy {name!r} has a mismatched horizon")

    utils = []
    names = []
    for name, s in strategies:
        res = simulate(
            s, coeffs, model, c0, x0, s0, horizon, n_paths, n_steps, seed, utility=utility
        )
        names.append(name)
        utils.append(res.utilities)

    means = [float(u.mean()) for u in utils]
    ses = [
        float(u.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0 for u in utils
    ]
    pairs = []
    for i in range(len(utils)):
        for j in range(i + 1, len(utils)):
            d = utils[i] - utils[j]
            se = float(d.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
            pairs.append((names[i], names[j], float(d.mean()), se))
    return StrategyComparison(names=names, means=means, std_errors=ses, pairs=pairs)
