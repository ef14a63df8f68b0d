"""S-shaped market impact curves and their marginals.

An impact model maps a selling rate x >= 0 to an instantaneous log-price
decay rate g(x).  "S-shaped" means the marginal impact h = g' first falls
and then rises, with the switch at a threshold rate: g is concave below the
threshold and convex above it.  Everything downstream (optimal speeds, TWAP
rates, the PDE solver) touches a model only through g, h, the inverse of h
on its rising branch, and the excess x*h(x) - g(x).

All curve evaluations accept scalars or numpy arrays and are pure; models
are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure

__all__ = [
    "ImpactModel",
    "MixedPowerImpact",
    "ShiftedConvexImpact",
    "QuadraticImpact",
    "LinearImpact",
    "LevyEffectiveImpact",
    "MarginalNotInvertibleError",
    "ShapeCheck",
    "ShapeReport",
    "validate_s_shape",
    "impact_from_config",
]

_INVERSE_RTOL = 1e-12


class MarginalNotInvertibleError(ValueError):
    """The operation needs the rising branch of h, but this model's marginal never rises."""


def _match(x, out: np.ndarray):
    """Return a float for scalar input, the array otherwise."""
    return float(out[0]) if np.ndim(x) == 0 else out


class ImpactModel:
    """Base class.  Subclasses fill in `_g` and `_h` on positive float arrays.

    Attributes
    ----------
    threshold : float
        Rate at which the marginal impact switches from falling to rising
        (the concave/convex switch of g).  Zero for purely convex models.
    unbounded_marginal : bool
        Whether h(x) -> infinity as x -> infinity.  False only for the
        linear family, which is admitted solely for limit comparisons; any
        operation that needs h's inverse rejects such models.
    """

    family = "base"
    threshold = 0.0
    unbounded_marginal = True

    # -- curve evaluation ---------------------------------------------------

    def g(self, x):
        """Log-price decay rate when selling at rate x (x >= 0)."""
        arr = self._rate_array(x, allow_zero=True)
        with np.errstate(over="ignore"):
            return _match(x, self._g(arr))

    def h(self, x):
        """Marginal impact g'(x) for x > 0."""
        arr = self._rate_array(x, allow_zero=False)
        with np.errstate(over="ignore"):
            return _match(x, self._h(arr))

    def excess_impact(self, x):
        """x*h(x) - g(x): how far marginal impact outruns average impact.

        Non-positive at the threshold and strictly increasing above it, so
        excess_impact(rate) = decay has a unique root there; that root is
        the optimal constant liquidation rate (see closed_form.twap_rate).
        """
        arr = self._rate_array(x, allow_zero=False)
        with np.errstate(over="ignore"):
            return _match(x, arr * self._h(arr) - self._g(arr))

    @property
    def marginal_floor(self) -> float:
        """Smallest marginal impact on the rising branch, h(threshold)."""
        if self.threshold > 0.0:
            return float(self._h(np.array([self.threshold]))[0])
        return 0.0

    def h_inverse(self, ybar):
        """Inverse of h on its rising branch: the x >= threshold with h(x) = ybar.

        Closed form where the family allows it, otherwise a doubling bracket
        plus bisection, run until |h(x) - ybar| <= 1e-12 * (1 + ybar).
        """
        if not self.unbounded_marginal:
            raise MarginalNotInvertibleError(
                f"{self.family} impact has a constant marginal; no inverse exists"
            )
        arr = np.atleast_1d(np.asarray(ybar, dtype=float))
        floor = self.marginal_floor
        if np.any(arr < floor):
            raise ValueError(f"h_inverse needs ybar >= h(threshold) = {floor}")
        return _match(ybar, self._h_inverse(arr))

    # -- hooks ----------------------------------------------------------------

    def _g(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _h(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _h_inverse(self, ybar: np.ndarray) -> np.ndarray:
        # Generic vectorized solve: bracket by geometric expansion past the
        # threshold, then bisect.  Monotonicity of h above the threshold
        # guarantees both stages terminate for any finite target.
        lo = np.full_like(ybar, float(self.threshold))
        hi = lo + 1.0
        for _ in range(500):
            short = self._h(hi) < ybar
            if not short.any():
                break
            hi = np.where(short, self.threshold + 8.0 * (hi - self.threshold), hi)
            if not np.isfinite(hi).all():
                raise NumericalFailure("marginal inverse target beyond float range")
        else:
            raise NumericalFailure("could not bracket the marginal inverse")
        mid = 0.5 * (lo + hi)
        for _ in range(200):
            hmid = self._h(mid)
            if np.all(np.abs(hmid - ybar) <= _INVERSE_RTOL * (1.0 + ybar)):
                return mid
            low_side = hmid < ybar
            lo = np.where(low_side, mid, lo)
            hi = np.where(low_side, hi, mid)
            mid = 0.5 * (lo + hi)
        raise NumericalFailure("marginal inverse bisection did not reach tolerance")

    # -- plumbing ---------------------------------------------------------------

    def _rate_array(self, x, allow_zero: bool) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if allow_zero:
            if np.any(arr < 0.0):
                raise ValueError("selling rate must be non-negative")
        elif np.any(arr <= 0.0):
            raise ValueError("selling rate must be positive")
        return arr

    def params(self) -> dict:
        raise NotImplementedError

    def to_config(self) -> dict:
        """Flat key/value mapping for the [impact] config section."""
        out = {"family": self.family}
        out.update({k: repr(v) for k, v in self.params().items()})
        return out

    def __repr__(self):
        inner = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


@dataclass(frozen=True, repr=False)
class MixedPowerImpact(ImpactModel):
    """Concave power below the threshold, convex power above.

    g(x) = beta * x**p_concave       for x <= threshold
           alpha * x**p_convex + gamma  above,

    with beta and gamma the unique constants making g continuously
    differentiable at the threshold:

        beta  = (p_convex / p_concave) * alpha * threshold**(p_convex - p_concave)
        gamma = (p_convex / p_concave - 1) * alpha * threshold**p_convex

    threshold = 0 collapses to the pure convex power alpha * x**p_convex.
    """

    alpha: float
    p_convex: float
    p_concave: float
    threshold: float = 0.0
    beta: float = field(init=False)
    gamma: float = field(init=False)

    family = "mixed_power"

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.p_convex <= 1.0:
            raise ValueError("convex exponent must exceed 1")
        if not 0.0 < self.p_concave < 1.0:
            raise ValueError("concave exponent must lie in (0, 1)")
        if self.threshold < 0.0:
            raise ValueError("threshold must be non-negative")
        ratio = self.p_convex / self.p_concave
        object.__setattr__(
            self, "beta", ratio * self.alpha * self.threshold ** (self.p_convex - self.p_concave)
        )
        object.__setattr__(
            self, "gamma", (ratio - 1.0) * self.alpha * self.threshold ** self.p_convex
        )

    def _g(self, x):
        out = np.empty_like(x)
        lo = x <= self.threshold
        out[lo] = self.beta * x[lo] ** self.p_concave
        out[~lo] = self.alpha * x[~lo] ** self.p_convex + self.gamma
        return out

    def _h(self, x):
        out = np.empty_like(x)
        lo = x <= self.threshold
        out[lo] = self.beta * self.p_concave * x[lo] ** (self.p_concave - 1.0)
        out[~lo] = self.alpha * self.p_convex * x[~lo] ** (self.p_convex - 1.0)
        return out

    def _h_inverse(self, ybar):
        x = (ybar / (self.alpha * self.p_convex)) ** (1.0 / (self.p_convex - 1.0))
        return np.maximum(x, self.threshold)

    def params(self):
        return {
            "alpha": self.alpha,
            "p_convex": self.p_convex,
            "p_concave": self.p_concave,
            "threshold": self.threshold,
        }


@dataclass(frozen=True, repr=False)
class ShiftedConvexImpact(ImpactModel):
    """Zero impact up to the threshold, then a shifted convex power.

    g(x) = max(x - threshold, 0)**power.  Selling below the threshold is
    free, which makes this the boundary case of the S-shape: the marginal
    is identically zero on the concave side and h(threshold) = 0.
    """

    power: float
    threshold: float

    family = "shifted_convex"

    def __post_init__(self):
        if self.power <= 1.0:
            raise ValueError("power must exceed 1")
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")

    def _g(self, x):
        return np.maximum(x - self.threshold, 0.0) ** self.power

    def _h(self, x):
        return self.power * np.maximum(x - self.threshold, 0.0) ** (self.power - 1.0)

    def _h_inverse(self, ybar):
        return self.threshold + (ybar / self.power) ** (1.0 / (self.power - 1.0))

    def params(self):
        return {"power": self.power, "threshold": self.threshold}


@dataclass(frozen=True, repr=False)
class QuadraticImpact(ImpactModel):
    """g(x) = alpha0 * x**2, the simplest purely convex case."""

    alpha0: float

    family = "quadratic"

    def __post_init__(self):
        if self.alpha0 <= 0.0:
            raise ValueError("alpha0 must be positive")

    def _g(self, x):
        return self.alpha0 * x * x

    def _h(self, x):
        return 2.0 * self.alpha0 * x

    def _h_inverse(self, ybar):
        return ybar / (2.0 * self.alpha0)

    def params(self):
        return {"alpha0": self.alpha0}


@dataclass(frozen=True, repr=False)
class LinearImpact(ImpactModel):
    """g(x) = alpha * x.  The marginal is constant, so the model fails the
    divergence requirement and x*h(x) - g(x) vanishes identically; it is
    admitted only for limit comparisons (quasi-block liquidation) and every
    operation needing h's inverse rejects it."""

    alpha: float

    family = "linear"
    unbounded_marginal = False

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")

    def _g(self, x):
        return self.alpha * x

    def _h(self, x):
        return np.full_like(x, self.alpha)

    def params(self):
        return {"alpha": self.alpha}


@dataclass(frozen=True, repr=False)
class LevyEffectiveImpact(ImpactModel):
    """Effective impact of a quadratic base curve under a Gamma random clock.

    g(x) = gamma * alpha0 * x**2 + alpha1 * log(alpha0 * beta1 * x**2 + 1),
    where alpha0 is the base quadratic coefficient and (gamma, alpha1, beta1)
    are the clock's drift, shape rate and scale.  Convexity (and hence the
    rising marginal) requires alpha1 * beta1 <= 8 * gamma, which the
    constructor enforces.
    """

    gamma: float
    alpha0: float
    alpha1: float
    beta1: float

    family = "levy_effective"

    def __post_init__(self):
        for name in ("gamma", "alpha0", "alpha1", "beta1"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.alpha1 * self.beta1 > 8.0 * self.gamma:
            raise ValueError(
                "alpha1 * beta1 must not exceed 8 * gamma (impact would lose convexity)"
            )

    def _g(self, x):
        u = self.alpha0 * self.beta1 * x * x
        return self.gamma * self.alpha0 * x * x + self.alpha1 * np.log1p(u)

    def _h(self, x):
        u = self.alpha0 * self.beta1 * x * x
        return 2.0 * self.gamma * self.alpha0 * x + 2.0 * self.alpha0 * self.alpha1 * self.beta1 * x / (u + 1.0)

    def params(self):
        return {
            "gamma": self.gamma,
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "beta1": self.beta1,
        }


_FAMILIES = {
    "mixed_power": MixedPowerImpact,
    "shifted_convex": ShiftedConvexImpact,
    "quadratic": QuadraticImpact,
    "linear": LinearImpact,
    "levy_effective": LevyEffectiveImpact,
}


def impact_from_config(mapping) -> ImpactModel:
    """Build a model from a flat key/value mapping (inverse of to_config)."""
    items = {str(k): str(v) for k, v in dict(mapping).items()}
    family = items.pop("family", None)
    if family is None:
        raise ValueError("impact config needs a 'family' key")
    cls = _FAMILIES.get(family)
    if cls is None:
        raise ValueError(f"unknown impact family {family!r}; choose from {sorted(_FAMILIES)}")
    import dataclasses

    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(items) - names
    if unknown:
        raise ValueError(f"unknown {family} parameter(s): {sorted(unknown)}")
    try:
        kwargs = {k: float(v) for k, v in items.items()}
    except ValueError as exc:
        raise ValueError(f"non-numeric impact parameter: {exc}") from None
    return cls(**kwargs)


# -- shape validation -------------------------------------------------------


@dataclass
class ShapeCheck:
    name: str
    passed: bool
    first_violation: float | None = None
    detail: str = ""


@dataclass
class ShapeReport:
    family: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]

    def __str__(self):
        lines = [f"shape report for {self.family}:"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f" (at x={c.first_violation:g}: {c.detail})" if not c.passed else ""
            lines.append(f"  {status}  {c.name}{extra}")
        return "\n".join(lines)


def default_validation_grid() -> np.ndarray:
    """512 log-spaced rates covering both the x -> 0 and the divergence checks."""
    return np.logspace(-6.0, 3.0, 512)


def validate_s_shape(model: ImpactModel, grid=None, small_trade_tol: float = 1e-2) -> ShapeReport:
    """Numeric audit of the four structural conditions an S-shaped curve obeys.

    nonneg: g(0) = 0, g non-decreasing, marginal non-negative.
    vanishing_small_trades: x*h(x) ~ 0 for x = 1e-8.  A point check cannot
        confirm a limit for slowly vanishing marginals, hence the loose
        default tolerance.
    v_shaped_marginal: h non-increasing up to the threshold (the boundary
        family has h = 0 there) and strictly increasing beyond it.
    diverging_marginal: h keeps growing along the tail of the grid; constant
        marginals fail here and the model's own flag is cross-checked.
    """
    if grid is None:
        grid = default_validation_grid()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 8:
        raise ValueError("validation grid must be a 1-d array with at least 8 points")
    if np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
        raise ValueError("validation grid must be positive and strictly increasing")

    gvals = model.g(grid)
    hvals = model.h(grid)
    checks = []

    # nonneg
    ok = True
    viol = None
    detail = ""
    if model.g(0.0) != 0.0:
        ok, viol, detail = False, 0.0, f"g(0) = {model.g(0.0)!r}"
    if ok:
        bad = np.nonzero(hvals < -1e-12)[0]
        if bad.size:
            ok, viol, detail = False, float(grid[bad[0]]), f"h = {hvals[bad[0]]:g}"
    if ok:
        bad = np.nonzero(np.diff(gvals) < -1e-12 * (1.0 + np.abs(gvals[:-1])))[0]
        if bad.size:
            ok, viol, detail = False, float(grid[bad[0] + 1]), "g decreased"
    checks.append(ShapeCheck("nonneg", ok, viol, detail))

    # vanishing_small_trades
    x_small = 1e-8
    m = x_small * model.h(x_small)
    ok = m < small_trade_tol
    checks.append(
        ShapeCheck(
            "vanishing_small_trades",
            ok,
            None if ok else x_small,
            "" if ok else f"x*h(x) = {m:g}",
        )
    )

    # v_shaped_marginal
    ok, viol, detail = True, None, ""
    below = grid <= model.threshold
    hb = hvals[below]
    if hb.size >= 2:
        bad = np.nonzero(np.diff(hb) > 1e-12 * (1.0 + np.abs(hb[:-1])))[0]
        if bad.size:
            ok = False
            viol = float(grid[below][bad[0] + 1])
            detail = "marginal increased below the threshold"
    if ok:
        ha = hvals[~below]
        xa = grid[~below]
        if ha.size >= 2:
            bad = np.nonzero(np.diff(ha) <= 0.0)[0]
            if bad.size:
                ok = False
                viol = float(xa[bad[0] + 1])
                detail = "marginal not strictly increasing above the threshold"
    checks.append(ShapeCheck("v_shaped_marginal", ok, viol, detail))

    # diverging_marginal
    ok, viol, detail = True, None, ""
    if not model.unbounded_marginal:
        ok, viol = False, float(grid[-1])
        detail = "model declares a bounded marginal"
    else:
        tail = hvals[grid > model.threshold]
        if tail.size >= 2 and not tail[-1] > tail[tail.size // 2]:
            ok, viol = False, float(grid[-1])
            detail = "marginal stopped growing along the tail"
    checks.append(ShapeCheck("diverging_marginal", ok, viol, detail))

    return ShapeReport(family=model.family, checks=checks)
