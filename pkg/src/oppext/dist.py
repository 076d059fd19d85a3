"""Distribution functions on [0, 1] and the F-derived quantities used by the bounds.

A :class:`DistributionSpec` plays the role of the common distribution function
``F`` of the digit chain.  Besides evaluation it provides the generalized
inverse (for sampling), the mean slope ``S_a``, Lipschitz scans, tail-slope
estimation and the domain-of-attraction checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FAMILIES = ("uniform", "powertail", "piecewise_linear", "table")

#: classification thresholds for numerically estimated limits
DIVERGENCE_LEVEL = 1e6
VANISHING_LEVEL = 1e-6
AGREEMENT_RTOL = 1e-4
POWER_EXPONENT_MIN = 0.05

LIPSCHITZ_TOL = 1e-12


class DistributionError(ValueError):
    """Raised for malformed distribution specifications."""


def default_t_sequence() -> np.ndarray:
    """Geometric sequence ``10**(-k/2)`` for ``k = 2..24``."""
    return 10.0 ** (-np.arange(2, 25) / 2.0)


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution function ``F`` supported on [0, 1].

    Use the constructors :meth:`uniform`, :meth:`powertail`,
    :meth:`piecewise_linear` and :meth:`table` rather than calling the class
    directly.  ``knots`` holds ``(x, F(x))`` pairs for the two interpolated
    families; beyond the last knot ``F`` stays flat until it jumps to 1 at
    ``x = 1``.
    """

    family: str
    alpha: float | None = None
    knots: tuple[tuple[float, float], ...] | None = None
    lipschitz_beta: float | None = None
    _x: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)
    _f: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DistributionError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.lipschitz_beta is not None and not self.lipschitz_beta >= 0:
            raise DistributionError("lipschitz_beta must be nonnegative")
        if self.family == "powertail":
            if self.alpha is None or not 0 < self.alpha <= 1:
                raise DistributionError("powertail requires alpha in (0, 1]")
        if self.family in ("piecewise_linear", "table"):
            self._validate_knots()

    # -- constructors -------------------------------------------------------

    @classmethod
    def uniform(cls, lipschitz_beta: float | None = None) -> "DistributionSpec":
        return cls("uniform", lipschitz_beta=lipschitz_beta)

    @classmethod
    def powertail(cls, alpha: float, lipschitz_beta: float | None = None) -> "DistributionSpec":
        """``F(x) = 1 - (1 - x)**alpha`` on [0, 1)."""
        return cls("powertail", alpha=float(alpha), lipschitz_beta=lipschitz_beta)

    @classmethod
    def piecewise_linear(cls, knots: Sequence[Sequence[float]],
                         lipschitz_beta: float | None = None) -> "DistributionSpec":
        pairs = tuple((float(x), float(y)) for x, y in knots)
        return cls("piecewise_linear", knots=pairs, lipschitz_beta=lipschitz_beta)

    @classmethod
    def table(cls, values: Sequence[float], grid: Sequence[float] | None = None,
              lipschitz_beta: float | None = None) -> "DistributionSpec":
        """Tabulated CDF values on ``grid`` (default: equally spaced on [0, 1])."""
        values = [float(v) for v in values]
        if grid is None:
            grid = np.linspace(0.0, 1.0, len(values)).tolist()
        if len(grid) != len(values):
            raise DistributionError("table grid and values differ in length")
        pairs = tuple(zip((float(x) for x in grid), values))
        return cls("table", knots=pairs, lipschitz_beta=lipschitz_beta)

    def _validate_knots(self):
        if not self.knots or len(self.knots) < 2:
            raise DistributionError(f"{self.family} needs at least two knots")
        x = np.array([k[0] for k in self.knots], dtype=float)
        f = np.array([k[1] for k in self.knots], dtype=float)
        if x[0] != 0.0 or f[0] != 0.0:
            raise DistributionError("knots must start at (0, 0)")
        if np.any(np.diff(x) <= 0):
            raise DistributionError("knot x-values must be strictly increasing")
        if np.any(np.diff(f) < 0):
            raise DistributionError("knot F-values must be nondecreasing")
        if x[-1] > 1.0 or f[-1] > 1.0 or f.min() < 0.0:
            raise DistributionError("knots must lie in [0, 1] x [0, 1]")
        if self.family == "table" and x[-1] != 1.0:
            raise DistributionError("table grid must end at x = 1")
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_f", f)

    # -- evaluation ---------------------------------------------------------

    def cdf(self, x):
        """Evaluate ``F``; 0 for ``x <= 0`` and 1 for ``x >= 1``."""
        x = np.asarray(x, dtype=float)
        inner = (x > 0) & (x < 1)
        xi = np.where(inner, x, 0.5)
        if self.family == "uniform":
            vals = xi
        elif self.family == "powertail":
            vals = -np.expm1(self.alpha * np.log1p(-xi))
        else:
            vals = np.interp(xi, self._x, self._f)
        out = np.where(inner, vals, np.where(x >= 1, 1.0, 0.0))
        return out if out.ndim else float(out)

    def upper_tail(self, t):
        """``1 - F(1 - t)`` for ``t`` in (0, 1], computed without cancellation."""
        t = np.asarray(t, dtype=float)
        if self.family == "uniform":
            out = np.clip(t, 0.0, 1.0)
        elif self.family == "powertail":
            out = np.clip(t, 0.0, 1.0) ** self.alpha
        else:
            out = 1.0 - np.asarray(self.cdf(1.0 - t))
        return out if out.ndim else float(out)

    @property
    def left_limit_at_one(self) -> float:
        """``lim_{t -> 1-} F(t)``; below 1 when F jumps at 1."""
        if self.family in ("uniform", "powertail"):
            return 1.0
        return float(self._f[-1])

    @property
    def has_density(self) -> bool:
        return self.left_limit_at_one == 1.0

    def pdf(self, x):
        """Density on (0, 1); for interpolated families the right slope."""
        if not self.has_density:
            raise DistributionError(f"{self.family} spec has no density")
        x = np.asarray(x, dtype=float)
        if self.family == "uniform":
            out = np.ones_like(x)
        elif self.family == "powertail":
            out = self.alpha * (1.0 - x) ** (self.alpha - 1.0)
        else:
            slopes = np.diff(self._f) / np.diff(self._x)
            idx = np.clip(np.searchsorted(self._x, x, side="right") - 1, 0, len(slopes) - 1)
            out = slopes[idx]
        return out if out.ndim else float(out)

    def density_near_one(self, y):
        """``f(1 - y)`` evaluated stably for small ``y``."""
        y = np.asarray(y, dtype=float)
        if self.family == "powertail":
            out = self.alpha * y ** (self.alpha - 1.0)
            return out if out.ndim else float(out)
        return self.pdf(1.0 - y)

    def ppf(self, u):
        """Generalized inverse ``inf{x : F(x) >= u}`` for ``u`` in (0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            out = u.copy()
        elif self.family == "powertail":
            with np.errstate(divide="ignore"):
                out = -np.expm1(np.log1p(-u) / self.alpha)
        else:
            xk, fk = self._x, self._f
            j = np.clip(np.searchsorted(fk, u, side="left"), 1, len(fk) - 1)
            lo_f, hi_f = fk[j - 1], fk[j]
            span = np.where(hi_f > lo_f, hi_f - lo_f, 1.0)
            frac = np.clip((u - lo_f) / span, 0.0, 1.0)
            out = xk[j - 1] + frac * (xk[j] - xk[j - 1])
            # mass beyond the last knot sits in the jump at 1
            out = np.where(u > fk[-1], 1.0, out)
        return out if out.ndim else float(out)

    @property
    def beta(self) -> float | None:
        """Lipschitz constant: the declared one, else the exact one when known."""
        if self.lipschitz_beta is not None:
            return float(self.lipschitz_beta)
        if self.family == "uniform":
            return 1.0
        if self.family == "powertail":
            return 1.0 if self.alpha == 1.0 else None
        if not self.has_density:
            return None
        return float(np.max(np.diff(self._f) / np.diff(self._x)))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"family": self.family}
        if self.family == "powertail":
            d["alpha"] = self.alpha
        if self.family == "piecewise_linear":
            d["knots"] = [list(k) for k in self.knots]
        if self.family == "table":
            d["grid"] = [k[0] for k in self.knots]
            d["values"] = [k[1] for k in self.knots]
        if self.lipschitz_beta is not None:
            d["lipschitz_beta"] = self.lipschitz_beta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        family = d.get("family")
        beta = d.get("lipschitz_beta")
        if family == "uniform":
            return cls.uniform(beta)
        if family == "powertail":
            if "alpha" not in d:
                raise DistributionError("powertail requires 'alpha'")
            return cls.powertail(d["alpha"], beta)
        if family == "piecewise_linear":
            return cls.piecewise_linear(d.get("knots") or [], beta)
        if family == "table":
            return cls.table(d.get("values") or [], d.get("grid"), beta)
        raise DistributionError(f"unknown family {family!r}")


def cdf_eval(spec: DistributionSpec, x: float) -> float:
    return spec.cdf(x)


def slope_s(spec: DistributionSpec, a: float) -> float:
    """Mean slope of ``F`` between ``1/(a+1)`` and ``1/a``."""
    if not a >= 1:
        raise ValueError(f"slope_s needs a >= 1, got {a}")
    lo, hi = 1.0 / (a + 1.0), 1.0 / a
    return float((spec.cdf(hi) - spec.cdf(lo)) / (hi - lo))


def slope_sup(spec: DistributionSpec, a_grid: Sequence[float]) -> float:
    """Supremum of ``slope_s`` over a finite grid of ``a`` values."""
    return max(slope_s(spec, a) for a in a_grid)


# -- Lipschitz scan ---------------------------------------------------------

@dataclass
class LipschitzReport:
    beta_used: float
    max_violation: float
    worst_x: float
    passed: bool

    def to_dict(self) -> dict:
        return {"beta_used": self.beta_used, "max_violation": self.max_violation,
                "worst_x": self.worst_x, "pass": self.passed}


def verify_lipschitz(spec: DistributionSpec, beta: float,
                     grid_points: int = 1000) -> LipschitzReport:
    """Scan adjacent grid pairs for violations of ``F(x) - F(y) <= beta (x - y)``.

    Only falsifies: a pass on a non-interpolated family is evidence, not proof.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    xs = np.linspace(0.0, 1.0, grid_points)
    if spec.knots:
        xs = np.union1d(xs, [k[0] for k in spec.knots])
    fx = np.asarray(spec.cdf(xs))
    quot = np.diff(fx) / np.diff(xs)
    excess = quot - beta
    i = int(np.argmax(excess))
    worst = float(excess[i])
    return LipschitzReport(float(beta), worst, float(xs[i]), worst <= LIPSCHITZ_TOL)


# -- limits -----------------------------------------------------------------

def classify_limit(ts: Sequence[float], values: Sequence[float]) -> tuple[str, float | None]:
    """Classify the limit of ``values`` as ``ts`` decreases to zero.

    Returns ``(kind, estimate)`` with kind one of ``finite``, ``infinity``,
    ``zero`` or ``undetermined``.  A sequence is finite when its last three
    values agree to a relative 1e-4; it diverges when the last three increase
    and either exceed 1e6 or grow like a power of ``1/t`` with exponent at
    least 0.05; the vanishing case mirrors divergence.
    """
    ts = np.asarray(ts, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    ts, v = ts[ok], v[ok]
    if len(v) < 3:
        return "undetermined", None
    last = v[-3:]
    ref = abs(last[-1])
    if ref == 0.0 and np.all(last == 0.0):
        return "finite", 0.0
    if np.max(np.abs(last - last[-1])) <= AGREEMENT_RTOL * ref:
        r = ts[-1] / ts[-2]
        rich = (v[-1] - r * v[-2]) / (1.0 - r)
        est = rich if abs(rich - v[-1]) <= AGREEMENT_RTOL * ref else v[-1]
        return "finite", float(est)
    if np.all(last > 0):
        logs = np.log(last)
        expo = np.diff(logs) / -np.diff(np.log(ts[-3:]))
        rising = np.all(np.diff(last) > 0)
        falling = np.all(np.diff(last) < 0)
        if rising and (np.all(last > DIVERGENCE_LEVEL) or np.all(expo >= POWER_EXPONENT_MIN)):
            return "infinity", math.inf
        if falling and (np.all(last < VANISHING_LEVEL) or np.all(expo <= -POWER_EXPONENT_MIN)):
            return "zero", 0.0
    return "undetermined", None


@dataclass
class TailLimits:
    """Tail slopes at 0+ and 1-; ``None`` means the numerics could not decide."""

    ell0_plus: float | None
    ell1_minus: float | None
    kind0: str
    kind1: str
    trace0: list[tuple[float, float]]
    trace1: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {"ell0_plus": self.ell0_plus, "ell1_minus": self.ell1_minus,
                "kind0": self.kind0, "kind1": self.kind1,
                "trace0": [list(p) for p in self.trace0],
                "trace1": [list(p) for p in self.trace1]}


def estimate_tail_limits(spec: DistributionSpec,
                         t_sequence: Sequence[float] | None = None) -> TailLimits:
    """Estimate ``lim F(t)/t`` at 0+ and ``lim (F(t)-1)/(t-1)`` at 1-."""
    ts = default_t_sequence() if t_sequence is None else np.asarray(t_sequence, dtype=float)
    if len(ts) < 4:
        raise ValueError("t_sequence needs at least 4 points")
    if np.any(np.diff(ts) >= 0) or ts[0] >= 0.5 or ts[-1] <= 0:
        raise ValueError("t_sequence must decrease strictly inside (0, 0.5)")
    q0 = np.asarray(spec.cdf(ts)) / ts
    q1 = np.asarray(spec.upper_tail(ts)) / ts
    k0, e0 = classify_limit(ts, q0)
    k1, e1 = classify_limit(ts, q1)
    return TailLimits(e0, e1, k0, k1,
                      list(zip(ts.tolist(), q0.tolist())), list(zip(ts.tolist(), q1.tolist())))


# -- domain-of-attraction conditions ----------------------------------------

DEFAULT_H_VALUES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class Eq8Report:
    h_values: list[float]
    liminf_estimates: list[float]
    kinds: list[str]
    traces: list[list[tuple[float, float]]]
    passed: bool

    def to_dict(self) -> dict:
        return {"h_values": self.h_values, "liminf_estimates": self.liminf_estimates,
                "kinds": self.kinds, "traces": [[list(p) for p in t] for t in self.traces],
                "pass": self.passed}


@dataclass
class Eq10Report:
    applicable: bool
    limit_estimate: float | None
    kind: str
    density_increasing: bool | None
    trace: list[tuple[float, float]]
    passed: bool

    def to_dict(self) -> dict:
        return {"applicable": self.applicable, "limit_estimate": self.limit_estimate,
                "kind": self.kind, "density_increasing": self.density_increasing,
                "trace": [list(p) for p in self.trace], "pass": self.passed}


@dataclass
class MdaReport:
    condF: LipschitzReport
    eq8: Eq8Report
    eq10: Eq10Report
    tail: TailLimits
    left_limit_at_one: float
    jump_at_one: bool

    def to_dict(self) -> dict:
        return {"condF": self.condF.to_dict(), "eq8": self.eq8.to_dict(),
                "eq10": self.eq10.to_dict(), "tail": self.tail.to_dict(),
                "left_limit_at_one": self.left_limit_at_one, "jump_at_one": self.jump_at_one}


def _eq8_trace(spec, h, ys):
    hy = h * ys
    valid = hy < 1.0
    with np.errstate(divide="ignore"):
        logf = np.log1p(-np.asarray(spec.upper_tail(np.where(valid, hy, 0.5))))
    vals = np.where(valid, logf / (ys * np.log(ys)), np.nan)
    return vals


def check_mda_conditions(spec: DistributionSpec,
                         h_values: Sequence[float] = DEFAULT_H_VALUES,
                         y_sequence: Sequence[float] | None = None,
                         beta: float | None = None,
                         grid_points: int = 1000) -> MdaReport:
    """Bundle the Lipschitz scan, tail limits and the two sufficient conditions
    for degenerate minima (the ``log F(1-hy)/(y log y)`` liminf and the
    ``f(1-y)/(-log y)`` divergence)."""
    if not len(h_values):
        raise ValueError("h_values must be nonempty")
    ys = default_t_sequence() if y_sequence is None else np.asarray(y_sequence, dtype=float)
    if np.any(np.diff(ys) >= 0) or ys[-1] <= 0:
        raise ValueError("y_sequence must decrease strictly toward 0")

    beta_used = beta if beta is not None else (spec.beta if spec.beta is not None else 1.0)
    lip = verify_lipschitz(spec, beta_used, grid_points)

    estimates, kinds, traces = [], [], []
    for h in h_values:
        vals = _eq8_trace(spec, h, ys)
        kind, est = classify_limit(ys, vals)
        if est is None:
            finite = vals[np.isfinite(vals)]
            est = float(np.min(finite[-3:])) if len(finite) else math.nan
        estimates.append(float(est))
        kinds.append(kind)
        traces.append(list(zip(ys.tolist(), vals.tolist())))
    eq8 = Eq8Report([float(h) for h in h_values], estimates, kinds, traces,
                    all(e > 1 for e in estimates))

    if spec.has_density:
        f_trace = np.asarray(spec.density_near_one(ys)) / -np.log(ys)
        kind, est = classify_limit(ys, f_trace)
        grid = np.linspace(0.0, 1.0, 202)[1:-1]
        increasing = bool(np.all(np.diff(np.asarray(spec.pdf(grid))) >= 0))
        eq10 = Eq10Report(True, est, kind, increasing,
                          list(zip(ys.tolist(), f_trace.tolist())), kind == "infinity")
    else:
        eq10 = Eq10Report(False, None, "not_applicable", None, [], False)

    tail = estimate_tail_limits(spec, ys[ys < 0.5])
    lim1 = spec.left_limit_at_one
    return MdaReport(lip, eq8, eq10, tail, lim1, lim1 < 1.0)
