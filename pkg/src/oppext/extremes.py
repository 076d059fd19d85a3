"""Running extremes of ratio sequences and their limit laws.

``M_n`` and ``Z_n`` are the running maximum and minimum of ``R_1..R_n``.  The
experiments here simulate many replicas, normalize ``M_n`` or ``1/Z_n``, and
compare the empirical distribution with the asymptotic law and, for iid
presets, with the exact finite-``n`` law.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import GapEstimate, binomial_se, thm6_band
from .dist import DistributionSpec, estimate_tail_limits, slope_sup
from .engine import AffinePhi, LurothSampler, OppenheimSystem, delta, replica_map, simulate_chain

LIMIT_FAMILIES = ("frechet", "weibull", "step_at_zero", "const_one", "step_positive", "const_zero")
NORMALIZATIONS = ("frechet_scale", "weibull_shift", "inverse_min")
SCALE_TAGS = {
    None: lambda n: 1.0,
    "one": lambda n: 1.0,
    "sqrt(n)": lambda n: math.sqrt(n),
    "n": lambda n: float(n),
    "n log n": lambda n: n * math.log(n),
}


class ExperimentConfigError(ValueError):
    pass


@dataclass
class ExtremeSeries:
    n: int
    running_max: list
    running_min: list


def extreme_series(ratios: Sequence[float]) -> ExtremeSeries:
    if len(ratios) == 0:
        raise ValueError("ratios must be nonempty")
    r = np.asarray([float(v) for v in ratios])
    return ExtremeSeries(len(r), np.maximum.accumulate(r).tolist(),
                         np.minimum.accumulate(r).tolist())


@dataclass(frozen=True)
class LimitSpec:
    """A limit law; ``param`` is the tail slope for ``frechet``/``weibull``."""

    family: str
    param: float | None = None

    def __post_init__(self):
        if self.family not in LIMIT_FAMILIES:
            raise ValueError(f"unknown limit family {self.family!r}")
        if self.family in ("frechet", "weibull"):
            if self.param is None or not 0 < self.param < math.inf:
                raise ValueError(f"{self.family} needs a finite positive parameter")

    def to_dict(self) -> dict:
        return asdict(self)


def limit_cdf(spec: LimitSpec, x):
    """Evaluate a limit law; vectorized over ``x``.

    ``frechet(l)``: ``exp(-l/x)`` for ``x > 0``; ``weibull(l)``: ``exp(l x)``
    for ``x <= 0``; the degenerate families are the step and constant laws.
    """
    x = np.asarray(x, dtype=float)
    fam = spec.family
    if fam == "frechet":
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(x > 0, np.exp(-spec.param / np.where(x > 0, x, 1.0)), 0.0)
    elif fam == "weibull":
        out = np.where(x <= 0, np.exp(spec.param * np.minimum(x, 0.0)), 1.0)
    elif fam == "step_at_zero":
        out = np.where(x >= 0, 1.0, 0.0)
    elif fam == "step_positive":
        out = np.where(x > 0, 1.0, 0.0)
    elif fam == "const_one":
        out = np.ones_like(x)
    else:
        out = np.zeros_like(x)
    return out if out.ndim else float(out)


@dataclass
class EcdfReport:
    """Empirical vs theoretical probabilities on a grid.

    ``theoretical`` holds the asymptotic law (``None`` entries where no limit
    is asserted); ``finite_n`` holds the exact law at the simulated ``n`` when
    a closed form exists.
    """

    grid: list[float]
    empirical: list[float]
    se: list[float]
    theoretical: list[float | None]
    ks_distance: float | None
    replicas: int
    n: int | None
    normalization: dict
    finite_n: list[float] | None = None
    finite_n_ks: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["x", "empirical", "se", "theoretical"]
        if self.finite_n is not None:
            header.append("finite_n")
        rows = []
        for i, x in enumerate(self.grid):
            row = [x, self.empirical[i], self.se[i], self.theoretical[i]]
            if self.finite_n is not None:
                row.append(self.finite_n[i])
            rows.append(row)
        return header, rows


def _ks(emp: np.ndarray, theo) -> float | None:
    if theo is None:
        return None
    t = np.array([np.nan if v is None else v for v in theo], dtype=float)
    ok = np.isfinite(t)
    if not ok.any():
        return None
    return float(np.max(np.abs(emp[ok] - t[ok])))


def compare_to_limit(samples: Sequence[float], spec: LimitSpec | Callable, grid: Sequence[float],
                     normalization: dict | None = None, n: int | None = None) -> EcdfReport:
    """Empirical CDF of ``samples`` at ``grid`` against a limit law."""
    s = np.sort(np.asarray(samples, dtype=float))
    if len(s) == 0:
        raise ValueError("samples must be nonempty")
    g = np.asarray(grid, dtype=float)
    if np.any(np.diff(g) < 0):
        raise ValueError("grid must be sorted")
    emp = np.searchsorted(s, g, side="right") / len(s)
    cdf = spec if callable(spec) else (lambda x: limit_cdf(spec, x))
    theo = np.asarray(cdf(g), dtype=float)
    se = [binomial_se(float(p), len(s)) for p in emp]
    return EcdfReport(g.tolist(), emp.tolist(), se, theo.tolist(), _ks(emp, theo.tolist()),
                      len(s), n, normalization or {})


# -- finite-n laws for iid presets ----------------------------------------

def _iid_system(system) -> bool:
    if isinstance(system, LurothSampler):
        return True
    return (isinstance(system, OppenheimSystem) and isinstance(system.phi, AffinePhi)
            and system.phi.c1 == 0 and system.constant_q)


def iid_ratio_cdf(system, t):
    """``P(R <= t)`` for a system whose ratios are iid."""
    t = np.asarray(t, dtype=float)
    if isinstance(system, LurothSampler):
        out = np.where(t < 2, 0.0, 1.0 - 1.0 / np.floor(np.maximum(t, 1.0)))
    else:
        phi, q = float(system.phi.c0), float(system.q)
        # R > t  iff  digit >= floor(t phi (1+q) - phi q) + 1
        kmin = np.maximum(np.floor(t * phi * (1 + q) - phi * q) + 1.0, phi)
        out = 1.0 - np.asarray(system.F.cdf(delta(phi, kmin, q)))
        out = np.where(t * phi * (1 + q) - phi * q < phi, 0.0, out)
    return out if out.ndim else float(out)


def iid_ratio_at_least(system, c):
    """``P(R >= c)`` for a system whose ratios are iid."""
    c = np.asarray(c, dtype=float)
    if isinstance(system, LurothSampler):
        out = 1.0 / (np.ceil(np.maximum(c, 2.0)) - 1.0)
    else:
        phi, q = float(system.phi.c0), float(system.q)
        kmin = np.maximum(np.ceil(c * phi * (1 + q) - phi * q), phi)
        out = np.asarray(system.F.cdf(delta(phi, kmin, q)))
    return out if out.ndim else float(out)


def luroth_max_law(n: int, t):
    """Exact ``P(M_n <= t)`` for the Lüroth sequence."""
    return np.asarray(iid_ratio_cdf(LurothSampler(), t)) ** n


# -- experiments ------------------------------------------------------------

def default_grid(normalization: str, points: int = 21) -> list[float]:
    """Grid spanning the central 98% of the relevant limit law."""
    p = np.linspace(0.01, 0.99, points)
    if normalization == "frechet_scale":
        return (-1.0 / np.log(p)).tolist()
    if normalization == "weibull_shift":
        return np.log(p).tolist()
    return np.linspace(-2.0, 2.0, points).tolist()


def _tail_slope(system, which: str, supplied: float | None) -> float:
    if supplied is not None:
        if not 0 < supplied < math.inf:
            raise ExperimentConfigError(f"{which} must be finite and positive")
        return float(supplied)
    tl = estimate_tail_limits(system.F)
    val = tl.ell0_plus if which == "ell0_plus" else tl.ell1_minus
    if val is None or not 0 < val < math.inf:
        raise ExperimentConfigError(
            f"{which} of the system's distribution is {val!r} numerically; "
            f"supply {which} explicitly to run this normalization")
    return float(val)


def max_limit_experiment(system, n: int, replicas: int, normalization: str,
                         grid: Sequence[float] | None, master_seed: int, *,
                         ell0_plus: float | None = None, ell1_minus: float | None = None,
                         p: int = 1, workers: int = 1) -> EcdfReport:
    """Simulate ``replicas`` paths of length ``n`` and compare a normalized extreme.

    ``frechet_scale``: ``P(M_n <= x n ell0)`` against ``exp(-1/x)``.
    ``weibull_shift``: ``P(1/Z_n <= 1 + x/(ell1 n))`` against ``exp(x)``, ``x <= 0``.
    ``inverse_min``: ``P(1/Z_n <= 1/p + x/n)``; a limit is asserted only for
    ``p = 1`` (a step at 0, or the constant 1 for the Lüroth law).
    """
    if normalization not in NORMALIZATIONS:
        raise ExperimentConfigError(f"unknown normalization {normalization!r}")
    if replicas < 100:
        raise ExperimentConfigError("replicas must be at least 100")
    if n < 1:
        raise ExperimentConfigError("n must be positive")
    xs = np.asarray(default_grid(normalization) if grid is None else grid, dtype=float)
    if np.any(np.diff(xs) < 0):
        raise ExperimentConfigError("grid must be sorted")

    if normalization == "frechet_scale":
        scale = _tail_slope(system, "ell0_plus", ell0_plus)
        thr = xs * n * scale
        limit = LimitSpec("frechet", 1.0)
        norm = {"statistic": "M_n", "scale": f"x * n * ell0_plus (ell0_plus={scale!r})",
                "shift": "none"}
    elif normalization == "weibull_shift":
        scale = _tail_slope(system, "ell1_minus", ell1_minus)
        if np.any(xs > 0):
            raise ExperimentConfigError("weibull_shift grid must be <= 0")
        thr = 1.0 + xs / (scale * n)
        limit = LimitSpec("weibull", 1.0)
        norm = {"statistic": "1/Z_n", "scale": f"1/(ell1_minus * n) (ell1_minus={scale!r})",
                "shift": "1"}
    else:
        if p < 1:
            raise ExperimentConfigError("p must be a positive integer")
        thr = 1.0 / p + xs / n
        # ratios of the Lüroth law never drop below 2, so 1/Z_n <= 1/2 < 1 + x/n eventually
        if p != 1:
            limit = None
        else:
            limit = LimitSpec("const_one" if isinstance(system, LurothSampler) else "step_at_zero")
        norm = {"statistic": "1/Z_n", "scale": "1/n", "shift": f"1/{p}"}

    use_max = normalization == "frechet_scale"

    def fn(seeds):
        r = simulate_chain(system, n, seeds)["ratios"]
        stat = r.max(axis=1) if use_max else 1.0 / r.min(axis=1)
        return stat[:, None] <= thr[None, :]

    counts = replica_map(fn, replicas, master_seed, workers).sum(axis=0)
    emp = counts / replicas
    se = [binomial_se(float(v), replicas) for v in emp]
    theo = limit_cdf(limit, xs).tolist() if limit is not None else [None] * len(xs)

    finite = None
    if _iid_system(system):
        if use_max:
            finite = np.asarray(iid_ratio_cdf(system, thr)) ** n
        else:
            pos = thr > 0
            c = np.where(pos, 1.0 / np.where(pos, thr, 1.0), np.inf)
            finite = np.where(pos, np.asarray(iid_ratio_at_least(system, c)) ** n, 0.0)
        finite = finite.tolist()
    norm["grid_thresholds"] = thr.tolist()
    return EcdfReport(xs.tolist(), emp.tolist(), se, theo, _ks(emp, theo), replicas, n, norm,
                      finite, _ks(emp, finite), {"system": getattr(system, "name", "custom"),
                                                 "normalization": normalization, "p": p})


def independence_gap(system, n: int, x: float, y: float, replicas: int, master_seed: int, *,
                     rho_scale: str | None = None, sigma_scale: str | None = None,
                     workers: int = 1, slope_grid: Sequence[float] | None = None) -> GapEstimate:
    """Estimate ``P(Z_n > x rho, M_n <= y sigma) - P(Z_n > x rho) P(M_n <= y sigma)``.

    The analytic envelope combines the three product-approximation bands
    ``|c - ab| <= |c - AB| + A |b - B| + |a - A|`` with ``A = F(1/a)^n`` and
    ``b <= 1``.
    """
    if not x > 1:
        raise ValueError("x must exceed 1")
    if not y > x:
        raise ValueError("y must exceed x")
    for tag in (rho_scale, sigma_scale):
        if tag not in SCALE_TAGS:
            raise ValueError(f"unknown scale tag {tag!r}; expected one of {list(SCALE_TAGS)[1:]}")
    a = x * SCALE_TAGS[rho_scale](n)
    b = y * SCALE_TAGS[sigma_scale](n)

    def fn(seeds):
        r = simulate_chain(system, n, seeds)["ratios"]
        return np.stack([r.min(axis=1) > a, r.max(axis=1) <= b], axis=1)

    ind = replica_map(fn, replicas, master_seed, workers).astype(float)
    A, B = ind[:, 0], ind[:, 1]
    C = A * B
    pa, pb, pc = A.mean(), B.mean(), C.mean()
    gap = pc - pa * pb
    psi = C - pb * A - pa * B
    se = float(np.std(psi, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0

    F = system.F
    fa = F.cdf(1 / a)
    iii = thm6_band(F, "iii", n, a=a).half_width
    if a < b:
        env = (thm6_band(F, "i", n, a=a, b=b).half_width
               + fa ** n * thm6_band(F, "ii", n, b=b).half_width + iii)
    else:
        env = fa ** n + iii
    grid = slope_grid if slope_grid is not None else np.geomspace(2.0, 1e6, 60)
    flags = {"F(1/x) < 1/2": bool(F.cdf(1 / x) < 0.5),
             "grid_sup_slope": slope_sup(F, grid)}
    return GapEstimate(float(gap), se, float(env), flags,
                       details={"p_joint": float(pc), "p_min": float(pa), "p_max": float(pb),
                                "a": a, "b": b, "n": n})
