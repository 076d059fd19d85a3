"""Explicit probability bounds for Oppenheim ratios and their Monte Carlo checks.

Closed-form envelopes (product sandwiches, the two-sided bands around product
approximations, decoupling bounds, the blocking construction) live next to
estimators that measure the corresponding probabilities on simulated chains.
Every comparison ends in a :class:`GapEstimate` with a three-valued verdict.
"""

from __future__ import annotations

import math
import operator
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dist import DistributionSpec, slope_s
from .engine import replica_map, simulate_chain

WITHIN_SE = 3.0
VIOLATED_SE = 5.0
MIN_REPLICAS = 100


class BoundConfigError(ValueError):
    """A bound needs a quantity (usually the Lipschitz constant) that is unavailable."""


# -- result records ---------------------------------------------------------

@dataclass
class BoundBand:
    variant: str
    params: dict
    center: float | None
    half_width: float

    def to_dict(self) -> dict:
        return asdict(self)


def verdict_for(gap: float, se: float, bound: float) -> str:
    g = abs(gap)
    if g <= bound + WITHIN_SE * se:
        return "within_band"
    if g > bound + VIOLATED_SE * se:
        return "violated"
    return "inconclusive"


@dataclass
class GapEstimate:
    empirical_gap: float
    standard_error: float
    theoretical_bound: float
    hypothesis_flags: dict = field(default_factory=dict)
    verdict: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.verdict:
            self.verdict = verdict_for(self.empirical_gap, self.standard_error,
                                       self.theoretical_bound)

    def to_dict(self) -> dict:
        return asdict(self)


def _beta(F: DistributionSpec, beta: float | None) -> float:
    if beta is not None:
        return float(beta)
    if F.beta is None:
        raise BoundConfigError("this bound needs a Lipschitz constant; supply beta "
                               "or a distribution with lipschitz_beta")
    return F.beta


# -- product sandwich -------------------------------------------------------

def lemma1_sandwich(F: DistributionSpec, xs: Sequence[float],
                    multiplicities: Sequence[int] | None = None) -> tuple[float, float]:
    """Bounds on ``P(R_i > x_j for i in I_j, all j)`` with ``#I_j = multiplicities[j]``.

    Returns ``(prod F(1/(x_j+1))**q_j, prod F(1/x_j)**q_j)``.
    """
    mult = [1] * len(xs) if multiplicities is None else list(multiplicities)
    if len(mult) != len(xs):
        raise ValueError("xs and multiplicities differ in length")
    lower = upper = 1.0
    for x, q in zip(xs, mult):
        if not x >= 1:
            raise ValueError(f"thresholds must be >= 1, got {x}")
        if q < 1:
            raise ValueError("multiplicities must be positive")
        lower *= F.cdf(1.0 / (x + 1.0)) ** q
        upper *= F.cdf(1.0 / x) ** q
    return float(lower), float(upper)


# -- bands around product approximations -----------------------------------

def thm6_band(F: DistributionSpec, variant: str, n: int, a: float | None = None,
              b: float | None = None) -> BoundBand:
    """Product approximation and error half-width for ``n`` consecutive ratios.

    ``i``:   ``P(a < R_k <= b for all k)``  vs ``F(1/a)^n (1 - F(1/b))^n``
    ``ii``:  ``P(R_k <= b for all k)``      vs ``(1 - F(1/b))^n``
    ``iii``: ``P(R_k > a for all k)``       vs ``F(1/a)^n``
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if variant == "i":
        if a is None or b is None or not 1 <= a < b:
            raise ValueError("variant i needs 1 <= a < b")
        fa, fb = F.cdf(1 / a), F.cdf(1 / b)
        s = max(slope_s(F, a), slope_s(F, b))
        hw = (s * n / b ** 2 * (1 + fb) ** (n - 1) * fa ** n
              + s * n / a ** 2 * fa ** (n - 1) * (1 + fb) ** n
              + s * n / a ** 2 * fa ** (n - 1))
        center = fa ** n * (1 - fb) ** n
        params = {"a": a, "b": b, "n": n}
    elif variant == "ii":
        if b is None or not b >= 1:
            raise ValueError("variant ii needs b >= 1")
        fb = F.cdf(1 / b)
        hw = slope_s(F, b) * n / b ** 2 * (1 + fb) ** (n - 1)
        center = (1 - fb) ** n
        params = {"b": b, "n": n}
    elif variant == "iii":
        if a is None or not a >= 1:
            raise ValueError("variant iii needs a >= 1")
        fa = F.cdf(1 / a)
        hw = slope_s(F, a) * n / a ** 2 * fa ** (n - 1)
        center = fa ** n
        params = {"a": a, "n": n}
    else:
        raise ValueError(f"unknown variant {variant!r}; expected i, ii or iii")
    if F.family == "table":
        top = max(v for v in (a, b) if v is not None)
        spacing = float(np.max(np.diff([k[0] for k in F.knots])))
        if spacing > 1 / (top * (top + 1)):
            # slope_s interpolates across a single grid cell
            params["reduced_confidence"] = True
    return BoundBand(f"thm6_{variant}", params, float(center), float(hw))


# -- decoupling bounds ------------------------------------------------------

def decoupling_bound(F: DistributionSpec, variant: str, *, beta: float | None = None,
                     xs: Sequence[float] | None = None, x: float | None = None,
                     q: int | None = None, p: int | None = None, u: float | None = None) -> float:
    """Bound on ``|joint - product of marginals|`` for exceedance events.

    ``lemma2``: distinct indices with thresholds ``xs``;
    ``lemma9``: disjoint index blocks of total size ``q``, common threshold ``x``;
    ``delta_mixing``: ``p`` then ``q`` indices above a level ``u``.
    """
    bt = _beta(F, beta)
    if variant == "lemma2":
        if not xs or any(not v >= 1 for v in xs):
            raise ValueError("lemma2 needs thresholds xs, all >= 1")
        fs = [F.cdf(1 / v) for v in xs]
        total = 0.0
        for j, v in enumerate(xs):
            total += math.prod(fs[:j] + fs[j + 1:]) / v ** 2
        return float(bt * total)
    if variant == "lemma9":
        if q is None or q < 1 or x is None or not x >= 1:
            raise ValueError("lemma9 needs q >= 1 and x >= 1")
        return float(bt * q / x ** 2 * F.cdf(1 / x) ** (q - 1))
    if variant == "delta_mixing":
        if p is None or q is None or p < 1 or q < 1 or u is None or not u >= 1:
            raise ValueError("delta_mixing needs p, q >= 1 and u >= 1")
        return float(2 * bt * (p + q) / u ** 2 + bt ** 2 * p * q / u ** 4)
    raise ValueError(f"unknown variant {variant!r}")


# -- telescoping ------------------------------------------------------------

def telescoping_check(a_vec: Sequence[float], b_vec: Sequence[float]) -> float:
    """Residual of ``prod a - prod b = sum_r prod_{j<r} a_j (a_r - b_r) prod_{j>r} b_j``."""
    if len(a_vec) != len(b_vec) or not len(a_vec):
        raise ValueError("vectors must have equal nonzero length")
    a = [float(v) for v in a_vec]
    b = [float(v) for v in b_vec]
    rhs = sum(math.prod(a[:r]) * (a[r] - b[r]) * math.prod(b[r + 1:]) for r in range(len(a)))
    return abs(math.prod(a) - math.prod(b) - rhs)


# -- blocking construction --------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Inclusive integer interval ``{start, ..., stop}``."""

    start: int
    stop: int

    def __len__(self):
        return self.stop - self.start + 1

    def indices(self) -> range:
        return range(self.start, self.stop + 1)


@dataclass
class BlockingLayout:
    """Long blocks ``I[j]`` separated by short blocks ``I_star[j]``, ``j = 0..k``.

    The last pair is defined differently: ``I[k]`` overlaps ``I[k-1]`` and
    ``I_star[k]`` runs past ``k n'`` (up to ``k n' + m``).
    """

    n: int
    k: int
    m: int
    n_prime: int
    I: list[Interval]
    I_star: list[Interval]

    @property
    def path_length(self) -> int:
        return self.k * self.n_prime + self.m

    @property
    def last_block_overlaps(self) -> bool:
        return self.k >= 1 and self.I[self.k].start <= self.I_star[self.k - 1].stop

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "m": self.m, "n_prime": self.n_prime,
                "I": [[iv.start, iv.stop] for iv in self.I],
                "I_star": [[iv.start, iv.stop] for iv in self.I_star],
                "last_block_overlaps": self.last_block_overlaps}


def blocking_layout(n: int, k: int, m: int) -> BlockingLayout:
    if k < 1:
        raise ValueError("k must be at least 1")
    n_prime = n // k
    if not m > k:
        raise ValueError(f"m must exceed k (got m={m}, k={k})")
    if not m < n_prime:
        raise ValueError(f"m must be below n' = floor(n/k) = {n_prime} (got m={m})")
    I, I_star = [], []
    for j in range(k):
        base = j * n_prime
        I.append(Interval(base + 1, base + n_prime - m))
        I_star.append(Interval(base + n_prime - m + 1, base + n_prime))
    I.append(Interval((k - 1) * n_prime + m + 1, k * n_prime))
    I_star.append(Interval(k * n_prime + 1, k * n_prime + m))
    return BlockingLayout(n, k, m, n_prime, I, I_star)


def prop4_bound(F: DistributionSpec, layout: BlockingLayout, u: float,
                beta: float | None = None) -> dict:
    """Components of the bound on ``|P(max_{j<=n} 1/R_j < u) - P(max_{j<=n'} 1/R_j < u)^k|``.

    ``decoupling``: blocks vs product of blocks; ``block_shift``: product vs
    k-th power of the first block; ``boundary``: the ``(2k+1)`` separator term.
    """
    if not 0 < u <= 1:
        raise ValueError("u must lie in (0, 1]")
    bt = _beta(F, beta)
    k, L, m = layout.k, layout.n_prime - layout.m, layout.m
    fu = F.cdf(u)
    fs = F.cdf(u / (1 + u))
    decoupling = bt * (k - 1) * L * u ** 2 * fu ** (k * L - 1)
    block_shift = bt * k * L * u ** 2 * fu ** (L - 1)
    boundary = (2 * k + 1) * (fu ** L - fs ** L * fs ** m)
    return {"decoupling": float(decoupling), "block_shift": float(block_shift),
            "boundary": float(boundary), "total": float(decoupling + block_shift + boundary)}


# -- Monte Carlo estimators -------------------------------------------------

_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}


@dataclass(frozen=True)
class Threshold:
    """Predicate ``R_index op value`` (or on ``1/R_index`` when ``inverse``); 1-based index."""

    index: int
    op: str
    value: float
    inverse: bool = False

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")
        if self.index < 1:
            raise ValueError("indices are 1-based")

    def holds(self, ratios: np.ndarray) -> np.ndarray:
        col = ratios[:, self.index - 1]
        if self.inverse:
            col = 1.0 / col
        return _OPS[self.op](col, self.value)


def exceedances(indices: Sequence[int], x: float) -> tuple[Threshold, ...]:
    """The event ``R_i > x`` for every ``i`` in ``indices``."""
    return tuple(Threshold(i, ">", x) for i in indices)


def event_indicators(system, events: Sequence[Sequence[Threshold]], replicas: int,
                     master_seed: int, workers: int = 1) -> np.ndarray:
    """Boolean matrix ``(replicas, len(events))`` from one shared simulation."""
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be at least {MIN_REPLICAS}")
    if not events or any(len(e) == 0 for e in events):
        raise ValueError("events must be nonempty conjunctions")
    length = max(t.index for e in events for t in e)

    def fn(seeds):
        r = simulate_chain(system, length, seeds)["ratios"]
        cols = []
        for e in events:
            ok = np.ones(len(seeds), dtype=bool)
            for t in e:
                ok &= t.holds(r)
            cols.append(ok)
        return np.stack(cols, axis=1)

    return replica_map(fn, replicas, master_seed, workers)


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def mc_joint_estimate(system, event: Sequence[Threshold], replicas: int, master_seed: int,
                      workers: int = 1) -> tuple[float, float]:
    """Point estimate and binomial standard error of ``P(event)``."""
    ind = event_indicators(system, [tuple(event)], replicas, master_seed, workers)[:, 0]
    p = float(ind.mean())
    return p, binomial_se(p, replicas)


def _influence_se(psi: np.ndarray) -> float:
    if len(psi) < 2:
        return 0.0
    return float(np.std(psi, ddof=1) / math.sqrt(len(psi)))


# -- verification runs ------------------------------------------------------

@dataclass
class Verification:
    """One row of a verification run: a band, its estimate and the verdict."""

    band: BoundBand
    p_hat: float
    se: float
    gap: GapEstimate

    def row(self) -> dict:
        return {"variant": self.band.variant, "params": self.band.params,
                "center": self.band.center, "half_width": self.band.half_width,
                "p_hat": self.p_hat, "se": self.se, "verdict": self.gap.verdict}

    def to_dict(self) -> dict:
        return {"band": self.band.to_dict(), "p_hat": self.p_hat, "se": self.se,
                "gap": self.gap.to_dict()}


def thm6_event(variant: str, n: int, a: float | None = None, b: float | None = None):
    idx = range(1, n + 1)
    if variant == "i":
        return tuple(Threshold(i, ">", a) for i in idx) + tuple(Threshold(i, "<=", b) for i in idx)
    if variant == "ii":
        return tuple(Threshold(i, "<=", b) for i in idx)
    if variant == "iii":
        return tuple(Threshold(i, ">", a) for i in idx)
    raise ValueError(f"unknown variant {variant!r}")


def verify_thm6(system, variant: str, n: int, replicas: int, master_seed: int,
                a: float | None = None, b: float | None = None, workers: int = 1) -> Verification:
    band = thm6_band(system.F, variant, n, a, b)
    p, se = mc_joint_estimate(system, thm6_event(variant, n, a, b), replicas, master_seed, workers)
    gap = GapEstimate(p - band.center, se, band.half_width)
    return Verification(band, p, se, gap)


def verify_lemma1(system, groups: Sequence[tuple[Sequence[int], float]], replicas: int,
                  master_seed: int, workers: int = 1) -> Verification:
    """Check the sandwich for ``R_i > x_j`` on each index group ``j``.

    The verdict uses the distance from the band's midpoint, so ``within_band``
    means ``lower - 3se <= p_hat <= upper + 3se``.
    """
    xs = [x for _, x in groups]
    mult = [len(ix) for ix, _ in groups]
    lower, upper = lemma1_sandwich(system.F, xs, mult)
    event = tuple(t for ix, x in groups for t in exceedances(ix, x))
    p, se = mc_joint_estimate(system, event, replicas, master_seed, workers)
    mid, half = (lower + upper) / 2, (upper - lower) / 2
    band = BoundBand("lemma1_lower_upper",
                     {"groups": [[list(ix), x] for ix, x in groups]}, mid, half)
    gap = GapEstimate(p - mid, se, half, details={"lower": lower, "upper": upper})
    return Verification(band, p, se, gap)


def default_lemma1_battery() -> list[list[tuple[list[int], float]]]:
    """Twenty joint exceedance events mixing single indices and index blocks."""
    return [
        [([1], 2.0)],
        [([1], 1.5)],
        [([2], 3.0)],
        [([1], 2.0), ([2], 2.0)],
        [([1], 1.0), ([2], 4.0)],
        [([1], 3.0), ([3], 1.5)],
        [([2], 2.5), ([4], 2.5)],
        [([1], 1.2), ([2], 1.2), ([3], 1.2)],
        [([1], 2.0), ([2], 3.0), ([3], 4.0)],
        [([1, 2], 1.5)],
        [([1, 2, 3], 1.1)],
        [([2, 3], 2.0), ([5], 3.0)],
        [([1], 5.0), ([2, 3, 4], 1.3)],
        [([1, 2], 2.0), ([3, 4], 1.5)],
        [([3], 10.0)],
        [([1], 1.0), ([2], 1.0), ([3], 1.0), ([4], 1.0)],
        [([4, 5, 6], 1.4)],
        [([1], 1.7), ([6], 1.7)],
        [([2], 6.0), ([3], 1.05)],
        [([1, 2, 3, 4, 5], 1.02)],
    ]


def verify_delta_mixing(system, left: Sequence[int], right: Sequence[int], u: float,
                        replicas: int, master_seed: int, beta: float | None = None,
                        workers: int = 1) -> Verification:
    """Decoupling of exceedances of ``u`` on two separated index groups."""
    if max(left) >= min(right):
        raise ValueError("left indices must all precede right indices")
    events = [exceedances(list(left) + list(right), u), exceedances(left, u), exceedances(right, u)]
    ind = event_indicators(system, events, replicas, master_seed, workers).astype(float)
    J, L, Rt = ind[:, 0], ind[:, 1], ind[:, 2]
    pj, pl, pr = J.mean(), L.mean(), Rt.mean()
    gap = pj - pl * pr
    se = _influence_se(J - pr * L - pl * Rt)
    bound = decoupling_bound(system.F, "delta_mixing", beta=beta, p=len(left), q=len(right), u=u)
    params = {"left": list(left), "right": list(right), "u": u}
    band = BoundBand("delta_mixing", params, None, bound)
    est = GapEstimate(float(gap), se, bound,
                      details={"p_joint": float(pj), "p_left": float(pl), "p_right": float(pr)})
    return Verification(band, float(pj), binomial_se(float(pj), replicas), est)


def blocking_gap_experiment(system, layout: BlockingLayout, u: float, replicas: int,
                            master_seed: int, beta: float | None = None,
                            workers: int = 1) -> GapEstimate:
    """Estimate ``P(max_{j<=n} 1/R_j < u) - P(max_{j<=n'} 1/R_j < u)^k``."""
    if not 0 < u <= 1:
        raise ValueError("u must lie in (0, 1]")
    if replicas < MIN_REPLICAS:
        raise ValueError(f"replicas must be at least {MIN_REPLICAS}")
    bound = prop4_bound(system.F, layout, u, beta)
    n, n1 = layout.n, layout.n_prime
    length = max(layout.path_length, n)

    def fn(seeds):
        inv = 1.0 / simulate_chain(system, length, seeds)["ratios"]
        return np.stack([inv[:, :n].max(axis=1) < u, inv[:, :n1].max(axis=1) < u], axis=1)

    ind = replica_map(fn, replicas, master_seed, workers).astype(float)
    full, block = ind[:, 0], ind[:, 1]
    pf, pb = full.mean(), block.mean()
    k = layout.k
    gap = pf - pb ** k
    se = _influence_se(full - k * pb ** (k - 1) * block)
    flags = {"last_block_overlaps": layout.last_block_overlaps, "n_equals_k_nprime": n == k * n1}
    return GapEstimate(float(gap), se, bound["total"], flags,
                       details={"p_full": float(pf), "p_block": float(pb), "bound": bound,
                                "layout": layout.to_dict()})


def normalization_scan(system, n: int, a_n: float, b_n: float, grid: Sequence[float],
                       replicas: int, master_seed: int, workers: int = 1) -> dict:
    """Empirical ``P(max_{i<=n} 1/R_i <= b_n + x/a_n)`` over a grid of ``x``."""
    if a_n <= 0:
        raise ValueError("a_n must be positive")
    xs = np.asarray(grid, dtype=float)
    thr = b_n + xs / a_n

    def fn(seeds):
        m = (1.0 / simulate_chain(system, n, seeds)["ratios"]).max(axis=1)
        return m[:, None] <= thr[None, :]

    p = replica_map(fn, replicas, master_seed, workers).mean(axis=0)
    se = [binomial_se(float(v), replicas) for v in p]
    return {"n": n, "a_n": a_n, "b_n": b_n, "grid": xs.tolist(), "p_hat": p.tolist(), "se": se}
