"""Digit chains of generalized Oppenheim expansions.

Given the previous digit ``h`` the next digit ``k >= phi(h)`` has probability
``F(delta(k)) - F(delta(k + 1))`` with ``delta(k) = phi(h)(1 + q) / (k + phi(h) q)``.
Drawing ``w`` from ``F`` and returning the unique ``k`` with
``delta(k + 1) < w <= delta(k)`` samples exactly this law, and the ratio
``R = 1 / delta(k)`` follows.

Two arithmetic modes exist.  ``exact`` walks a single path with Python
integers and :class:`fractions.Fraction`; ``float`` is vectorized over
replicas and is what the Monte Carlo experiments use.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Integral
from typing import Callable, Sequence, Union

import numpy as np

from .dist import DistributionSpec
from .rng import as_seed, hash64, uniform_block, uniforms

FLOAT_DIGIT_LIMIT = 2.0 ** 53
DEFAULT_DIGIT_CAP = 10 ** 300
DEFAULT_CHUNK = 4096


class SaturationError(RuntimeError):
    """A digit exceeded ``digit_cap`` in exact mode; ``partial`` holds the path so far."""

    def __init__(self, message: str, partial: "SamplePath"):
        super().__init__(message)
        self.partial = partial


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AffinePhi:
    """``phi(h) = c1 * h + c0`` with integer coefficients."""

    c1: int
    c0: int

    def __post_init__(self):
        if not isinstance(self.c1, Integral) or not isinstance(self.c0, Integral):
            raise ValueError("phi coefficients must be integers")
        # phi is nondecreasing for c1 >= 0, so phi(1) >= 1 covers every digit
        if self.c1 < 0 or self.c1 + self.c0 < 1:
            raise ValueError("phi must satisfy phi(h) >= 1 for every digit h >= 1")

    def __call__(self, h):
        return self.c1 * h + self.c0

    def to_dict(self) -> dict:
        return {"c1": int(self.c1), "c0": int(self.c0)}


PhiRule = Union[AffinePhi, Callable[[int], int]]
QRule = Union[float, Fraction, Callable[[tuple], float]]


@dataclass(frozen=True)
class OppenheimSystem:
    """The triple (phi rule, q rule, F) with the first digit and arithmetic mode."""

    phi: PhiRule
    q: QRule
    F: DistributionSpec
    initial_digit: int = 1
    digit_cap: int | None = DEFAULT_DIGIT_CAP
    arithmetic_mode: str = "exact"
    name: str = "custom"

    def __post_init__(self):
        if not isinstance(self.initial_digit, Integral) or self.initial_digit < 1:
            raise ValueError("initial_digit must be a positive integer")
        if self.arithmetic_mode not in ("exact", "float"):
            raise ValueError("arithmetic_mode must be 'exact' or 'float'")
        if not callable(self.q) and not self.q >= 0:
            raise ValueError("q must be nonnegative")

    def phi_of(self, h: int) -> int:
        v = self.phi(h)
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if not isinstance(v, Integral):
            raise ValueError(f"phi({h}) = {v!r} is not an integer")
        if v < 1:
            raise ValueError(f"phi({h}) = {v} violates phi >= 1")
        return int(v)

    def q_of(self, history: tuple) -> Fraction:
        v = self.q(history) if callable(self.q) else self.q
        if v < 0:
            raise ValueError(f"q rule returned negative value {v}")
        return Fraction(v)

    @property
    def constant_q(self) -> bool:
        return not callable(self.q)

    def with_distribution(self, F: DistributionSpec) -> "OppenheimSystem":
        return OppenheimSystem(self.phi, self.q, F, self.initial_digit, self.digit_cap,
                               self.arithmetic_mode, self.name)

    def with_mode(self, mode: str) -> "OppenheimSystem":
        return OppenheimSystem(self.phi, self.q, self.F, self.initial_digit, self.digit_cap,
                               mode, self.name)

    def to_dict(self) -> dict:
        if not isinstance(self.phi, AffinePhi) or callable(self.q):
            raise ValueError("only affine phi and constant q rules are serializable")
        cap = self.digit_cap
        return {"preset": self.name, "phi": self.phi.to_dict(), "q": float(self.q),
                "distribution": self.F.to_dict(), "initial_digit": self.initial_digit,
                "digit_cap": None if cap is None else str(cap),
                "arithmetic_mode": self.arithmetic_mode}


@dataclass(frozen=True)
class LurothSampler:
    """The iid ratio law ``P(R = h) = 1/(h(h-1))``, ``h >= 2`` (uniform ``F``)."""

    name: str = "luroth"

    @property
    def F(self) -> DistributionSpec:
        return DistributionSpec.uniform()

    def to_dict(self) -> dict:
        return {"preset": "luroth"}


def unit_system(F: DistributionSpec | None = None, mode: str = "exact") -> OppenheimSystem:
    return OppenheimSystem(AffinePhi(0, 1), 0.0, F or DistributionSpec.uniform(),
                           arithmetic_mode=mode, name="unit")


def growth_system(F: DistributionSpec | None = None, mode: str = "exact") -> OppenheimSystem:
    return OppenheimSystem(AffinePhi(1, 0), 0.0, F or DistributionSpec.uniform(),
                           arithmetic_mode=mode, name="growth")


PRESETS = ("luroth", "unit", "growth", "custom")


def preset(name: str, F: DistributionSpec | None = None, mode: str = "exact"):
    if name == "luroth":
        if F is not None and F.family != "uniform":
            raise ValueError("the luroth preset is tied to the uniform distribution")
        return LurothSampler()
    if name == "unit":
        return unit_system(F, mode)
    if name == "growth":
        return growth_system(F, mode)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS[:-1]}")


# -- single step ------------------------------------------------------------

def delta(phi_val, k, q):
    """Interval endpoint ``phi (1 + q) / (k + phi q)``."""
    return phi_val * (1 + q) / (k + phi_val * q)


def conditional_digit(phi_val: int, q_val, w) -> tuple[int, Fraction, Fraction]:
    """Digit selected by ``w`` and its bracketing endpoints, in exact arithmetic.

    Returns ``(h_next, alpha_end, beta_end)`` with
    ``alpha_end = delta(h_next + 1) < w <= delta(h_next) = beta_end``.
    """
    if isinstance(phi_val, float) and phi_val.is_integer():
        phi_val = int(phi_val)
    if not isinstance(phi_val, Integral) or phi_val < 1:
        raise ValueError(f"phi value must be a positive integer, got {phi_val!r}")
    if not 0 < w <= 1:
        raise ValueError(f"w must lie in (0, 1], got {w!r}")
    if q_val < 0:
        raise ValueError("q must be nonnegative")
    phi_val = int(phi_val)
    q = Fraction(q_val)
    wf = Fraction(w)
    h_next = max(math.floor(phi_val * (1 + q) / wf - phi_val * q), phi_val)
    return h_next, delta(phi_val, Fraction(h_next + 1), q), delta(phi_val, Fraction(h_next), q)


# -- paths ------------------------------------------------------------------

@dataclass
class DigitStep:
    h_prev: int
    h_next: int
    q: float
    alpha_end: float
    beta_end: float
    w: float
    ratio: float


@dataclass
class SamplePath:
    system_id: str
    seed: int
    digits: list
    q_values: list
    ratios: list
    steps: list[DigitStep] = field(default_factory=list)
    saturated: bool = False

    @property
    def n(self) -> int:
        return len(self.ratios)

    def digest(self) -> dict:
        r = [float(x) for x in self.ratios]
        return {"system_id": self.system_id, "seed": self.seed, "n": self.n,
                "saturated": self.saturated, "max_ratio": max(r), "min_ratio": min(r),
                "last_digit": str(self.digits[-1])}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "B", "Q", "R", "alpha", "beta", "w"])
            for i, s in enumerate(self.steps, start=1):
                w.writerow([i, s.h_prev, _fmt(s.q), _fmt(s.ratio), _fmt(s.alpha_end),
                            _fmt(s.beta_end), _fmt(s.w)])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _w_source(system, seed: int, w_stream):
    if w_stream is not None:
        ws = list(w_stream)
        return lambda k: ws[k]
    seeds = np.array([as_seed(seed)], dtype=np.uint64)
    return lambda k: float(system.F.ppf(uniforms(seeds, k)[0]))


def sample_path(system: OppenheimSystem, n: int, seed: int,
                w_stream: Sequence[float] | None = None) -> SamplePath:
    """Walk ``n`` steps of the digit chain from ``system.initial_digit``.

    The ``k``-th step consumes uniform number ``k`` of the stream ``seed``
    (mapped through the generalized inverse of ``F``); ``w_stream`` replaces
    those values directly and exists for tests.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if system.arithmetic_mode == "float" and w_stream is None:
        return _sample_path_float(system, n, seed)
    next_w = _w_source(system, seed, w_stream)
    exact = system.arithmetic_mode == "exact"
    path = SamplePath(system.name, int(seed), [system.initial_digit], [], [])
    h = system.initial_digit
    for k in range(n):
        phi = system.phi_of(h)
        q = system.q_of(tuple(path.digits))
        w = next_w(k)
        if not 0 < w <= 1:
            raise SamplingError(f"quantile evaluation returned w={w!r} at step {k + 1}")
        h_next, a_end, b_end = conditional_digit(phi, q, w)
        ratio = (h_next + phi * q) / (phi * (1 + q))
        if exact:
            if system.digit_cap is not None and h_next > system.digit_cap:
                path.saturated = True
                raise SaturationError(f"digit exceeded cap at step {k + 1}", path)
            step = DigitStep(h, h_next, q, a_end, b_end, w, ratio)
        else:
            step = DigitStep(h, h_next, float(q), float(a_end), float(b_end), w, float(ratio))
        path.steps.append(step)
        path.digits.append(h_next)
        path.q_values.append(step.q)
        path.ratios.append(step.ratio)
        h = h_next
    return path


def _sample_path_float(system, n, seed) -> SamplePath:
    seeds = np.array([as_seed(seed)], dtype=np.uint64)
    out = simulate_chain(system, n, seeds, detail=True)
    digits = out["digits"][0]
    path = SamplePath(system.name, int(seed), [_digit_value(d) for d in digits], [], [],
                      saturated=bool(out["saturated"][0]))
    for k in range(n):
        q = float(out["q"][0, k])
        step = DigitStep(_digit_value(digits[k]), _digit_value(digits[k + 1]), q,
                         float(out["alpha"][0, k]), float(out["beta"][0, k]),
                         float(out["w"][0, k]), float(out["ratios"][0, k]))
        path.steps.append(step)
        path.q_values.append(q)
        path.ratios.append(step.ratio)
    return path


def _digit_value(d: float):
    return int(d) if d < FLOAT_DIGIT_LIMIT else float(d)


# -- vectorized simulation --------------------------------------------------

def _phi_array(system: OppenheimSystem, h: np.ndarray) -> np.ndarray:
    if isinstance(system.phi, AffinePhi):
        return system.phi(h)
    return np.array([float(system.phi_of(int(x))) for x in h])


def _next_digits(phi: np.ndarray, q, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Float-mode digit selection with a one-step correction of the floor."""
    num = phi * (1.0 + q)
    with np.errstate(over="ignore", invalid="ignore"):
        k = np.maximum(np.floor(num / w - phi * q), phi)
        small = k < FLOAT_DIGIT_LIMIT
        down = small & (k > phi) & (w * (k + phi * q) > num)
        k = np.where(down, k - 1.0, k)
        up = small & (w * (k + 1.0 + phi * q) <= num)
        k = np.where(up, k + 1.0, k)
    return k, ~small


def simulate_chain(system, n: int, stream_seeds, detail: bool = False,
                   w_matrix: np.ndarray | None = None) -> dict:
    """Simulate one path per stream seed in float arithmetic.

    Returns a dict with ``ratios`` (rows x n) and ``saturated`` (rows,) and,
    when ``detail`` is set, ``digits``, ``q``, ``alpha``, ``beta`` and ``w``.
    Once a digit passes 2**53 the floor is dropped and the ratio becomes
    ``1/w``, the real-valued limit of the digit rule; such rows are flagged.
    """
    seeds = np.asarray(stream_seeds, dtype=np.uint64)
    rows = len(seeds)
    if isinstance(system, LurothSampler):
        u = uniform_block(seeds, n) if w_matrix is None else np.asarray(w_matrix, dtype=float)
        return {"ratios": np.floor(1.0 / u) + 1.0, "saturated": np.zeros(rows, dtype=bool)}
    if w_matrix is None:
        w_matrix = system.F.ppf(uniform_block(seeds, n))
    w_matrix = np.asarray(w_matrix, dtype=float)
    if np.any(w_matrix <= 0) or np.any(w_matrix > 1):
        raise SamplingError("quantile evaluation left (0, 1]")
    if not system.constant_q:
        return _simulate_rowwise(system, n, w_matrix, detail)

    q = float(system.q)
    h = np.full(rows, float(system.initial_digit))
    ratios = np.empty((rows, n))
    saturated = np.zeros(rows, dtype=bool)
    if detail:
        digits = np.empty((rows, n + 1))
        digits[:, 0] = h
        alpha = np.empty((rows, n))
        beta = np.empty((rows, n))
    for k in range(n):
        w = w_matrix[:, k]
        phi = _phi_array(system, h)
        h_next, sat = _next_digits(phi, q, w)
        with np.errstate(over="ignore", invalid="ignore"):
            r = (h_next + phi * q) / (phi * (1.0 + q))
        r = np.where(sat, 1.0 / w, r)
        saturated |= sat
        ratios[:, k] = r
        if detail:
            with np.errstate(over="ignore", invalid="ignore"):
                beta[:, k] = np.where(sat, w, phi * (1.0 + q) / (h_next + phi * q))
                alpha[:, k] = np.where(sat, w, phi * (1.0 + q) / (h_next + 1.0 + phi * q))
            digits[:, k + 1] = h_next
        h = h_next
    out = {"ratios": ratios, "saturated": saturated}
    if detail:
        out.update(digits=digits, alpha=alpha, beta=beta, w=w_matrix,
                   q=np.full((rows, n), q))
    return out


def _simulate_rowwise(system, n, w_matrix, detail):
    rows = w_matrix.shape[0]
    fsys = system.with_mode("float")
    keys = ("digits", "q", "alpha", "beta", "ratios")
    acc = {k: [] for k in keys}
    for i in range(rows):
        p = sample_path(fsys, n, 0, w_stream=w_matrix[i].tolist())
        acc["digits"].append([float(d) for d in p.digits])
        acc["q"].append(p.q_values)
        acc["alpha"].append([s.alpha_end for s in p.steps])
        acc["beta"].append([s.beta_end for s in p.steps])
        acc["ratios"].append(p.ratios)
    out = {k: np.array(v, dtype=float) for k, v in acc.items()}
    out["saturated"] = out["digits"].max(axis=1) >= FLOAT_DIGIT_LIMIT
    out["w"] = w_matrix
    return out if detail else {"ratios": out["ratios"], "saturated": out["saturated"]}


def replica_map(fn: Callable[[np.ndarray], np.ndarray], replicas: int, master_seed: int,
                workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Apply ``fn`` to per-replica stream seeds chunk by chunk, in replica order.

    ``fn`` must act row-wise, which makes the concatenated result independent
    of ``workers`` and ``chunk_size``.
    """
    if replicas < 1:
        raise ValueError("replicas must be positive")
    bounds = [(s, min(s + chunk_size, replicas)) for s in range(0, replicas, chunk_size)]

    def run(b):
        return fn(hash64(master_seed, np.arange(b[0], b[1], dtype=np.uint64)))

    if workers <= 1 or len(bounds) == 1:
        parts = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    return np.concatenate(parts, axis=0)


def simulate_ratios(system, n: int, replicas: int, master_seed: int,
                    workers: int = 1) -> np.ndarray:
    """Ratio matrix of shape ``(replicas, n)``; row ``i`` uses stream ``hash64(master_seed, i)``."""
    return replica_map(lambda s: simulate_chain(system, n, s)["ratios"], replicas,
                       master_seed, workers)


# -- Lüroth closed forms ----------------------------------------------------

def luroth_tail(t: float) -> float:
    """``P(R >= t) = 1/(ceil(t) - 1)`` under the Lüroth law."""
    if not t > 1:
        raise ValueError(f"luroth_tail needs t > 1, got {t}")
    return 1.0 / (math.ceil(t) - 1)


def luroth_cdf(t):
    """``P(R <= t)`` under the Lüroth law (vectorized)."""
    t = np.asarray(t, dtype=float)
    fl = np.floor(np.maximum(t, 1.0))
    out = np.where(t < 2, 0.0, 1.0 - 1.0 / fl)
    return out if out.ndim else float(out)


def luroth_at_least(c):
    """``P(R >= c)``; equals 1 when ``c <= 2``."""
    c = np.asarray(c, dtype=float)
    ce = np.ceil(np.maximum(c, 2.0))
    out = 1.0 / (ce - 1.0)
    return out if out.ndim else float(out)


def unit_cdf(t):
    """``P(R <= t)`` for the unit chain, where ``P(R = h) = 1/(h(h+1))``, ``h >= 1``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t < 1, 0.0, 1.0 - 1.0 / (np.floor(np.maximum(t, 1.0)) + 1.0))
    return out if out.ndim else float(out)


def unit_at_least(c):
    """``P(R >= c)`` for the unit chain."""
    c = np.asarray(c, dtype=float)
    out = 1.0 / np.ceil(np.maximum(c, 1.0))
    return out if out.ndim else float(out)


def sample_luroth_iid(n: int, seed: int, u_stream: Sequence[float] | None = None) -> list[int]:
    """``n`` iid Lüroth ratios ``floor(1/U) + 1`` from stream ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if u_stream is not None:
        u = np.asarray(list(u_stream)[:n], dtype=float)
    else:
        u = uniform_block(np.array([as_seed(seed)], dtype=np.uint64), n)[0]
    return [int(v) for v in np.floor(1.0 / u) + 1]
