"""Queueing-system declarations: channel states, schedules, arrivals, heavy-traffic families.

Everything here is an immutable value object.  Schedule sets are checked, never
silently repaired; :func:`projection_closure` is the explicit repair utility.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12
PSD_TOL = 1e-9

Vector = tuple[float, ...]


class ModelError(ValueError):
    """Raised when a model object cannot be constructed from its inputs."""


def _as_rate(x) -> float:
    """Accept ints, floats, Fractions and strings such as ``"2/3"``."""
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


def _as_vector(x: Iterable) -> Vector:
    return tuple(_as_rate(v) for v in x)


@dataclass(frozen=True)
class ChannelState:
    """One channel state: its probability and the service-rate vectors it allows."""

    id: str
    psi: float
    schedules: tuple[Vector, ...]

    def __post_init__(self):
        object.__setattr__(self, "psi", float(self.psi))
        object.__setattr__(self, "schedules", tuple(_as_vector(x) for x in self.schedules))


@dataclass(frozen=True)
class SwitchSpec:
    """A generalized switch.

    ``grid`` is the integer scale that turns every schedule entry into an integer;
    the simulator keeps queues in units of ``1/grid`` jobs so that all comparisons
    are exact.  ``a_max`` optionally caps per-queue arrivals.
    """

    n: int
    channel_states: tuple[ChannelState, ...]
    name: str = "custom"
    grid: int = 1
    a_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "channel_states", tuple(self.channel_states))

    @property
    def psi(self) -> np.ndarray:
        return np.array([cs.psi for cs in self.channel_states])

    @property
    def s_max(self) -> float:
        return max((max(x, default=0.0) for cs in self.channel_states for x in cs.schedules), default=0.0)

    def schedule_array(self, m: int) -> np.ndarray:
        return np.array(self.channel_states[m].schedules, dtype=float).reshape(-1, self.n)


@dataclass(frozen=True)
class Violation:
    invariant: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"{self.invariant} [{self.element}]: {self.message}"


def projection_closure(schedules: Iterable[Sequence]) -> set[Vector]:
    """Smallest superset of ``schedules`` closed under zeroing any single coordinate."""
    closed = {_as_vector(x) for x in schedules}
    frontier = list(closed)
    while frontier:
        x = frontier.pop()
        for i, xi in enumerate(x):
            if xi != 0.0:
                y = x[:i] + (0.0,) + x[i + 1:]
                if y not in closed:
                    closed.add(y)
                    frontier.append(y)
    return closed


def validate_spec(spec: SwitchSpec) -> list[Violation]:
    """Check the standing assumptions on a switch; violations are returned, not raised."""
    out: list[Violation] = []
    if not isinstance(spec.n, int) or spec.n < 1:
        out.append(Violation("queue-count", "n", f"n must be a positive integer, got {spec.n!r}"))
        return out
    if not spec.channel_states:
        out.append(Violation("channel-states", "channel_states", "at least one channel state is required"))
        return out
    if not isinstance(spec.grid, int) or spec.grid < 1:
        out.append(Violation("grid", "grid", f"grid must be a positive integer, got {spec.grid!r}"))

    total = 0.0
    for cs in spec.channel_states:
        total += cs.psi
        if not 0.0 <= cs.psi <= 1.0:
            out.append(Violation("probability-range", cs.id, f"psi={cs.psi} outside [0, 1]"))
        if not cs.schedules:
            out.append(Violation("schedules-nonempty", cs.id, "schedule set is empty"))
            continue
        as_set = set(cs.schedules)
        for x in cs.schedules:
            if len(x) != spec.n:
                out.append(Violation("schedule-length", cs.id, f"{x} has length {len(x)}, expected {spec.n}"))
                continue
            if min(x) < 0:
                out.append(Violation("schedule-nonnegative", cs.id, f"{x} has a negative entry"))
            if spec.grid >= 1:
                scaled = np.asarray(x) * spec.grid
                if np.any(np.abs(scaled - np.round(scaled)) > 1e-9):
                    out.append(Violation("schedule-grid", cs.id, f"{x} is not a multiple of 1/{spec.grid}"))
            for i, xi in enumerate(x):
                if xi != 0.0:
                    y = x[:i] + (0.0,) + x[i + 1:]
                    if y not in as_set:
                        out.append(Violation("projection-closure", cs.id, f"{x} present but {y} missing"))
    if abs(total - 1.0) > PROB_TOL:
        out.append(Violation("probability-sum", "psi", f"channel probabilities sum to {total!r}, not 1"))
    return out


def derive_moments(support: Sequence[tuple[Sequence, float]]) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of a finite joint pmf given as ``(vector, prob)`` pairs."""
    xs = np.array([np.asarray(x, dtype=float) for x, _ in support])
    ps = np.array([float(p) for _, p in support])
    if abs(ps.sum() - 1.0) > PROB_TOL:
        raise ModelError(f"probabilities sum to {ps.sum()!r}, not 1")
    mean = ps @ xs
    cov = (xs * ps[:, None]).T @ xs - np.outer(mean, mean)
    return mean, (cov + cov.T) / 2


@dataclass(frozen=True)
class ArrivalSpec:
    """Finite joint distribution of the per-slot arrival vector."""

    support: tuple[tuple[tuple[int, ...], float], ...]
    a_max: float | None = None
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    sigma_a: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        support = tuple((tuple(int(v) for v in x), float(p)) for x, p in self.support)
        if not support:
            raise ModelError("arrival support is empty")
        if any(p < 0 for _, p in support):
            raise ModelError("arrival probabilities must be nonnegative")
        if any(v < 0 for x, _ in support for v in x):
            raise ModelError("arrival vectors must be nonnegative")
        if len({len(x) for x, _ in support}) != 1:
            raise ModelError("arrival vectors have inconsistent lengths")
        if self.a_max is not None and any(v > self.a_max for x, _ in support for v in x):
            raise ModelError(f"an arrival vector exceeds a_max={self.a_max}")
        mean, cov = derive_moments(support)
        if cov.size and np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ModelError("arrival covariance is not positive semidefinite")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "lam", mean)
        object.__setattr__(self, "sigma_a", cov)

    @property
    def n(self) -> int:
        return len(self.support[0][0])


@dataclass(frozen=True)
class HeavyTrafficFamily:
    """Arrival specs indexed by ε with mean (1−ε)ν."""

    nu: np.ndarray
    arrival_builder: Callable[[float], ArrivalSpec]
    sigma_a_limit: np.ndarray
    kind: str = "custom"

    def at(self, eps: float) -> ArrivalSpec:
        if not 0.0 < eps < 1.0:
            raise ModelError(f"epsilon must lie in (0, 1), got {eps}")
        spec = self.arrival_builder(eps)
        if np.max(np.abs(spec.lam - (1.0 - eps) * np.asarray(self.nu))) > 1e-10:
            raise ModelError(f"family at eps={eps} has mean {spec.lam}, expected (1-eps)*nu")
        return spec


def bernoulli_product_support(lam: Sequence[float]) -> tuple[tuple[tuple[int, ...], float], ...]:
    """Support of independent Bernoulli(λᵢ) arrivals, listed over {0,1}ⁿ in lexicographic order."""
    lam = [float(v) for v in lam]
    for v in lam:
        if not 0.0 <= v <= 1.0:
            raise ModelError(f"Bernoulli mean {v} outside [0, 1]")
    out = []
    for bits in itertools.product((0, 1), repeat=len(lam)):
        p = 1.0
        for b, v in zip(bits, lam):
            p *= v if b else 1.0 - v
        out.append((bits, p))
    return tuple(out)


def make_joint_family(template: Sequence[tuple[Sequence, float]], kind: str = "explicit-joint") -> HeavyTrafficFamily:
    """Family built by thinning a joint pmf with one shared Bernoulli(1−ε) coin.

    With probability ε the whole arrival vector is replaced by zero, so the mean is
    (1−ε)ν and the covariance tends to the template covariance as ε → 0.
    """
    base = ArrivalSpec(tuple((tuple(x), p) for x, p in template))
    n = base.n

    def build(eps: float) -> ArrivalSpec:
        merged: dict[tuple[int, ...], float] = {}
        for x, p in base.support:
            merged[x] = merged.get(x, 0.0) + (1.0 - eps) * p
        zero = (0,) * n
        merged[zero] = merged.get(zero, 0.0) + eps
        return ArrivalSpec(tuple(merged.items()))

    return HeavyTrafficFamily(nu=base.lam.copy(), arrival_builder=build, sigma_a_limit=base.sigma_a.copy(), kind=kind)


def make_bernoulli_family(nu: Sequence[float], correlation: Sequence[tuple[Sequence, float]] | None = None) -> HeavyTrafficFamily:
    """Bernoulli arrivals with mean (1−ε)ν.

    Without ``correlation`` the queues are independent.  A ``correlation`` template
    is a joint pmf over {0,1}ⁿ whose marginal means are ν; it is thinned with a
    shared coin (see :func:`make_joint_family`).
    """
    nu_arr = np.asarray([_as_rate(v) for v in nu])
    if np.any(nu_arr <= 0) or np.any(nu_arr > 1):
        raise ModelError(f"nu entries must lie in (0, 1], got {nu_arr}")
    if correlation is not None:
        if any(v not in (0, 1) for x, _ in correlation for v in x):
            raise ModelError("a Bernoulli correlation template must be supported on {0,1}^n")
        fam = make_joint_family(correlation, kind="bernoulli-correlated")
        if np.max(np.abs(fam.nu - nu_arr)) > 1e-10:
            raise ModelError(f"template marginals {fam.nu} differ from nu {nu_arr}")
        return fam

    def build(eps: float) -> ArrivalSpec:
        return ArrivalSpec(bernoulli_product_support((1.0 - eps) * nu_arr))

    return HeavyTrafficFamily(
        nu=nu_arr,
        arrival_builder=build,
        sigma_a_limit=np.diag(nu_arr * (1.0 - nu_arr)),
        kind="bernoulli-independent",
    )
