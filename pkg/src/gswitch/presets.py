"""Named example systems: switches, the N-system, an ad hoc network, dedicated servers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import Facet
from .model import (
    ChannelState,
    HeavyTrafficFamily,
    SwitchSpec,
    make_bernoulli_family,
    make_joint_family,
    projection_closure,
)


@dataclass(frozen=True)
class Preset:
    spec: SwitchSpec
    family: HeavyTrafficFamily
    facets: tuple[Facet, ...] | None   # None: enumerate by brute force
    nu: np.ndarray
    objectives: dict[str, np.ndarray]


def switch_facets(N: int) -> list[Facet]:
    """Row-sum facets first, then column-sum facets; queue (r, c) has index r·N + c."""
    out = []
    for r in range(N):
        c = np.zeros(N * N)
        c[r * N:(r + 1) * N] = 1.0
        out.append(Facet(c, 1.0))
    for col in range(N):
        c = np.zeros(N * N)
        c[col::N] = 1.0
        out.append(Facet(c, 1.0))
    return out


def switch_spec(N: int) -> SwitchSpec:
    perms = []
    for perm in itertools.permutations(range(N)):
        x = np.zeros(N * N)
        for r, c in enumerate(perm):
            x[r * N + c] = 1.0
        perms.append(tuple(x))
    schedules = tuple(sorted(projection_closure(perms)))
    return SwitchSpec(n=N * N, channel_states=(ChannelState("m0", 1.0, schedules),), name=f"switch{N}x{N}")


def switch_preset(N: int) -> Preset:
    nu = np.full(N * N, 1.0 / N)
    return Preset(
        spec=switch_spec(N),
        family=make_bernoulli_family(nu),
        facets=tuple(switch_facets(N)),
        nu=nu,
        objectives={"total": np.ones(N * N), "uniform": nu.copy()},
    )


def n_system_preset() -> Preset:
    # Server A serves type-1 jobs only; server B serves either type.
    schedules = tuple(sorted(projection_closure([(2, 0), (1, 1)])))
    spec = SwitchSpec(n=2, channel_states=(ChannelState("m0", 1.0, schedules),), name="n_system")
    # Each queue receives 0 or 2 jobs with equal probability, so ν = (1, 1).
    template = [((a, b), 0.25) for a in (0, 2) for b in (0, 2)]
    return Preset(spec, make_joint_family(template), None, np.array([1.0, 1.0]), {"total": np.ones(2)})


def ad_hoc_preset() -> Preset:
    schedules = tuple(sorted(projection_closure([(1, 0), (0, 1), ("2/3", "2/3")])))
    spec = SwitchSpec(n=2, channel_states=(ChannelState("m0", 1.0, schedules),), name="ad_hoc", grid=3)
    nu = np.array([2.0 / 3.0, 2.0 / 3.0])
    return Preset(spec, make_bernoulli_family(nu), None, nu, {"total": np.ones(2), "nu": nu.copy()})


def dedicated_preset() -> Preset:
    # Two queues, each with its own server whose capacity is 0, 1 or 2 with equal odds.
    levels = (0, 1, 2)
    states = []
    for s1, s2 in itertools.product(levels, levels):
        states.append(ChannelState(f"s{s1}{s2}", 1.0 / 9.0, tuple(sorted(projection_closure([(s1, s2)])))))
    spec = SwitchSpec(n=2, channel_states=tuple(states), name="dedicated")
    facets = (Facet(np.array([1.0, 0.0]), 1.0), Facet(np.array([0.0, 1.0]), 1.0))
    nu = np.array([1.0, 1.0])
    return Preset(spec, make_bernoulli_family(nu), facets, nu, {"total": np.ones(2)})


PRESETS = {
    "switch2x2": lambda: switch_preset(2),
    "switch3x3": lambda: switch_preset(3),
    "n_system": n_system_preset,
    "ad_hoc": ad_hoc_preset,
    "dedicated": dedicated_preset,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
