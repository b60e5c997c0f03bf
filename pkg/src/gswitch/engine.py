"""Discrete-time simulation of a generalized switch under MaxWeight.

Queue contents are kept as integers in units of ``1/spec.grid`` jobs, so the
MaxWeight comparison, tie detection and the complementarity q⁺ᵢuᵢ = 0 are exact.

Randomness: each run owns three ``numpy.random.Generator(PCG64)`` streams spawned
from ``SeedSequence(seed)``, one each for channel states, arrivals and
tie-breaking.  Slot k consumes the k-th uniform of each stream, so results do not
depend on how the horizon is chunked.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .geometry import CapacityGeometry, _nnls
from .model import ArrivalSpec, HeavyTrafficFamily, SwitchSpec

CHUNK = 1 << 18

INVARIANT_NAMES = ("queue_nonnegative", "unused_le_service", "complementarity", "maxweight_optimal")


class InstabilityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    epsilon: float
    horizon: int = 1_000_000
    burn_in: float = 0.5
    batches: int = 20
    seed: int = 0
    estimate_cross_terms: bool = True
    cone_moments_orders: tuple[int, ...] = (1, 2)
    tie_break: str = "uniform"   # "uniform" over all maximisers, or "maximal" (Pareto-maximal maximisers only)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.batches < 2:
            raise ValueError("need at least two batches")
        if self.horizon < 10 * self.batches:
            raise ValueError("horizon must be at least 10 * batches")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.tie_break not in ("uniform", "maximal"):
            raise ValueError("tie_break must be 'uniform' or 'maximal'")
        object.__setattr__(self, "cone_moments_orders", tuple(int(t) for t in self.cone_moments_orders))

    @property
    def burn_slots(self) -> int:
        return int(self.horizon * self.burn_in)

    @property
    def batch_len(self) -> int:
        return (self.horizon - self.burn_slots) // self.batches


@dataclass(frozen=True)
class SimEstimates:
    """Post-burn-in time averages, with per-batch values kept for error bars.

    ``batch_std[name]`` is the standard error of the overall mean computed from
    the batch means, std(batch means, ddof=1)/√batches.
    """

    epsilon: float
    horizon: int
    seed: int
    slots_averaged: int
    mean_q: np.ndarray
    scaled_lincomb: np.ndarray
    w_list: np.ndarray
    perp_cone_moments: dict[int, float]
    perp_subspace_moments: dict[int, float]
    par_subspace_second_moment: float
    cross_qu: np.ndarray
    flow_residual: np.ndarray
    facet_slack: np.ndarray
    pi_ml_hat: np.ndarray
    batch_std: dict[str, np.ndarray]
    batch_values: dict[str, np.ndarray] = field(repr=False)
    invariant_violations: dict[str, int] = field(default_factory=dict)
    slots_checked: int = 0

    def lincomb(self, w: Sequence[float]) -> tuple[float, float]:
        """E[⟨w, q⟩] and its batch-means standard error."""
        w = np.asarray(w, dtype=float)
        per_batch = self.batch_values["mean_q"] @ w
        return float(self.mean_q @ w), _stderr(per_batch)

    def facet_slack_sum(self, facets: Sequence[int]) -> tuple[float, float]:
        idx = list(facets)
        per_batch = self.batch_values["facet_slack"][:, idx].sum(axis=1)
        return float(self.facet_slack[idx].sum()), _stderr(per_batch)


def looks_unstable(batch_totals: Sequence[float]) -> bool:
    """True when the last batch mean exceeds ten times the mean of the middle half of batches."""
    t = np.asarray(batch_totals, dtype=float)
    B = t.size
    middle = t[B // 4: max(B // 4 + 1, 3 * B // 4)].mean()
    return bool(t[-1] > 10.0 * middle and t[-1] > 0.0)


def _stderr(per_batch: np.ndarray) -> np.ndarray | float:
    per_batch = np.asarray(per_batch, dtype=float)
    B = per_batch.shape[0]
    out = per_batch.std(axis=0, ddof=1) / math.sqrt(B)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Single-step primitives

def step(q: Sequence, a: Sequence, s: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """One slot of queue dynamics: returns (q_next, u) with u the unused service."""
    q, a, s = (np.asarray(v) for v in (q, a, s))
    if np.any(q < 0) or np.any(a < 0) or np.any(s < 0):
        raise ValueError("q, a and s must be nonnegative")
    net = q + a - s
    u = np.maximum(-net, 0)
    q_next = np.maximum(net, 0)
    return q_next, u


def maxweight_schedule(q: Sequence, schedules: Sequence[Sequence], rng: np.random.Generator) -> np.ndarray:
    """A uniformly random element of argmax_x ⟨q, x⟩ over ``schedules``."""
    S = np.asarray(schedules)
    if S.size == 0:
        raise ValueError("schedule set is empty")
    weights = S @ np.asarray(q)
    best = np.flatnonzero(weights == weights.max())
    return S[best[rng.integers(best.size)]]


# ---------------------------------------------------------------------------
# Compiled slot loop

@numba.njit(cache=True, nogil=True)
def _run_chunk(
    k0, uc, ua, ut,
    q, psi_cum, full_sched, n_full, cand_sched, n_cand,
    arr_vals, arr_cum,
    facets_c, b_ml_scaled,
    cone_A, H, orders, want_cone, want_cross,
    burn, batch_len, n_batches,
    acc_q, acc_a, acc_s, acc_u, acc_qu, acc_cu, acc_pk, acc_ph, acc_par,
    cnt_m, cnt_ml, viol, n_checked,
):
    n = q.size
    M = psi_cum.size
    L = facets_c.shape[0]
    T = orders.size
    n_gen = cone_A.shape[1]
    xi = np.zeros(n_gen)
    xf = np.zeros(n)
    s = np.zeros(n, dtype=np.int64)
    a = np.zeros(n, dtype=np.int64)
    u = np.zeros(n, dtype=np.int64)
    qn = np.zeros(n, dtype=np.int64)
    for t in range(uc.size):
        k = k0 + t
        # channel state
        m = np.searchsorted(psi_cum, uc[t], side="right")
        if m >= M:
            m = M - 1
        # MaxWeight over the full set (for the check) and over the candidates
        best_full = -1
        for r in range(n_full[m]):
            w = 0
            for i in range(n):
                w += q[i] * full_sched[m, r, i]
            if w > best_full:
                best_full = w
        best = -1
        ties = 0
        for r in range(n_cand[m]):
            w = 0
            for i in range(n):
                w += q[i] * cand_sched[m, r, i]
            if w > best:
                best = w
                ties = 1
            elif w == best:
                ties += 1
        pick = int(ut[t] * ties)
        if pick >= ties:
            pick = ties - 1
        chosen = -1
        seen = 0
        for r in range(n_cand[m]):
            w = 0
            for i in range(n):
                w += q[i] * cand_sched[m, r, i]
            if w == best:
                if seen == pick:
                    chosen = r
                    break
                seen += 1
        chosen_w = 0
        for i in range(n):
            s[i] = cand_sched[m, chosen, i]
            chosen_w += q[i] * s[i]
        if chosen_w != best_full:
            viol[3] += 1
        # arrivals
        ia = np.searchsorted(arr_cum, ua[t], side="right")
        if ia >= arr_cum.size:
            ia = arr_cum.size - 1
        for i in range(n):
            a[i] = arr_vals[ia, i]
        # queue update
        for i in range(n):
            net = q[i] + a[i] - s[i]
            if net < 0:
                u[i] = -net
                qn[i] = 0
            else:
                u[i] = 0
                qn[i] = net
            if qn[i] < 0:
                viol[0] += 1
            if u[i] > s[i]:
                viol[1] += 1
            if qn[i] * u[i] != 0:
                viol[2] += 1
        n_checked[0] += 1
        # statistics on the observed state q(k)
        if k >= burn:
            b = (k - burn) // batch_len
            if b < n_batches:
                cnt_m[b, m] += 1
                for ell in range(L):
                    cs = 0.0
                    cu = 0.0
                    for i in range(n):
                        cs += facets_c[ell, i] * s[i]
                        cu += facets_c[ell, i] * u[i]
                    acc_cu[b, ell] += cu
                    if abs(cs - b_ml_scaled[m, ell]) <= 1e-9 * max(1.0, b_ml_scaled[m, ell]):
                        cnt_ml[b, m, ell] += 1
                for i in range(n):
                    acc_q[b, i] += q[i]
                    acc_a[b, i] += a[i]
                    acc_s[b, i] += s[i]
                    acc_u[b, i] += u[i]
                if want_cross:
                    for i in range(n):
                        if qn[i] != 0:
                            for j in range(n):
                                acc_qu[b, i, j] += qn[i] * u[j]
                if want_cone:
                    nrm2 = 0.0
                    for i in range(n):
                        xf[i] = q[i]
                        nrm2 += xf[i] * xf[i]
                    par2 = 0.0
                    perp_h2 = 0.0
                    for i in range(n):
                        h = 0.0
                        for j in range(n):
                            h += H[i, j] * xf[j]
                        par2 += h * h
                        perp_h2 += (xf[i] - h) * (xf[i] - h)
                    acc_par[b] += par2
                    perp_k2 = 0.0
                    if nrm2 > 0.0:
                        _nnls(cone_A, xf, xi, 100 * n_gen)
                        for i in range(n):
                            p = 0.0
                            for j in range(n_gen):
                                p += cone_A[i, j] * xi[j]
                            perp_k2 += (xf[i] - p) * (xf[i] - p)
                    for o in range(T):
                        acc_pk[b, o] += perp_k2 ** (orders[o] / 2.0)
                        acc_ph[b, o] += perp_h2 ** (orders[o] / 2.0)
        for i in range(n):
            q[i] = qn[i]


# ---------------------------------------------------------------------------
# Drivers

def _pareto_maximal(S: np.ndarray) -> np.ndarray:
    keep = [x for x in S if not np.any(np.all(S >= x, axis=1) & np.any(S > x, axis=1))]
    return np.array(keep)


def _scaled_int(x: np.ndarray, grid: int, what: str) -> np.ndarray:
    y = np.asarray(x, dtype=float) * grid
    r = np.round(y)
    if np.any(np.abs(y - r) > 1e-9):
        raise ValueError(f"{what} is not on the 1/{grid} grid")
    return r.astype(np.int64)


def _pack_schedules(sets: list[np.ndarray], n: int) -> tuple[np.ndarray, np.ndarray]:
    kmax = max(len(S) for S in sets)
    out = np.zeros((len(sets), kmax, n), dtype=np.int64)
    counts = np.zeros(len(sets), dtype=np.int64)
    for m, S in enumerate(sets):
        out[m, :len(S)] = S
        counts[m] = len(S)
    return out, counts


def simulate(
    spec: SwitchSpec,
    family: HeavyTrafficFamily | ArrivalSpec,
    geometry: CapacityGeometry,
    config: SimConfig,
    w_list: Sequence[Sequence[float]] = (),
) -> SimEstimates:
    """Run the chain from q = 0 and return post-burn-in estimates."""
    g = spec.grid
    n = spec.n
    arrivals = family.at(config.epsilon) if isinstance(family, HeavyTrafficFamily) else family
    if arrivals.n != n:
        raise ValueError("arrival dimension does not match the switch")

    full_sets = [_scaled_int(spec.schedule_array(m), g, "schedule") for m in range(len(spec.channel_states))]
    cand_sets = full_sets if config.tie_break == "uniform" else [_pareto_maximal(S) for S in full_sets]
    full_sched, n_full = _pack_schedules(full_sets, n)
    cand_sched, n_cand = _pack_schedules(cand_sets, n)
    psi_cum = np.cumsum(spec.psi)
    arr_vals = np.array([x for x, _ in arrivals.support], dtype=np.int64) * g
    arr_cum = np.cumsum([p for _, p in arrivals.support])

    facets_c = np.array([f.c for f in geometry.facets], dtype=float)
    b_ml_scaled = geometry.b_ml * g
    cone_A = np.ascontiguousarray(geometry.cone_generators)
    H = np.ascontiguousarray(geometry.H)
    orders = np.array(config.cone_moments_orders or (2,), dtype=np.int64)
    want_cone = bool(config.cone_moments_orders)

    B, L, M, T = config.batches, facets_c.shape[0], len(spec.channel_states), orders.size
    burn, blen = config.burn_slots, config.batch_len
    acc = dict(
        acc_q=np.zeros((B, n)), acc_a=np.zeros((B, n)), acc_s=np.zeros((B, n)), acc_u=np.zeros((B, n)),
        acc_qu=np.zeros((B, n, n)), acc_cu=np.zeros((B, L)), acc_pk=np.zeros((B, T)), acc_ph=np.zeros((B, T)),
        acc_par=np.zeros(B), cnt_m=np.zeros((B, M)), cnt_ml=np.zeros((B, M, L)),
    )
    viol = np.zeros(4, dtype=np.int64)
    n_checked = np.zeros(1, dtype=np.int64)

    seq = np.random.SeedSequence(config.seed)
    rng_c, rng_a, rng_t = (np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(3))
    q = np.zeros(n, dtype=np.int64)
    k = 0
    while k < config.horizon:
        size = min(CHUNK, config.horizon - k)
        _run_chunk(
            k, rng_c.random(size), rng_a.random(size), rng_t.random(size),
            q, psi_cum, full_sched, n_full, cand_sched, n_cand, arr_vals, arr_cum,
            facets_c, b_ml_scaled, cone_A, H, orders, want_cone, config.estimate_cross_terms,
            burn, blen, B, *acc.values(), viol, n_checked,
        )
        k += size

    per = {}
    per["mean_q"] = acc["acc_q"] / blen / g
    per["cross_qu"] = acc["acc_qu"] / blen / g**2
    per["flow_residual"] = (acc["acc_a"] - acc["acc_s"] + acc["acc_u"]) / blen / g
    per["facet_slack"] = acc["acc_cu"] / blen / g
    per["perp_cone_moments"] = acc["acc_pk"] / blen / g ** orders[None, :]
    per["perp_subspace_moments"] = acc["acc_ph"] / blen / g ** orders[None, :]
    per["par_subspace_second_moment"] = acc["acc_par"] / blen / g**2
    per["arrival_rate"] = acc["acc_a"] / blen / g
    per["service_rate"] = acc["acc_s"] / blen / g
    per["unused_rate"] = acc["acc_u"] / blen / g
    W = np.asarray(w_list, dtype=float).reshape(-1, n)
    per["scaled_lincomb"] = config.epsilon * per["mean_q"] @ W.T

    means = {k_: v.mean(axis=0) for k_, v in per.items()}
    stds = {k_: _stderr(v) for k_, v in per.items()}
    cnt_m = acc["cnt_m"].sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        pi_hat = acc["cnt_ml"].sum(axis=0) / cnt_m[:, None]

    totals = per["mean_q"].sum(axis=1)
    if looks_unstable(totals):
        warnings.warn(
            f"eps={config.epsilon}: last-batch mean queue {totals[-1]:.3g} exceeds 10x the middle batches",
            InstabilityWarning,
            stacklevel=2,
        )

    if want_cone:
        pk = {int(t): float(v) for t, v in zip(orders, means["perp_cone_moments"])}
        ph = {int(t): float(v) for t, v in zip(orders, means["perp_subspace_moments"])}
        par2 = float(means["par_subspace_second_moment"])
    else:
        pk, ph, par2 = {}, {}, math.nan

    return SimEstimates(
        epsilon=config.epsilon,
        horizon=config.horizon,
        seed=config.seed,
        slots_averaged=B * blen,
        mean_q=means["mean_q"],
        scaled_lincomb=means["scaled_lincomb"],
        w_list=W,
        perp_cone_moments=pk,
        perp_subspace_moments=ph,
        par_subspace_second_moment=par2,
        cross_qu=means["cross_qu"],
        flow_residual=means["flow_residual"],
        facet_slack=means["facet_slack"],
        pi_ml_hat=pi_hat,
        batch_std=stds,
        batch_values=per,
        invariant_violations=dict(zip(INVARIANT_NAMES, (int(v) for v in viol))),
        slots_checked=int(n_checked[0]),
    )


def derive_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for run ``index`` of a sweep."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    seed: int
    estimates: SimEstimates | None
    error: BaseException | None = None


def sweep(
    spec: SwitchSpec,
    family: HeavyTrafficFamily,
    geometry: CapacityGeometry,
    config: SimConfig,
    eps_list: Sequence[float],
    w_list: Sequence[Sequence[float]] = (),
    workers: int | None = None,
) -> list[SweepRow]:
    """Independent runs over ``eps_list``; a failing run is reported in its row."""
    eps_list = list(eps_list)
    if not eps_list:
        return []
    seeds = [derive_seed(config.seed, i) for i in range(len(eps_list))]

    def one(i: int) -> SweepRow:
        try:
            cfg = SimConfig(
                epsilon=eps_list[i], horizon=config.horizon, burn_in=config.burn_in, batches=config.batches,
                seed=seeds[i], estimate_cross_terms=config.estimate_cross_terms,
                cone_moments_orders=config.cone_moments_orders, tie_break=config.tie_break,
            )
            return SweepRow(eps_list[i], seeds[i], simulate(spec, family, geometry, cfg, w_list))
        except Exception as exc:  # reported per row, other runs continue
            return SweepRow(eps_list[i], seeds[i], None, exc)

    workers = workers or min(len(eps_list), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(eps_list))))
