"""Drift-equation systems for the 2×2 switch and the small dense LPs that bound them.

The solver is a two-phase tableau simplex with Bland's rule.  It is meant for the
dozen-variable problems built here, not for general use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-8
COST_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_PIVOTS = 10_000


class IterationLimitError(RuntimeError):
    pass


class ModelInconsistencyError(RuntimeError):
    """The drift equalities and sign constraints admit no solution."""


class UnboundedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """``sense`` objective·x subject to eq rows ``A x = b``, ge rows ``G x ≥ h``, x ≥ 0."""

    objective: np.ndarray
    eq: tuple[np.ndarray, np.ndarray] | None = None
    ge: tuple[np.ndarray, np.ndarray] | None = None
    sense: str = "min"

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        object.__setattr__(self, "objective", c)
        for name in ("eq", "ge"):
            block = getattr(self, name)
            if block is None:
                continue
            A = np.atleast_2d(np.asarray(block[0], dtype=float))
            b = np.asarray(block[1], dtype=float).ravel()
            if A.shape[1] != c.size or A.shape[0] != b.size:
                raise ValueError(f"{name} block has shape {A.shape} / {b.shape}, objective has {c.size} entries")
            object.__setattr__(self, name, (A, b))
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def residuals(self, x: np.ndarray) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        worst = float(max(0.0, -x.min(initial=0.0)))
        if self.eq is not None:
            worst = max(worst, float(np.abs(self.eq[0] @ x - self.eq[1]).max(initial=0.0)))
        if self.ge is not None:
            worst = max(worst, float((self.ge[1] - self.ge[0] @ x).max(initial=0.0)))
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray | None
    value: float
    pivots: int = 0


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run_simplex(T: np.ndarray, basis: list[int], allowed: np.ndarray, budget: list[int]) -> str:
    """Minimise the cost row (last row) of ``T`` in place using Bland's rule."""
    m = T.shape[0] - 1
    while True:
        reduced = T[-1, :-1]
        candidates = np.flatnonzero((reduced < -COST_TOL) & allowed)
        if candidates.size == 0:
            return "optimal"
        j = int(candidates[0])
        col = T[:m, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        budget[0] += 1
        if budget[0] > MAX_PIVOTS:
            raise IterationLimitError(f"simplex exceeded {MAX_PIVOTS} pivots")
        _pivot(T, r, j)
        basis[r] = j


def solve(lp: LinearProgram) -> LpSolution:
    """Two-phase primal simplex; reports optimal, infeasible or unbounded."""
    n = lp.n_vars
    blocks_A, blocks_b = [], []
    n_surplus = 0 if lp.ge is None else lp.ge[0].shape[0]
    if lp.eq is not None:
        blocks_A.append(np.hstack([lp.eq[0], np.zeros((lp.eq[0].shape[0], n_surplus))]))
        blocks_b.append(lp.eq[1])
    if lp.ge is not None:
        blocks_A.append(np.hstack([lp.ge[0], -np.eye(n_surplus)]))
        blocks_b.append(lp.ge[1])
    c = lp.objective if lp.sense == "min" else -lp.objective
    if not blocks_A:
        if np.any(c < -COST_TOL):
            return LpSolution("unbounded", None, math.inf if lp.sense == "max" else -math.inf)
        return LpSolution("optimal", np.zeros(n), 0.0)

    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)
    flip = b < 0
    A[flip] *= -1
    b = np.where(flip, -b, b)
    m, N = A.shape

    # Tableau columns: structural+surplus (N), artificials (m), rhs.
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(N, N + m))
    budget = [0]
    allowed = np.ones(N + m, dtype=bool)
    _run_simplex(T, basis, allowed, budget)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > FEAS_TOL * scale:
        return LpSolution("infeasible", None, math.nan, budget[0])

    # Drive remaining artificials out of the basis, dropping redundant rows.
    r = 0
    while r < len(basis):
        if basis[r] >= N:
            nz = np.flatnonzero(np.abs(T[r, :N]) > 1e-9)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
            else:
                T = np.delete(T, r, axis=0)
                del basis[r]
                continue
        r += 1

    T = np.hstack([T[:, :N], T[:, -1:]])
    m = len(basis)
    cost = np.concatenate([c, np.zeros(N - n)])
    T[-1, :N] = cost
    T[-1, -1] = 0.0
    for i, j in enumerate(basis):
        T[-1] -= cost[j] * T[i]
    status = _run_simplex(T, basis, np.ones(N, dtype=bool), budget)
    if status == "unbounded":
        return LpSolution("unbounded", None, math.inf if lp.sense == "max" else -math.inf, budget[0])
    x_full = np.zeros(N)
    for i, j in enumerate(basis):
        x_full[j] = T[i, -1]
    x = np.clip(x_full[:n], 0.0, None)
    value = float(lp.objective @ x)
    return LpSolution("optimal", x, value, budget[0])


# ---------------------------------------------------------------------------
# 2×2 switch drift system

VAR_NAMES = ("v1", "v2", "v3", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8")
# w_k = E[q_i^+ u_j] for these (i, j) pairs, 1-based queue labels.
W_PAIRS = ((1, 2), (1, 3), (2, 1), (2, 3), (2, 4), (3, 1), (3, 2), (3, 4))

# Rows of the projection onto the collapse subspace, restricted to queues 1..3.
SWITCH_PROJECTION_ROWS = np.array(
    [[3.0, 1.0, 1.0, -1.0], [1.0, 3.0, -1.0, 1.0], [1.0, -1.0, 3.0, 1.0]]
) / 4.0


def _row(v: Sequence[float], w: Sequence[float]) -> list[float]:
    return list(v) + list(w)


# Every limit cross term moved to the left-hand side of the six identities.
_DERIVED_ROWS = np.array([
    _row([1, 0, 0], [-0.5, -0.5, 0, 0, 0.5, 0, 0, 0.5]),
    _row([0, 1, 0], [0, 0, -0.5, 0.5, -0.5, 0, 0, 0]),
    _row([0, 0, 1], [0, 0, 0, 0, 0, -0.5, 0.5, -0.5]),
    _row([1, 1, 0], [-1.5, 0.5, -1.5, -0.5, 0, 0, 0, -0.5]),
    _row([1, 0, 1], [0.5, -1.5, 0, 0, -0.5, -1.5, -0.5, 0]),
    _row([0, 1, 1], [0, 0, -0.5, -1.5, -0.5, -0.5, -1.5, -0.5]),
])

# The bounding-LP equalities exactly as typeset in the source tables' theorem.
# The garbled leading term "3w_" of the fourth row is read as 3·w1.
_PRINTED_ROWS = np.array([
    _row([1, 0, 0], [-0.5, 0.5, 0, 0, -0.5, 0, 0, -0.5]),
    _row([0, 1, 0], [0, 0, -0.5, -0.5, 0.5, 0, 0, 0]),
    _row([0, 0, 1], [0, 0, 0, 0, 0, -0.5, -0.5, 0.5]),
    _row([1, 1, 0], [-1.5, -0.5, 1.5, 0.5, 0, 0, 0, 0.5]),
    _row([1, 0, 1], [0.5, -1.5, 0, 0, -0.5, -1.5, -0.5, 0]),
    _row([0, 1, 1], [0, 0, -0.5, 1.5, 0.5, 0.5, 1.5, 0.5]),
])

# Coefficients on σᵢ² of the independent-arrival right-hand sides.
_INDEPENDENT_RHS = np.array([
    [9, 1, 1, 1, 16],
    [1, 9, 1, 1, 16],
    [1, 1, 9, 1, 16],
    [3, 3, -1, -1, 8],
    [3, -1, 3, -1, 8],
    [1, -3, -3, 1, 8],
], dtype=float)

# Correlated right-hand sides as typeset: coefficients on
# (S11, S12, S13, S14, S22, S23, S24, S33, S34, S44) followed by the denominator.
_PRINTED_CORRELATED_RHS = np.array([
    [9, 6, 6, -6, 1, 2, -2, 1, -2, 1, 16],
    [1, 6, -2, 2, 9, -6, -6, 1, -2, 1, 16],
    [1, -2, 6, 2, 1, -6, -2, 9, 6, 1, 16],
    [3, 18, -6, 6, 3, -2, 2, -1, 2, -1, 8],
    [3, -6, 18, 6, -1, 6, 2, 3, 6, -1, 8],
    [1, -2, 6, 2, -3, 18, 6, -3, -2, 1, 8],
], dtype=float)

MODES = ("derived", "as_printed")


@dataclass(frozen=True)
class DriftSystem:
    var_names: tuple[str, ...]
    eq_rows: np.ndarray
    rhs: np.ndarray
    source_mode: str
    sigma_source: str
    eps: float | None = None


def switch_bernoulli_variances(eps: float) -> np.ndarray:
    """σᵢ²(ε) for Bernoulli arrivals of rate (1−ε)/2 at each of the four queues."""
    lam = (1.0 - eps) / 2.0
    return np.full(4, lam * (1.0 - lam))


def _projection_rhs(sigma: np.ndarray) -> np.ndarray:
    p1, p2, p3 = SWITCH_PROJECTION_ROWS
    return np.array([
        p1 @ sigma @ p1, p2 @ sigma @ p2, p3 @ sigma @ p3,
        2 * p1 @ sigma @ p2, 2 * p1 @ sigma @ p3, 2 * p2 @ sigma @ p3,
    ])


def build_system_2x2(
    sigma: Sequence[float] | np.ndarray | None = None,
    mode: str = "derived",
    eps: float | None = None,
    sigma_source: str | None = None,
) -> DriftSystem:
    """Assemble the six drift equalities over (v₁,v₂,v₃,w₁..w₈).

    ``sigma`` is either four variances or a 4×4 covariance; when omitted, ``eps``
    selects the Bernoulli variances of :func:`switch_bernoulli_variances`.
    """
    if mode == "printed":
        mode = "as_printed"
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if sigma is None:
        if eps is None:
            raise ValueError("either sigma or eps is required")
        sigma = switch_bernoulli_variances(eps)
    sig = np.asarray(sigma, dtype=float)
    if sig.ndim == 1:
        if sig.shape != (4,) or np.any(sig < 0):
            raise ValueError("variances must be four nonnegative numbers")
        if sigma_source is None:
            sigma_source = "independent"
        cov = np.diag(sig)
    elif sig.shape == (4, 4):
        if sigma_source == "independent":
            raise ValueError("a full covariance matrix requires sigma_source='correlated'")
        sigma_source = "correlated"
        if np.abs(sig - sig.T).max() > 1e-12 or np.linalg.eigvalsh(sig).min() < -1e-9:
            raise ValueError("covariance must be symmetric positive semidefinite")
        cov = sig
    else:
        raise ValueError(f"sigma must have shape (4,) or (4, 4), got {sig.shape}")
    if sigma_source not in ("independent", "correlated"):
        raise ValueError(f"unknown sigma_source {sigma_source!r}")

    if sigma_source == "independent":
        d = np.diag(cov)
        rhs = _INDEPENDENT_RHS[:, :4] @ d / _INDEPENDENT_RHS[:, 4]
    elif mode == "derived":
        rhs = _projection_rhs(cov)
    else:
        iu = np.triu_indices(4)
        rhs = _PRINTED_CORRELATED_RHS[:, :10] @ cov[iu] / _PRINTED_CORRELATED_RHS[:, 10]

    rows = _DERIVED_ROWS if mode == "derived" else _PRINTED_ROWS
    return DriftSystem(VAR_NAMES, rows.copy(), rhs, mode, sigma_source, eps)


PAIR_COMBINATION_WEIGHTS = np.array([1.0, 1.0, 1.0, -0.5, -0.5, 0.5])


def combine_rows(system: DriftSystem, weights: Sequence[float] = PAIR_COMBINATION_WEIGHTS) -> tuple[np.ndarray, float]:
    """Weighted sum of the equality rows and right-hand sides."""
    wt = np.asarray(weights, dtype=float)
    return wt @ system.eq_rows, float(wt @ system.rhs)


# Inequalities: v₂+v₃ ≥ v₁ (from q₄ ≥ 0), w₇ ≥ w₁, w₄ ≥ w₂.
_INEQ_ROWS = np.array([
    _row([-1, 1, 1], [0] * 8),
    _row([0, 0, 0], [-1, 0, 0, 0, 0, 0, 1, 0]),
    _row([0, 0, 0], [0, -1, 0, 1, 0, 0, 0, 0]),
])


def build_bound_lp(system: DriftSystem, alpha: Sequence[float], sense: str = "min") -> LinearProgram:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (3,):
        raise ValueError("alpha must have three entries (weights on q1, q2, q3)")
    objective = np.concatenate([alpha, np.zeros(8)])
    return LinearProgram(
        objective=objective,
        eq=(system.eq_rows, system.rhs),
        ge=(_INEQ_ROWS, np.zeros(3)),
        sense=sense,
    )


def bounds(system: DriftSystem, alpha: Sequence[float]) -> tuple[float, float]:
    """Lower and upper LP bounds on lim ε·E⟨α, q⟩."""
    out = []
    for sense in ("min", "max"):
        sol = solve(build_bound_lp(system, alpha, sense))
        if sol.status == "infeasible":
            raise ModelInconsistencyError(
                f"{system.source_mode} drift system with sigma_source={system.sigma_source} has no nonnegative solution"
            )
        if sol.status == "unbounded":
            raise UnboundedError(f"{sense} of the objective is unbounded")
        out.append(sol.value)
    lo, hi = out
    if lo > hi + 1e-9:
        raise RuntimeError(f"lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


def markov_tail(f_upper: float, B: float) -> float:
    """Markov bound on P(lim ε⟨α, q⟩ ≥ B)."""
    if B <= 0:
        raise ValueError("B must be positive")
    return min(1.0, f_upper / B)


def count_equations_variables(m: int, d: int) -> tuple[int, int]:
    """Equation and unknown counts for moment order ``m`` and collapse dimension ``d``."""
    if m < 1 or d < 2:
        raise ValueError("requires m >= 1 and d >= 2")
    equations = math.comb(m + d, d - 1)
    variables = math.comb(m + d - 1, d - 1) + d * math.comb(m + d - 2, d - 2)
    return equations, variables
