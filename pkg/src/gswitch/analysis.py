"""Closed-form heavy-traffic values, the universal lower bound, and simulation diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import SimEstimates, SweepRow
from .geometry import CapacityGeometry, DirectionError, gauss_inverse, project_cone

FACE_TOL = 1e-9


@dataclass(frozen=True)
class HtLimitReport:
    w: np.ndarray
    arrival_term: float
    service_term: float
    limit_value: float
    trace_value: float
    prelimit_bound_at: tuple[float, float, float] | None = None  # (ε, low, high) from simulation, if attached


def _on_face(geometry: CapacityGeometry, w: np.ndarray) -> None:
    for ell in geometry.tight_set:
        f = geometry.facets[ell]
        gap = float(f.c @ w) - f.b
        if abs(gap) > FACE_TOL * max(1.0, f.b):
            raise DirectionError(f"<c^({ell}), w> - b = {gap:.3e}; w is not on the common face of the tight facets")


def ht_limit(geometry: CapacityGeometry, sigma_a: np.ndarray, w: Sequence[float]) -> HtLimitReport:
    """Limit of ε·E⟨w, q⟩ for ``w`` on every tight facet.

    Computed as ½(1ᵀ(H∘Σ_a)1 + 1ᵀ((CᵀC)⁻¹∘Σ_B)1) and cross-checked against the
    trace form ½(tr(HΣ_aᵀ) + tr((CᵀC)⁻¹Σ_Bᵀ)).
    """
    w = np.asarray(w, dtype=float)
    _on_face(geometry, w)
    sigma_a = np.asarray(sigma_a, dtype=float)
    H, C = geometry.H, geometry.C
    CtC_inv = gauss_inverse(C.T @ C)
    arrival = 0.5 * float(np.sum(H * sigma_a))
    service = 0.5 * float(np.sum(CtC_inv * geometry.sigma_B))
    trace = 0.5 * (float(np.trace(H @ sigma_a.T)) + float(np.trace(CtC_inv @ geometry.sigma_B.T)))
    value = arrival + service
    if abs(trace - value) > 1e-10 * max(1.0, abs(value)):
        raise ArithmeticError(f"trace form {trace} disagrees with Hadamard form {value}")
    if arrival < -1e-9 or service < -1e-9:
        raise ArithmeticError("negative variance term")
    return HtLimitReport(w, arrival, service, value, trace)


def face_scale(geometry: CapacityGeometry, target: Sequence[float]) -> float:
    """κ such that ``target``/κ lies on the common face; raises if none exists."""
    target = np.asarray(target, dtype=float)
    ratios = [float(geometry.facets[ell].c @ target) / geometry.facets[ell].b for ell in geometry.tight_set]
    kappa = ratios[0]
    if kappa <= 0 or any(abs(r - kappa) > FACE_TOL * max(1.0, abs(kappa)) for r in ratios):
        raise DirectionError(f"no positive multiple of {target} lies on the common face (ratios {ratios})")
    return kappa


def scaled_limit(geometry: CapacityGeometry, sigma_a: np.ndarray, target: Sequence[float]) -> float:
    """Limit of ε·E⟨target, q⟩ when ``target`` is a positive multiple of a face direction."""
    kappa = face_scale(geometry, target)
    return kappa * ht_limit(geometry, sigma_a, np.asarray(target, dtype=float) / kappa).limit_value


# ---------------------------------------------------------------------------
# Universal lower bound

@dataclass(frozen=True)
class UlbReport:
    z: np.ndarray
    r: np.ndarray
    eps: float
    bound: float
    f_eps: float
    b_max: float
    arrival_term: float
    service_term: float


def cone_weights(geometry: CapacityGeometry, z: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    """Nonnegative r with z = Σ r_ℓ c^(ℓ) over the tight set."""
    proj = project_cone(geometry.cone_generators, z)
    if np.linalg.norm(proj.perp) > tol * max(1.0, np.linalg.norm(z)):
        raise DirectionError(f"{np.asarray(z)} is not in the cone of tight normals")
    return proj.weights


def ulb(
    geometry: CapacityGeometry,
    sigma_a_eps: np.ndarray,
    z: Sequence[float],
    eps: float,
    r: Sequence[float] | None = None,
) -> UlbReport:
    """Policy-independent lower bound on E⟨z, q⟩ at load (1−ε)ν."""
    z = np.asarray(z, dtype=float)
    if not np.any(z):
        raise ValueError("z must be nonzero")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    r = cone_weights(geometry, z) if r is None else np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DirectionError("cone weights must be nonnegative")
    if np.linalg.norm(geometry.cone_generators @ r - z) > 1e-9 * max(1.0, np.linalg.norm(z)):
        raise DirectionError("sum of r_l c^(l) does not reproduce z")
    sigma_a_eps = np.asarray(sigma_a_eps, dtype=float)
    zn = float(z @ geometry.nu)
    arrival = float(z @ sigma_a_eps @ z)
    service = float(r @ geometry.sigma_B_tight @ r)
    b_max = geometry.b_max
    f_eps = b_max * float(r.sum()) / 2.0 - eps * zn / 2.0
    bound = (arrival + service) / (2.0 * eps * zn) - f_eps
    return UlbReport(z, r, eps, bound, f_eps, b_max, arrival, service)


# ---------------------------------------------------------------------------
# Closed forms for the example systems, written independently of ht_limit

def switch_index_sets(N: int, i: int) -> tuple[list[int], list[int], list[int]]:
    """row(i), col(i), other(i) for queue ``i`` (0-based) of an N×N switch.

    Queues are numbered row by row; ``row`` holds the other queues of the same input
    port, ``col`` the other queues of the same output port, ``other`` the rest.
    """
    r, c = divmod(i, N)
    row = [r * N + k for k in range(N) if r * N + k != i]
    col = [k * N + c for k in range(N) if k * N + c != i]
    other = [j for j in range(N * N) if j != i and j not in row and j not in col]
    return row, col, other


def cor_switch_correlated(N: int, sigma_a: np.ndarray) -> float:
    """Limit of ε·E[Σ qᵢ] for an N×N switch with arrival covariance ``sigma_a``."""
    S = np.asarray(sigma_a, dtype=float)
    if S.shape != (N * N, N * N):
        raise ValueError(f"sigma_a must be {N * N}x{N * N}")
    total = 0.0
    for i in range(N * N):
        row, col, other = switch_index_sets(N, i)
        total += (2 * N - 1) * S[i, i]
        total += (N - 1) * sum(S[i, j] for j in row + col)
        total -= sum(S[i, j] for j in other)
    return total / (2 * N)


def cor_calculators(kind: str, **params) -> float:
    """Closed forms for the example systems.

    ``independent_switch``: N, variances.  ``full_dim``: variances, C, sigma_B.
    ``dedicated``: variances, service_variances.  ``n_system`` and ``ad_hoc``: variances.
    """
    var = np.asarray(params.get("variances", ()), dtype=float)
    if kind == "independent_switch":
        N = int(params["N"])
        return (1.0 - 1.0 / (2 * N)) * float(var.sum())
    if kind == "full_dim":
        C = np.asarray(params["C"], dtype=float)
        sigma_B = np.asarray(params.get("sigma_B", np.zeros((C.shape[1], C.shape[1]))), dtype=float)
        return 0.5 * (float(var.sum()) + float(np.sum(gauss_inverse(C.T @ C) * sigma_B)))
    if kind == "dedicated":
        svar = np.asarray(params["service_variances"], dtype=float)
        return 0.5 * float(np.sum(var + svar))
    if kind == "n_system":
        return float(var[0] + var[1]) / 2.0
    if kind == "ad_hoc":
        return 0.75 * float(var[0] + var[1])
    raise ValueError(f"unknown closed-form kind {kind!r}")


# ---------------------------------------------------------------------------
# Diagnostics

@dataclass(frozen=True)
class SscRow:
    epsilon: float
    perp_cone: dict[int, float]
    perp_cone_std: dict[int, float]
    perp_subspace: dict[int, float]
    ratio_perp_to_parallel: float
    pi_ml_hat: np.ndarray
    violation: bool


@dataclass(frozen=True)
class SscReport:
    rows: list[SscRow]
    perp_second_moment_spread: float   # max/min of E‖q⊥K‖² across ε
    ratio_decreasing: bool | None      # None with fewer than two rows


def ssc_report(results: Sequence[SweepRow | tuple[float, SimEstimates]], geometry: CapacityGeometry | None = None) -> SscReport:
    rows = []
    for item in results:
        est = item.estimates if isinstance(item, SweepRow) else item[1]
        if est is None:
            continue
        orders = sorted(est.perp_cone_moments)
        pk_std = est.batch_std["perp_cone_moments"]
        pk_std = {t: float(np.atleast_1d(pk_std)[k]) for k, t in enumerate(orders)}
        violation = any(est.perp_subspace_moments[t] > est.perp_cone_moments[t] + 3 * pk_std[t] for t in orders)
        ratio = est.perp_cone_moments.get(2, np.nan) / est.par_subspace_second_moment
        rows.append(SscRow(est.epsilon, dict(est.perp_cone_moments), pk_std, dict(est.perp_subspace_moments),
                           float(ratio), est.pi_ml_hat, bool(violation)))
    rows.sort(key=lambda r: -r.epsilon)
    second = [r.perp_cone.get(2, np.nan) for r in rows]
    spread = float(np.max(second) / np.min(second)) if rows else float("nan")
    if len(rows) < 2:
        trend = None
    else:
        ratios = [r.ratio_perp_to_parallel for r in rows]
        trend = all(b <= a for a, b in zip(ratios, ratios[1:]))
    return SscReport(rows, spread, trend)


@dataclass(frozen=True)
class Comparison:
    label: str
    formula: float
    estimate: float
    batch_std: float
    tolerance: float
    passed: bool


def compare(formula: float, estimate: float, batch_std: float, tolerance: float, label: str = "") -> Comparison:
    """Pass iff |formula − estimate| ≤ max(tolerance, 3·batch_std)."""
    ok = abs(formula - estimate) <= max(tolerance, 3.0 * batch_std)
    return Comparison(label, float(formula), float(estimate), float(batch_std), float(tolerance), bool(ok))
