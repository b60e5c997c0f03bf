"""Capacity-region geometry and the collapse subspace/cone around a boundary point.

The small linear-algebra kernels (Gaussian elimination, active-set NNLS) are
compiled with numba so the simulator can call them once per slot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from . import lp
from .model import SwitchSpec

PIVOT_THRESHOLD = 1e-12
INDEPENDENCE_TOL = 1e-8
TIGHT_TOL = 1e-9
NNLS_KKT_TOL = 1e-8


class SingularMatrixError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class DirectionError(ValueError):
    pass


class NnlsIterationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Dense kernels

@numba.njit(cache=True, nogil=True)
def _gauss_solve(M, R, threshold):
    """Solve ``M X = R`` in place by elimination with partial pivoting.

    ``M`` (k×k) and ``R`` (k×r) are overwritten; on return ``R`` holds X.
    Returns False if a pivot falls below ``threshold`` in absolute value.
    """
    k = M.shape[0]
    r = R.shape[1]
    for col in range(k):
        piv = col
        best = abs(M[col, col])
        for i in range(col + 1, k):
            if abs(M[i, col]) > best:
                best = abs(M[i, col])
                piv = i
        if best < threshold:
            return False
        if piv != col:
            for j in range(k):
                M[col, j], M[piv, j] = M[piv, j], M[col, j]
            for j in range(r):
                R[col, j], R[piv, j] = R[piv, j], R[col, j]
        for i in range(col + 1, k):
            f = M[i, col] / M[col, col]
            if f != 0.0:
                for j in range(col, k):
                    M[i, j] -= f * M[col, j]
                for j in range(r):
                    R[i, j] -= f * R[col, j]
    for col in range(k - 1, -1, -1):
        for j in range(r):
            s = R[col, j]
            for i in range(col + 1, k):
                s -= M[col, i] * R[i, j]
            R[col, j] = s / M[col, col]
    return True


def gauss_inverse(M: np.ndarray, threshold: float = PIVOT_THRESHOLD) -> np.ndarray:
    M = np.array(M, dtype=float, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    R = np.eye(M.shape[0])
    if not _gauss_solve(M, R, threshold):
        raise SingularMatrixError("matrix is numerically singular (pivot below threshold)")
    return R


@numba.njit(cache=True, nogil=True)
def _nnls(A, x, xi, max_steps):
    """Lawson–Hanson active-set NNLS: minimise ‖x − A ξ‖ over ξ ≥ 0.

    The entering column is the one with the largest gradient component
    Aᵀ(x − Aξ), lowest index on ties.  ``xi`` receives the solution.  Returns the
    number of steps taken, or −1 if ``max_steps`` is exceeded.
    """
    n, k = A.shape
    G = A.T @ A
    Atx = A.T @ x
    scale = 1.0
    for i in range(n):
        scale = max(scale, abs(x[i]))
    colmax = 0.0
    for j in range(k):
        colmax = max(colmax, np.sqrt(G[j, j]))
    tol = 1e-12 * scale * max(colmax, 1.0)
    for j in range(k):
        xi[j] = 0.0
    passive = np.zeros(k, dtype=np.bool_)
    blocked = np.zeros(k, dtype=np.bool_)
    z = np.zeros(k)
    steps = 0
    while True:
        grad = Atx - G @ xi
        j_in = -1
        best = tol
        for j in range(k):
            if not passive[j] and not blocked[j] and grad[j] > best:
                best = grad[j]
                j_in = j
        if j_in < 0:
            return steps
        passive[j_in] = True
        while True:
            steps += 1
            if steps > max_steps:
                return -1
            idx = np.flatnonzero(passive)
            p = idx.size
            Gs = np.empty((p, p))
            rs = np.empty((p, 1))
            for a in range(p):
                rs[a, 0] = Atx[idx[a]]
                for b in range(p):
                    Gs[a, b] = G[idx[a], idx[b]]
            ok = _gauss_solve(Gs, rs, 1e-14 * max(colmax * colmax, 1.0))
            if not ok:
                # Numerically dependent column: keep it out until the iterate moves.
                passive[j_in] = False
                blocked[j_in] = True
                break
            for j in range(k):
                z[j] = 0.0
            for a in range(p):
                z[idx[a]] = rs[a, 0]
            feasible = True
            for a in range(p):
                if z[idx[a]] <= 0.0:
                    feasible = False
                    break
            if feasible:
                for j in range(k):
                    xi[j] = z[j]
                for j in range(k):
                    blocked[j] = False
                break
            alpha = 1.0
            for a in range(p):
                j = idx[a]
                if z[j] <= 0.0:
                    t = xi[j] / (xi[j] - z[j])
                    if t < alpha:
                        alpha = t
            for a in range(p):
                j = idx[a]
                xi[j] += alpha * (z[j] - xi[j])
                if xi[j] <= 1e-15 * max(1.0, scale):
                    xi[j] = 0.0
                    passive[j] = False
            for j in range(k):
                blocked[j] = False


@dataclass(frozen=True)
class ConeProjection:
    parallel: np.ndarray
    perp: np.ndarray
    weights: np.ndarray
    steps: int


def project_cone(generators: np.ndarray, x: Sequence[float]) -> ConeProjection:
    """Euclidean projection of ``x`` onto the cone spanned by the columns of ``generators``."""
    A = np.asarray(generators, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    x = np.asarray(x, dtype=float)
    if A.shape[0] != x.size:
        raise ValueError("generator rows must match the length of x")
    if np.any(np.linalg.norm(A, axis=0) == 0):
        raise ValueError("cone generators must be nonzero")
    xi = np.zeros(A.shape[1])
    steps = _nnls(np.ascontiguousarray(A), x, xi, 100 * A.shape[1])
    if steps < 0:
        raise NnlsIterationError(f"active-set iteration exceeded {100 * A.shape[1]} steps")
    par = A @ xi
    return ConeProjection(par, x - par, xi, steps)


def project_subspace(H: np.ndarray, x: Sequence[float]) -> np.ndarray:
    return np.asarray(H, dtype=float) @ np.asarray(x, dtype=float)


def projection_matrix(C: np.ndarray) -> np.ndarray:
    """H = C(CᵀC)⁻¹Cᵀ, the orthogonal projector onto the column span of C."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    H = C @ gauss_inverse(C.T @ C) @ C.T
    return (H + H.T) / 2


# ---------------------------------------------------------------------------
# Facets

@dataclass(frozen=True)
class Facet:
    c: np.ndarray
    b: float


def _check_facets(facets) -> list[Facet]:
    out = []
    for f in facets:
        c, b = (f.c, f.b) if isinstance(f, Facet) else f
        c = np.asarray(c, dtype=float)
        if np.any(c < 0):
            raise GeometryError(f"facet normal {c} has a negative entry")
        if not b > 0:
            raise GeometryError(f"facet offset {b} must be positive")
        out.append(Facet(c, float(b)))
    return out


def _pareto_then_close(points: np.ndarray) -> np.ndarray:
    """Keep Pareto-maximal points, then re-add every coordinate projection of them."""
    pts = np.unique(points, axis=0)
    keep = []
    for i, p in enumerate(pts):
        dominated = np.any(np.all(pts >= p, axis=1) & np.any(pts > p, axis=1))
        if not dominated:
            keep.append(p)
    out = set()
    for p in keep:
        nz = np.flatnonzero(p)
        for mask in itertools.product((0, 1), repeat=nz.size):
            q = p.copy()
            q[nz[np.array(mask, dtype=bool)]] = 0.0
            out.add(tuple(q))
    return np.array(sorted(out))


def _normalize_facet(c: np.ndarray, b: float) -> tuple[np.ndarray, float]:
    s = c[c > 1e-12].min()
    c, b = c / s, b / s
    snap = lambda v: np.where(np.abs(v - np.round(v)) < 1e-9, np.round(v), v)
    return snap(c), float(snap(np.array(b)))


def minkowski_points(spec: SwitchSpec) -> np.ndarray:
    """All ψ-weighted sums of one schedule choice per channel state."""
    per_state = [_pareto_then_close(spec.schedule_array(m)) for m in range(len(spec.channel_states))]
    psi = spec.psi
    pts = np.zeros((1, spec.n))
    for m, S in enumerate(per_state):
        pts = (pts[:, None, :] + psi[m] * S[None, :, :]).reshape(-1, spec.n)
        pts = _pareto_then_close(np.round(pts, 12))
    return pts


def _brute_force_facets(points: np.ndarray, tol: float = 1e-9) -> list[Facet]:
    n = points.shape[1]
    if n == 1:
        top = points.max()
        if top <= 0:
            raise GeometryError("capacity region is degenerate (no service)")
        return [Facet(np.array([1.0]), float(top))]
    found: dict[tuple, Facet] = {}
    for combo in itertools.combinations(range(len(points)), n):
        P = points[list(combo)]
        D = P[1:] - P[0]
        _, sv, vt = np.linalg.svd(D)
        if sv.size < n - 1 or sv[-1] < 1e-10 * max(1.0, sv[0]):
            continue
        c = vt[-1]
        b = float(c @ P[0])
        if abs(b) < 1e-12:
            continue  # hyperplanes through the origin bound the orthant, not the region
        if b < 0:
            c, b = -c, -b
        if np.any(points @ c > b + tol * max(1.0, abs(b))):
            continue
        if np.any(c < -1e-12):
            continue
        c = np.where(np.abs(c) < 1e-12, 0.0, c)
        c, b = _normalize_facet(c, b)
        key = tuple(np.round(np.append(c, b), 9))
        found.setdefault(key, Facet(c, b))
    if not found:
        raise GeometryError("no facets found; is the capacity region full-dimensional?")
    return [found[k] for k in sorted(found)]


def capacity_halfspaces(spec: SwitchSpec, mode: str = "direct", facets=None) -> list[Facet]:
    """Half-space description {x : ⟨c, x⟩ ≤ b} of the capacity region (orthant faces omitted)."""
    if mode == "direct":
        if facets is None:
            raise GeometryError("direct mode needs an explicit facet list")
        return _check_facets(facets)
    if mode != "brute_force":
        raise ValueError(f"unknown mode {mode!r}")
    if spec.n > 3:
        raise GeometryError(f"brute-force facet enumeration supports n <= 3, got n={spec.n}")
    return _brute_force_facets(minkowski_points(spec))


# ---------------------------------------------------------------------------
# Service levels and the collapse geometry

@dataclass(frozen=True)
class ServiceLevels:
    b_ml: np.ndarray       # (M, L): max_x∈S^(m) ⟨c^(ℓ), x⟩
    psi: np.ndarray        # (M,)
    mean: np.ndarray       # (L,): E[B_ℓ]
    cov: np.ndarray        # (L, L): Cov(B)


def facet_service_levels(spec: SwitchSpec, facets: Sequence[Facet]) -> ServiceLevels:
    facets = _check_facets(facets)
    Cmat = np.array([f.c for f in facets]).T
    b_ml = np.array([(spec.schedule_array(m) @ Cmat).max(axis=0) for m in range(len(spec.channel_states))])
    psi = spec.psi
    mean = psi @ b_ml
    centred = b_ml - mean
    cov = (centred * psi[:, None]).T @ centred
    return ServiceLevels(b_ml, psi, mean, (cov + cov.T) / 2)


def tight_facets(facets: Sequence[Facet], nu: Sequence[float], tol: float = TIGHT_TOL) -> tuple[int, ...]:
    nu = np.asarray(nu, dtype=float)
    out = []
    for ell, f in enumerate(facets):
        gap = f.b - float(f.c @ nu)
        scale = tol * max(1.0, f.b)
        if gap < -scale:
            raise GeometryError(f"nu lies outside facet {ell}: <c, nu> = {f.c @ nu} > b = {f.b}")
        if gap <= scale:
            out.append(ell)
    return tuple(out)


def select_independent(P: Sequence[int], facets: Sequence[Facet]) -> tuple[tuple[int, ...], np.ndarray]:
    """Greedy ascending-index choice of linearly independent tight normals."""
    if not P:
        raise GeometryError("tight set is empty")
    chosen: list[int] = []
    basis: list[np.ndarray] = []
    for ell in sorted(P):
        c = np.asarray(facets[ell].c, dtype=float)
        r = c.copy()
        for e in basis:
            r -= (e @ r) * e
        if np.linalg.norm(r) > INDEPENDENCE_TOL * np.linalg.norm(c):
            chosen.append(ell)
            basis.append(r / np.linalg.norm(r))
    C = np.array([facets[ell].c for ell in chosen], dtype=float).T
    return tuple(chosen), C


@dataclass(frozen=True)
class CapacityGeometry:
    facets: tuple[Facet, ...]
    tight_set: tuple[int, ...]
    independent_set: tuple[int, ...]
    C: np.ndarray
    H: np.ndarray
    b_ml: np.ndarray
    psi: np.ndarray
    sigma_B: np.ndarray          # over the independent set
    sigma_B_tight: np.ndarray    # over the full tight set
    nu: np.ndarray

    @property
    def n(self) -> int:
        return self.nu.size

    @property
    def cone_generators(self) -> np.ndarray:
        """Columns c^(ℓ) for ℓ in the tight set."""
        return np.array([self.facets[ell].c for ell in self.tight_set], dtype=float).T

    @property
    def b_tight(self) -> np.ndarray:
        return np.array([self.facets[ell].b for ell in self.tight_set])

    @property
    def b_max(self) -> float:
        return float(self.b_ml[:, list(self.tight_set)].max())


def build_geometry(spec: SwitchSpec, nu: Sequence[float], facets=None, tol: float = TIGHT_TOL) -> CapacityGeometry:
    """Everything the heavy-traffic formulas need about the boundary point ``nu``.

    With ``facets=None`` the facets are enumerated by brute force (n ≤ 3).
    """
    if facets is None:
        fs = capacity_halfspaces(spec, "brute_force")
    else:
        fs = capacity_halfspaces(spec, "direct", facets)
    nu = np.asarray(nu, dtype=float)
    P = tight_facets(fs, nu, tol)
    Pt, C = select_independent(P, fs)
    H = projection_matrix(C)
    levels = facet_service_levels(spec, fs)
    for ell in P:
        if abs(levels.mean[ell] - fs[ell].b) > 1e-9 * max(1.0, fs[ell].b):
            raise GeometryError(
                f"facet {ell}: mean service level {levels.mean[ell]} differs from b = {fs[ell].b}"
            )
    Pl, Ptl = list(P), list(Pt)
    return CapacityGeometry(
        facets=tuple(fs),
        tight_set=P,
        independent_set=Pt,
        C=C,
        H=H,
        b_ml=levels.b_ml,
        psi=levels.psi,
        sigma_B=levels.cov[np.ix_(Ptl, Ptl)],
        sigma_B_tight=levels.cov[np.ix_(Pl, Pl)],
        nu=nu,
    )


# ---------------------------------------------------------------------------
# Feasibility of the common-face condition

@dataclass(frozen=True)
class FarkasResult:
    feasible: bool
    y: np.ndarray | None
    x: np.ndarray | None


def farkas_feasibility(A: np.ndarray, b_P: Sequence[float]) -> FarkasResult:
    """Decide whether {y ≥ 0 : AᵀA y = b_P} is nonempty.

    ``A`` holds the tight normals as columns.  On failure a separating ``x`` with
    xᵀAᵀA ≥ 0 and xᵀb_P < 0 is returned.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] == 0:
        raise GeometryError("need at least one tight facet")
    b = np.asarray(b_P, dtype=float)
    G = A.T @ A
    k = G.shape[0]
    sol = lp.solve(lp.LinearProgram(objective=np.zeros(k), eq=(G, b)))
    if sol.status == "optimal":
        return FarkasResult(True, sol.x, None)
    # Separating vector: minimise bᵀx over Gx ≥ 0, −1 ≤ x ≤ 1 with x = x⁺ − x⁻.
    I = np.eye(k)
    ge_A = np.vstack([np.hstack([G, -G]), np.hstack([-I, np.zeros((k, k))]), np.hstack([np.zeros((k, k)), -I])])
    ge_b = np.concatenate([np.zeros(k), -np.ones(2 * k)])
    cert = lp.solve(lp.LinearProgram(objective=np.concatenate([b, -b]), ge=(ge_A, ge_b)))
    x = cert.x[:k] - cert.x[k:]
    return FarkasResult(False, None, x)


def farkas_residual(A: np.ndarray, b_P: Sequence[float], y: Sequence[float]) -> float:
    """‖AᵀA y − b_P‖∞ for a candidate certificate ``y`` (infinite if y has a negative entry)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        return float("inf")
    return float(np.abs(A.T @ (A @ y) - np.asarray(b_P, dtype=float)).max())
