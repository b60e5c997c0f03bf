"""Independent reference computations used by several test modules."""

import itertools

import numpy as np

from gswitch.lp import LinearProgram


def random_lp(rng: np.random.Generator, max_vars: int = 7, max_rows: int = 6) -> LinearProgram:
    """A small LP that is bounded by construction (it contains the row Σx ≤ U)."""
    n = int(rng.integers(2, max_vars + 1))
    m_le = int(rng.integers(1, max_rows))
    m_ge = int(rng.integers(0, 2))
    m_eq = int(rng.integers(0, 2))
    le_A = np.vstack([rng.integers(0, 4, size=(m_le, n)), np.ones((1, n))]).astype(float)
    le_b = np.concatenate([rng.integers(1, 10, size=m_le), [rng.integers(5, 15)]]).astype(float)
    ge_rows = [-le_A]
    ge_rhs = [-le_b]
    if m_ge:
        ge_rows.append(rng.integers(0, 3, size=(m_ge, n)).astype(float))
        ge_rhs.append(rng.integers(0, 4, size=m_ge).astype(float))
    eq = None
    if m_eq:
        eq = (rng.integers(-1, 3, size=(m_eq, n)).astype(float), rng.integers(0, 5, size=m_eq).astype(float))
    return LinearProgram(
        objective=rng.integers(-5, 6, size=n).astype(float),
        eq=eq,
        ge=(np.vstack(ge_rows), np.concatenate(ge_rhs)),
        sense=str(rng.choice(["min", "max"])),
    )


def vertex_enumeration(lp: LinearProgram) -> float | None:
    """Optimum over basic feasible points, or None when there are none."""
    n = lp.n_vars
    rows = [lp.ge[0], np.eye(n)]
    rhs = [lp.ge[1], np.zeros(n)]
    G, h = np.vstack(rows), np.concatenate(rhs)
    E = lp.eq[0] if lp.eq is not None else np.zeros((0, n))
    e = lp.eq[1] if lp.eq is not None else np.zeros(0)
    need = n - E.shape[0]
    best = None
    for S in itertools.combinations(range(G.shape[0]), need):
        M = np.vstack([E, G[list(S)]])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.concatenate([e, h[list(S)]]))
        if np.all(G @ x >= h - 1e-9) and np.allclose(E @ x, e, atol=1e-9):
            val = float(lp.objective @ x)
            if best is None or (val > best if lp.sense == "max" else val < best):
                best = val
    return best


def random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    X = rng.normal(size=(n, n + 2))
    return X @ X.T / (n + 2)


def brute_force_cone(A, x):
    """Best nonnegative least-squares fit over every support subset."""
    best, best_par = np.inf, np.zeros_like(x)
    for k in range(A.shape[1] + 1):
        for S in itertools.combinations(range(A.shape[1]), k):
            if k == 0:
                par = np.zeros_like(x)
            else:
                coef, *_ = np.linalg.lstsq(A[:, S], x, rcond=None)
                if np.any(coef < -1e-12):
                    continue
                par = A[:, S] @ coef
            d = np.linalg.norm(x - par)
            if d < best - 1e-14:
                best, best_par = d, par
    return best_par
