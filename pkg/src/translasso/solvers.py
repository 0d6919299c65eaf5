"""Canonical optimizers behind every estimator in the package.

Two workhorses live here:

* pathwise cyclic coordinate descent for the penalized least-squares
  objective ``||y - B g||_2^2 + 2*lam*||g||_1`` (note the factor 2 on the
  penalty; all lambda values in this package follow that convention), and
* a dense two-phase tableau simplex with Bland's anti-cycling rule for the
  linear programs of the Dantzig-type estimators.

Both are deterministic: coordinates are visited in fixed cyclic order and
simplex pivots follow Bland's rule, so repeated solves are bitwise equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .linalg import as_matrix, as_vector

__all__ = [
    "CdOptions",
    "SolveDiagnostics",
    "LpProblem",
    "InfeasibleError",
    "UnboundedError",
    "soft_threshold",
    "coordinate_descent_lasso",
    "lasso_path",
    "lasso_kkt_residual",
    "simplex_lp",
]

DEFAULT_KKT_TOL = 1e-7


@dataclass
class CdOptions:
    """Coordinate-descent controls.

    ``tol`` bounds the largest coordinate update in a sweep (the sweep-loop
    stopping rule); ``kkt_tol`` is the subgradient tolerance that defines
    convergence of the returned iterate.  ``track_objective`` switches to a
    slower pure-python sweep loop that records the objective value after
    every sweep (used by tests asserting monotone descent).
    """

    tol: float = 1e-9
    max_sweeps: int = 100_000
    warm_start: np.ndarray | None = None
    kkt_tol: float = DEFAULT_KKT_TOL
    track_objective: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


@dataclass
class SolveDiagnostics:
    sweeps_or_pivots: int
    final_kkt_residual: float
    converged: bool
    objective_history: np.ndarray | None = field(default=None, repr=False)


class InfeasibleError(RuntimeError):
    """The linear program has no feasible point."""


class UnboundedError(RuntimeError):
    """The linear program is unbounded below."""


def soft_threshold(z: float, t: float) -> float:
    """sgn(z) * max(|z| - t, 0); ties |z| == t map to exactly 0."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _cd_cycle(g, c, lam, gamma, tol, max_sweeps):  # pragma: no cover - compiled
    """Cyclic coordinate descent on the Gram form.

    Minimizes ``gamma' g gamma - 2 c' gamma + 2*lam*||gamma||_1`` in place;
    returns the number of sweeps used.  Columns with zero Gram diagonal are
    pinned at 0.
    """
    p = c.shape[0]
    for j in range(p):
        if g[j, j] <= 0.0:
            gamma[j] = 0.0
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            gjj = g[j, j]
            if gjj <= 0.0:
                continue
            old = gamma[j]
            z = old * gjj + c[j]
            for k in range(p):
                z -= g[j, k] * gamma[k]
            if z > lam:
                new = (z - lam) / gjj
            elif z < -lam:
                new = (z + lam) / gjj
            else:
                new = 0.0
            if new != old:
                gamma[j] = new
                d = abs(new - old)
                if d > delta:
                    delta = d
        if delta <= tol:
            return sweep + 1
    return max_sweeps


def _cd_cycle_tracked(g, c, lam, gamma, tol, max_sweeps, yty):
    """Pure-python mirror of :func:`_cd_cycle` that records the objective
    ``yty - 2 c'gamma + gamma' g gamma + 2*lam*||gamma||_1`` after each sweep."""
    p = c.shape[0]
    gamma[np.diag(g) <= 0.0] = 0.0
    history = []
    sweeps = 0
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            gjj = g[j, j]
            if gjj <= 0.0:
                continue
            old = gamma[j]
            z = old * gjj + c[j] - g[j] @ gamma
            new = soft_threshold(z, lam) / gjj
            if new != old:
                gamma[j] = new
                delta = max(delta, abs(new - old))
        sweeps += 1
        history.append(
            yty - 2.0 * (c @ gamma) + gamma @ g @ gamma + 2.0 * lam * np.abs(gamma).sum()
        )
        if delta <= tol:
            break
    return sweeps, np.asarray(history)


def _kkt_residual_gram(g, c, gamma, lam):
    """Largest subgradient violation of the penalized objective.

    For coordinates at zero the violation is ``max(0, |grad_j| - lam)``;
    for active coordinates it is ``|grad_j - lam*sgn(gamma_j)|`` where
    ``grad = c - g gamma`` is the negative half-gradient of the smooth part.
    """
    grad = c - g @ gamma
    at_zero = gamma == 0.0
    viol = np.where(
        at_zero,
        np.maximum(np.abs(grad) - lam, 0.0),
        np.abs(grad - lam * np.sign(gamma)),
    )
    return float(viol.max(initial=0.0))


def lasso_kkt_residual(b: np.ndarray, y: np.ndarray, gamma: np.ndarray, lam: float) -> float:
    """KKT residual of ``||y - B gamma||^2 + 2*lam*||gamma||_1`` at gamma."""
    b = as_matrix(b, "design")
    grad = b.T @ (y - b @ gamma)
    at_zero = gamma == 0.0
    viol = np.where(
        at_zero,
        np.maximum(np.abs(grad) - lam, 0.0),
        np.abs(grad - lam * np.sign(gamma)),
    )
    return float(viol.max(initial=0.0))


def coordinate_descent_lasso(
    b: np.ndarray,
    y: np.ndarray,
    lam: float,
    opts: CdOptions | None = None,
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Minimize ``||y - B gamma||_2^2 + 2*lam*||gamma||_1`` by cyclic updates.

    Returns the solution and diagnostics; ``converged`` reflects the final
    subgradient check, not the sweep-loop exit.  Non-convergence within
    ``max_sweeps`` returns the best iterate with ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    opts = opts or CdOptions()
    b = as_matrix(b, "design")
    y = as_vector(y, "response")
    if b.shape[0] != y.shape[0]:
        raise ValueError("design and response dimensions disagree")
    p = b.shape[1]
    g = b.T @ b
    g = (g + g.T) / 2.0
    c = b.T @ y
    if opts.warm_start is not None:
        gamma = np.array(opts.warm_start, dtype=float, copy=True)
        if gamma.shape != (p,):
            raise ValueError("warm_start has wrong length")
    else:
        gamma = np.zeros(p)
    history = None
    if opts.track_objective:
        sweeps, history = _cd_cycle_tracked(
            g, c, lam, gamma, opts.tol, opts.max_sweeps, float(y @ y)
        )
    else:
        sweeps = _cd_cycle(g, c, lam, gamma, opts.tol, opts.max_sweeps)
    kkt = _kkt_residual_gram(g, c, gamma, lam)
    diag = SolveDiagnostics(
        sweeps_or_pivots=int(sweeps),
        final_kkt_residual=kkt,
        converged=kkt <= opts.kkt_tol,
        objective_history=history,
    )
    return gamma, diag


def lasso_path(
    b: np.ndarray,
    y: np.ndarray,
    lams,
    opts: CdOptions | None = None,
) -> list[tuple[np.ndarray, SolveDiagnostics]]:
    """Solve the lasso on a descending lambda grid with chained warm starts."""
    opts = opts or CdOptions()
    lams = as_vector(lams, "lambda grid")
    if np.any(np.diff(lams) > 0):
        raise ValueError("lambda grid must be sorted descending")
    results = []
    warm = opts.warm_start
    for lam in lams:
        step = CdOptions(
            tol=opts.tol,
            max_sweeps=opts.max_sweeps,
            warm_start=warm,
            kkt_tol=opts.kkt_tol,
            track_objective=opts.track_objective,
        )
        gamma, diag = coordinate_descent_lasso(b, y, float(lam), step)
        results.append((gamma, diag))
        warm = gamma
    return results


def lasso_path_gram(g, c, lams, tol=1e-9, max_sweeps=100_000, warm_start=None):
    """Hot-loop path solver on precomputed Gram pieces.

    Returns an ``(len(lams), p)`` array of solutions; used by the simulation
    harness where per-point diagnostics objects would dominate the runtime.
    """
    p = c.shape[0]
    out = np.empty((len(lams), p))
    gamma = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    for i, lam in enumerate(lams):
        _cd_cycle(g, c, float(lam), gamma, tol, max_sweeps)
        out[i] = gamma
    return out


@dataclass
class LpProblem:
    """min c'x subject to G x <= h, x in R^n free."""

    c: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.c = as_vector(self.c, "objective")
        self.g = as_matrix(self.g, "constraint matrix")
        self.h = as_vector(self.h, "constraint bounds")
        if self.g.shape != (self.h.shape[0], self.c.shape[0]):
            raise ValueError(
                f"inconsistent LP dimensions: G {self.g.shape}, "
                f"c {self.c.shape}, h {self.h.shape}"
            )

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


def _bland_pivot(tableau, basis, n_cols, tol):
    """One simplex iteration under Bland's rule.

    Returns True when an improving pivot was made, False at optimality;
    raises UnboundedError when an improving column has no blocking row.
    """
    cost = tableau[-1, :n_cols]
    enter = -1
    for j in range(n_cols):
        if cost[j] < -tol:
            enter = j
            break
    if enter < 0:
        return False
    col = tableau[:-1, enter]
    rhs = tableau[:-1, -1]
    leave = -1
    best = np.inf
    for i in range(col.shape[0]):
        if col[i] > tol:
            ratio = rhs[i] / col[i]
            if ratio < best - tol or (
                ratio < best + tol and (leave < 0 or basis[i] < basis[leave])
            ):
                best = ratio
                leave = i
    if leave < 0:
        raise UnboundedError("improving direction with no blocking constraint")
    piv = tableau[leave, enter]
    tableau[leave] /= piv
    for i in range(tableau.shape[0]):
        if i != leave and tableau[i, enter] != 0.0:
            tableau[i] -= tableau[i, enter] * tableau[leave]
    basis[leave] = enter
    return True


def simplex_lp(
    lp: LpProblem, tol: float = 1e-9, max_pivots: int = 200_000
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Dense two-phase tableau simplex with Bland's anti-cycling rule.

    Free variables are split internally as x = x+ - x-.  Raises
    :class:`InfeasibleError` / :class:`UnboundedError`; otherwise returns an
    optimal vertex solution with feasibility residual in the diagnostics.
    ``max_pivots`` is a defensive bound on top of Bland's rule.
    """
    n = lp.n_vars
    m = lp.g.shape[0]
    # columns: [x+ (n), x- (n), slacks (m), artificials (k)]
    gg = np.hstack([lp.g, -lp.g])
    h = lp.h.copy()
    flip = h < 0
    gg[flip] *= -1.0
    h[flip] *= -1.0
    slack = np.eye(m)
    slack[flip, flip] = -1.0
    art_rows = np.flatnonzero(flip)
    n_art = art_rows.shape[0]
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0
    body = np.hstack([gg, slack, art])
    n_cols = body.shape[1]
    slack_off = 2 * n
    art_off = slack_off + m

    tableau = np.zeros((m + 1, n_cols + 1))
    tableau[:-1, :n_cols] = body
    tableau[:-1, -1] = h
    basis = slack_off + np.arange(m)
    basis[art_rows] = art_off + np.arange(n_art)

    pivots = 0
    if n_art:
        # phase 1: drive sum of artificials to zero
        tableau[-1, :] = -tableau[art_rows, :].sum(axis=0)
        tableau[-1, art_off:n_cols] = 0.0
        while _bland_pivot(tableau, basis, n_cols, tol):
            pivots += 1
            if pivots > max_pivots:
                raise RuntimeError("simplex pivot limit exceeded in phase 1")
        if tableau[-1, -1] < -1e-8:
            raise InfeasibleError(
                f"phase-1 optimum {-tableau[-1, -1]:.3e} > 0: no feasible point"
            )
        # pivot any artificial still in the basis out (or leave it at zero
        # level on a redundant row; its column is excluded from phase 2)
        for i in range(m):
            if basis[i] >= art_off:
                for j in range(art_off):
                    if abs(tableau[i, j]) > tol:
                        piv = tableau[i, j]
                        tableau[i] /= piv
                        for r in range(m + 1):
                            if r != i and tableau[r, j] != 0.0:
                                tableau[r] -= tableau[r, j] * tableau[i]
                        basis[i] = j
                        pivots += 1
                        break
        tableau[:, art_off:n_cols] = 0.0

    # phase 2: original objective, reduced against the current basis
    cost = np.zeros(n_cols + 1)
    cost[:n] = lp.c
    cost[n : 2 * n] = -lp.c
    tableau[-1, :] = cost
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            tableau[-1] -= cb * tableau[i]
    while _bland_pivot(tableau, basis, art_off, tol):
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit exceeded in phase 2")

    x_split = np.zeros(n_cols)
    for i in range(m):
        x_split[basis[i]] = tableau[i, -1]
    x = x_split[:n] - x_split[n : 2 * n]
    feas = float(np.max(lp.g @ x - lp.h, initial=0.0))
    diag = SolveDiagnostics(
        sweeps_or_pivots=pivots, final_kkt_residual=max(feas, 0.0), converged=True
    )
    return x, diag
