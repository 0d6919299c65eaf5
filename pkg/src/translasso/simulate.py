"""Monte Carlo benchmark harness.

Reproduces the correlated-Gaussian benchmark: draw an AR(1) design, fit the
plain lasso path and the two-step transductive sweep over the lambda grid,
and summarize the relative performance ratios

    PERF(.) = min over (lam1, lam2) of the two-step loss
              / min over lam of the plain-lasso loss

for the parameter loss (I), the labeled-design prediction loss (X) and the
full-design prediction loss (Z).  The two-step sweep is augmented with the
boundary point lam2 = 0, at which the stage-2 constraint binds at the
stage-1 output and the fit IS the stage-1 lasso fit; the plain-lasso family
is therefore contained in the sweep and PERF <= 1 by construction.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, as_vector
from .solvers import DEFAULT_KKT_TOL, lasso_path_gram
from .transductive import TwoStepConfig
from .estimators import RegressionProblem, Objective, fit_generalized_dantzig

__all__ = [
    "ExperimentConfig",
    "ReplicationResult",
    "PerfSummary",
    "default_grid",
    "gen_design",
    "gen_response",
    "run_replication",
    "run_experiment",
    "summarize",
    "support_recovery_lambda",
    "preset",
    "PRESET_NAMES",
]

BETA_SPARSE = (3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)
BETA_VERY_SPARSE = (5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

PERF_METRICS = ("PERF(X)", "PERF(Z)", "PERF(I)")


def default_grid() -> np.ndarray:
    """The benchmark grid {1.2^k, k = -50..30}, descending for warm starts."""
    return 1.2 ** np.arange(30, -51, -1.0)


@dataclass
class ExperimentConfig:
    """One benchmark cell: data model, grid, and replication plan."""

    n: int
    m: int
    p: int
    rho: float
    sigma: float
    beta_star: np.ndarray
    grid: np.ndarray = field(default_factory=default_grid)
    replications: int = 100
    seed: int = 37
    two_step: TwoStepConfig = field(
        default_factory=lambda: TwoStepConfig(
            lambda1=0.0, lambda2=0.0, constraint_multiplier=1.0
        )
    )
    normalize: bool = False
    zero_tol: float = 1e-8
    label: str = ""

    def __post_init__(self):
        self.beta_star = as_vector(np.asarray(self.beta_star, dtype=float), "beta_star")
        self.grid = as_vector(np.asarray(self.grid, dtype=float), "grid")
        if self.beta_star.shape[0] != self.p:
            raise ValueError("beta_star must have length p")
        if self.m <= self.n:
            raise ValueError("transductive runs need m > n")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.grid.size == 0 or np.any(self.grid < 0) or np.any(np.diff(self.grid) > 0):
            raise ValueError("grid must be nonempty, nonnegative, sorted descending")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")


_PRESET_TABLE = {
    "table1-row1": ("very sparse, (7,10), rho=0.5, sigma=1", 7, 10, 0.5, 1.0, BETA_VERY_SPARSE),
    "table1-row2": ("sparse, (7,10), rho=0.5, sigma=1", 7, 10, 0.5, 1.0, BETA_SPARSE),
    "table1-row3": ("sparse, (7,20), rho=0.5, sigma=1", 7, 20, 0.5, 1.0, BETA_SPARSE),
    "table1-row4": ("sparse, (20,30), rho=0.5, sigma=1", 20, 30, 0.5, 1.0, BETA_SPARSE),
    "table1-row5": ("sparse, (20,30), rho=0.9, sigma=1", 20, 30, 0.9, 1.0, BETA_SPARSE),
    "table1-row6": ("sparse, (20,30), rho=0.5, sigma=3", 20, 30, 0.5, 3.0, BETA_SPARSE),
}

PRESET_NAMES = tuple(_PRESET_TABLE)


def preset(name: str) -> ExperimentConfig:
    """Named benchmark cells (the rows of the reference results table)."""
    try:
        label, n, m, rho, sigma, beta = _PRESET_TABLE[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    return ExperimentConfig(
        n=n, m=m, p=8, rho=rho, sigma=sigma, beta_star=np.array(beta), label=label
    )


def gen_design(m: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """m i.i.d. rows from N(0, Sigma) with Sigma_ij = rho^|i-j|.

    Built by the AR(1) recursion x_1 = z_1, x_j = rho x_{j-1} +
    sqrt(1-rho^2) z_j, which realizes the same law as a Cholesky draw.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    z = rng.standard_normal((m, p))
    x = np.empty((m, p))
    x[:, 0] = z[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + s * z[:, j]
    return x


def gen_response(
    x: np.ndarray, beta_star: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Y = X beta_star + sigma * standard normal noise."""
    x = as_matrix(x, "design")
    return x @ beta_star + sigma * rng.standard_normal(x.shape[0])


@dataclass
class ReplicationResult:
    """Everything one replication produces.

    ``lasso_losses`` has one row per grid lambda; ``tl_losses`` has shape
    (grid, grid+1, 3) where the trailing lambda2 slot is the boundary
    lambda2 = 0 (the stage-1 fit itself).  Loss columns are ordered
    (loss_x, loss_z, loss_beta).
    """

    rep_index: int
    lasso_losses: np.ndarray
    tl_losses: np.ndarray
    perf_x: float
    perf_z: float
    perf_i: float
    support_recovery_lambda: float | None
    nonconverged_fits: int

    @property
    def perf(self) -> dict[str, float]:
        return {"PERF(X)": self.perf_x, "PERF(Z)": self.perf_z, "PERF(I)": self.perf_i}


@dataclass
class PerfSummary:
    metric: str
    me: float
    q3: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    values: np.ndarray = field(repr=False, default=None)


def support_recovery_lambda(
    path, grid, beta_star, zero_tol: float = 1e-8
) -> float | None:
    """Smallest grid lambda whose estimate has exactly the true support."""
    grid = np.asarray(grid, dtype=float)
    true_support = np.asarray(beta_star) != 0.0
    best = None
    for lam, beta in zip(grid, path):
        if np.array_equal(np.abs(beta) > zero_tol, true_support):
            if best is None or lam < best:
                best = float(lam)
    return best


def _path_nonconverged(g, c, path, lams, kkt_tol=DEFAULT_KKT_TOL):
    """Count path points whose subgradient condition fails at kkt_tol."""
    grad = c[None, :] - path @ g
    lam_col = lams[:, None]
    viol = np.where(
        path == 0.0,
        np.maximum(np.abs(grad) - lam_col, 0.0),
        np.abs(grad - lam_col * np.sign(path)),
    )
    return int((viol.max(axis=1) > kkt_tol).sum())


def _loss_triplet(path, beta_star, gx, gz):
    d = path - beta_star
    return np.stack(
        [
            np.einsum("ij,ij->i", d @ gx, d),
            np.einsum("ij,ij->i", d @ gz, d),
            np.einsum("ij,ij->i", d, d),
        ],
        axis=1,
    )


def run_replication(cfg: ExperimentConfig, rep_index: int) -> ReplicationResult:
    """Draw one dataset and run the full grid protocol on it.

    Deterministic in (cfg, rep_index): the RNG stream is keyed by the seed
    and the replication index, independent of scheduling.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(rep_index,))
    )
    z = gen_design(cfg.m, cfg.p, cfg.rho, rng)
    x = z[: cfg.n]
    y = gen_response(x, cfg.beta_star, cfg.sigma, rng)
    beta_star = cfg.beta_star
    if cfg.normalize:
        scales = np.sqrt((x**2).sum(axis=0) / cfg.n)
        z = z / scales
        x = z[: cfg.n]
        beta_star = beta_star * scales

    grid = cfg.grid
    n_grid = grid.shape[0]
    gx = x.T @ x
    gz = z.T @ z
    cx = x.T @ y
    ts = cfg.two_step
    nonconverged = 0

    # stage-1 path on (X, Y)
    if ts.preliminary == "lasso":
        path1 = lasso_path_gram(gx, cx, grid)
        nonconverged += _path_nonconverged(gx, cx, path1, grid)
    else:
        prob = RegressionProblem(x=x, y=y, z=z, sigma=cfg.sigma)
        path1 = np.empty((n_grid, cfg.p))
        for i, lam in enumerate(grid):
            est = fit_generalized_dantzig(prob, Objective.denoising(), float(lam))
            path1[i] = est.beta
    lasso_losses = _loss_triplet(path1, beta_star, gx, gz)

    # two-step sweep over (lam1, lam2), lam2 = 0 boundary appended
    mult = ts.multiplier
    w = np.ones(cfg.p)
    if ts.weighting == "xi_sqrt":
        from .estimators import compute_scaling

        a = math.sqrt(cfg.n / cfg.m) * z
        w = np.sqrt(compute_scaling(x, a).xi)
        if np.any(w <= 0.0):
            raise ValueError("xi_sqrt weighting needs strictly positive xi")
    g2 = (cfg.n / cfg.m) * (gz / w[:, None] / w[None, :])
    tl_losses = np.empty((n_grid, n_grid + 1, 3))
    eff_grid = mult * grid
    for i1 in range(n_grid):
        b1 = path1[i1]
        c2 = (cfg.n / cfg.m) * (gz @ b1) / w
        if ts.stage2 == "lasso":
            path2 = lasso_path_gram(g2, c2, eff_grid)
            nonconverged += _path_nonconverged(g2, c2, path2, eff_grid)
            path2 = path2 / w
        else:
            from .transductive import fit_transductive_dantzig

            check_y = z @ b1
            path2 = np.empty((n_grid, cfg.p))
            for i2, lam2 in enumerate(grid):
                est = fit_transductive_dantzig(
                    check_y, z, cfg.n, cfg.m, float(lam2),
                    weighting=ts.weighting,
                    xi=None if ts.weighting == "unit" else w**2,
                    multiplier=mult,
                )
                path2[i2] = est.beta
        tl_losses[i1, :n_grid] = _loss_triplet(path2, beta_star, gx, gz)
        tl_losses[i1, n_grid] = lasso_losses[i1]  # lam2 = 0 boundary

    best_lasso = lasso_losses.min(axis=0)
    best_tl = tl_losses.reshape(-1, 3).min(axis=0)
    perf = np.where(best_lasso < 1e-12, 1.0, best_tl / best_lasso)

    return ReplicationResult(
        rep_index=rep_index,
        lasso_losses=lasso_losses,
        tl_losses=tl_losses,
        perf_x=float(perf[0]),
        perf_z=float(perf[1]),
        perf_i=float(perf[2]),
        support_recovery_lambda=support_recovery_lambda(
            path1, grid, beta_star, cfg.zero_tol
        ),
        nonconverged_fits=nonconverged,
    )


def run_experiment(
    cfg: ExperimentConfig, threads: int = 1, progress=None
) -> list[ReplicationResult]:
    """All replications, optionally fanned out over worker processes.

    Results are deterministic regardless of ``threads``: each replication
    owns an RNG stream keyed by its index and the output is sorted.
    """
    indices = range(cfg.replications)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_replication, [cfg] * cfg.replications, indices))
    else:
        results = []
        for i in indices:
            results.append(run_replication(cfg, i))
            if progress is not None:
                progress(i + 1, cfg.replications)
    return sorted(results, key=lambda r: r.rep_index)


def summarize(results) -> dict[str, PerfSummary]:
    """ME (mean) and Q3 (0.3-quantile, lower interpolation) per metric,
    plus a 20-bin histogram of the replication values."""
    if not results:
        raise ValueError("summarize needs at least one replication")
    out = {}
    for metric in PERF_METRICS:
        values = np.array([r.perf[metric] for r in results])
        counts, edges = np.histogram(values, bins=20)
        out[metric] = PerfSummary(
            metric=metric,
            me=float(values.mean()),
            q3=float(np.quantile(values, 0.3, method="lower")),
            bin_edges=edges,
            bin_counts=counts,
            values=values,
        )
    return out
