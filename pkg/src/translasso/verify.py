"""Monte Carlo verification of the probabilistic guarantees at desk scale.

Each checker turns one "with probability at least 1-eta" statement into an
empirical coverage experiment: draw fresh noise (or a fresh permutation),
evaluate the displayed inequalities exactly as stated, and count the joint
success frequency.  Restricted constants c(M) are approximated by cone
sampling plus projected-gradient refinement; the approximation can only
overestimate the true constant, which *shrinks* the theorem right-hand
sides, so every coverage test here is conservative-strict: a pass is strong
evidence, a marginal failure may just reflect the c(M) bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .estimators import (
    Objective,
    RegressionProblem,
    compute_scaling,
    fit_generalized_dantzig,
    fit_generalized_lasso,
)
from .linalg import as_matrix
from .transductive import (
    check_design_proximity,
    fit_transductive_dantzig,
    fit_transductive_lasso,
    preliminary_labels,
)

__all__ = [
    "ConeSpec",
    "RestrictedConstantReport",
    "CoverageReport",
    "restricted_constant",
    "lemma1_coverage",
    "theorem_coverage",
    "prop4_sampling",
    "prop4_exact_probability",
    "Prop4Result",
    "thm3_scenario",
]


@dataclass(frozen=True)
class ConeSpec:
    """The cone of the restricted-constant assumption.

    Vectors alpha whose off-support weighted l1 mass is at most ``x`` times
    the on-support mass: sum_{j not in S} w_j|a_j| <= x sum_{j in S} w_j|a_j|.
    Weights are all-ones (the H' form) or xi_j^e with e in {1/2, 1} (the
    statement and proof variants of the H form).
    """

    support: tuple[int, ...]
    x: float
    weights: np.ndarray

    def __post_init__(self):
        if len(self.support) == 0:
            raise ValueError("support must be nonempty")
        if self.x <= 0:
            raise ValueError("cone aperture x must be positive")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be nonnegative and finite")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_beta_star(cls, beta_star, x: float, weights=None) -> "ConeSpec":
        beta_star = np.asarray(beta_star, dtype=float)
        support = tuple(int(j) for j in np.flatnonzero(beta_star != 0.0))
        if weights is None:
            weights = np.ones(beta_star.shape[0])
        return cls(support=support, x=x, weights=weights)


@dataclass
class RestrictedConstantReport:
    c_estimate: float
    argmin_direction: np.ndarray
    samples_used: int
    refined: bool


@dataclass
class CoverageReport:
    """Monte Carlo verdict on one probabilistic claim."""

    trials: int
    successes: int
    nominal: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")

    @property
    def empirical(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def margin(self) -> float:
        """Three binomial standard deviations at the nominal rate."""
        if self.trials == 0:
            return float("nan")
        return 3.0 * math.sqrt(self.nominal * (1.0 - self.nominal) / self.trials)

    @property
    def passed(self) -> bool:
        return self.empirical >= self.nominal - self.margin


@dataclass
class Prop4Result:
    proof_level: CoverageReport
    statement_level: CoverageReport
    bound: float
    statement_bound: float


def _cone_project(alpha, support_mask, weights, x):
    """Shrink the off-support block onto the cone when outside; then scale
    the whole vector to unit on-support l2 mass.  Both maps preserve cone
    membership and the quotient's invariance structure."""
    a = alpha.copy()
    on = np.abs(a[support_mask]) @ weights[support_mask]
    off = np.abs(a[~support_mask]) @ weights[~support_mask]
    if on <= 0.0:
        a[~support_mask] = 0.0
    elif off > x * on:
        a[~support_mask] *= x * on / off
    s = np.sqrt((a[support_mask] ** 2).sum())
    if s > 0.0:
        a /= s
    return a


def _quotient(m_mat, alpha, support_mask, n):
    s = (alpha[support_mask] ** 2).sum()
    if s <= 0.0:
        return np.inf
    return (alpha @ m_mat @ alpha) / (n * s)


def restricted_constant(
    m_mat: np.ndarray,
    cone: ConeSpec,
    n: int,
    budget: int = 2000,
    seed: int = 0,
    refine_iters: int = 200,
    refine_starts: int = 10,
) -> RestrictedConstantReport:
    """Estimate c(M) = inf over the cone of a'Ma / (n * sum_{j in S} a_j^2).

    Random cone samples followed by projected-gradient refinement from the
    best starts.  The returned value is the smallest quotient found, an
    UPPER bound on the true constant.  For each raw Gaussian draw the
    off-support block is rescaled to a ladder of mass ratios capped at the
    aperture, which makes the candidate sets nested across apertures (so
    the estimate is monotone in x under a shared seed).
    """
    m_mat = as_matrix(m_mat, "M")
    p = m_mat.shape[0]
    if m_mat.shape[1] != p:
        raise ValueError("M must be square")
    support_mask = np.zeros(p, dtype=bool)
    support_mask[list(cone.support)] = True
    w = cone.weights
    rng = np.random.default_rng(seed)

    ratio_ladder = np.unique(
        np.concatenate([np.arange(0.0, math.floor(cone.x) + 1.0), [cone.x]])
    )
    best_q = np.inf
    best_alpha = None
    candidates = []
    for _ in range(budget):
        g = rng.standard_normal(p)
        on = np.abs(g[support_mask]) @ w[support_mask]
        off = np.abs(g[~support_mask]) @ w[~support_mask]
        raw_ratio = np.inf if on <= 0 else off / on
        for r in ratio_ladder:
            a = g.copy()
            target = min(raw_ratio, r)
            if off > 0.0 and np.isfinite(target):
                a[~support_mask] *= 0.0 if target == 0.0 else target * on / off
            elif not np.isfinite(target):
                a[~support_mask] = 0.0
            a = _cone_project(a, support_mask, w, cone.x)
            q = _quotient(m_mat, a, support_mask, n)
            if q < best_q:
                best_q = q
                best_alpha = a
            candidates.append((q, a))

    candidates.sort(key=lambda t: t[0])
    for q0, a0 in candidates[:refine_starts]:
        a = a0.copy()
        q = q0
        for _ in range(refine_iters):
            grad = 2.0 * (m_mat @ a) / n - 2.0 * q * np.where(support_mask, a, 0.0)
            norm = np.sqrt(grad @ grad)
            if norm <= 1e-14:
                break
            direction = grad / norm
            step = 0.5
            improved = False
            while step > 1e-8:
                trial = _cone_project(a - step * direction, support_mask, w, cone.x)
                q_trial = _quotient(m_mat, trial, support_mask, n)
                if q_trial < q:
                    a, q = trial, q_trial
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        if q < best_q:
            best_q = q
            best_alpha = a

    return RestrictedConstantReport(
        c_estimate=float(best_q),
        argmin_direction=best_alpha,
        samples_used=budget,
        refined=True,
    )


def lemma1_coverage(
    x: np.ndarray,
    a: np.ndarray,
    sigma: float,
    eta: float,
    trials: int,
    seed: int = 0,
) -> CoverageReport:
    """Coverage of the noise-correlation bound
    ``|[A'A (X'X)^+ X' eps]_j| <= xi_j(A) sigma sqrt(2 n log(p/eta))``
    holding simultaneously over all coordinates."""
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    x = as_matrix(x, "X")
    n, p = x.shape
    scaling = compute_scaling(x, a)
    t_mat = scaling.gram_a @ scaling.pinv_gram_x @ x.T
    rhs = scaling.xi * sigma * math.sqrt(2.0 * n * math.log(p / eta))
    rng = np.random.default_rng(seed)
    eps = sigma * rng.standard_normal((trials, n))
    w = eps @ t_mat.T
    successes = int(np.all(np.abs(w) <= rhs, axis=1).sum())
    return CoverageReport(trials=trials, successes=successes, nominal=1.0 - eta)


def _theorem_lambda(sigma: float, n: int, p: int, eta: float) -> float:
    return 2.0 * sigma * math.sqrt(2.0 * n * math.log(p / eta))


def theorem_coverage(
    which: str,
    scenario,
    trials: int,
    seed: int = 0,
    eta: float = 0.05,
    c_budget: int = 2000,
) -> dict[str, CoverageReport]:
    """Joint and per-bound coverage of one theorem's displayed inequalities.

    ``scenario`` is an ExperimentConfig-like object carrying (n, m, p, rho,
    sigma, beta_star, seed); the design is drawn once (the statements are
    conditional on the design) and fresh noise is drawn per trial.  Returns
    one CoverageReport per displayed bound plus the joint event under the
    key ``"joint"``.
    """
    from .simulate import gen_design  # local import to avoid a cycle

    which = which.lower()
    if which not in ("thm1", "thm2", "thm3"):
        raise ValueError(f"unknown theorem {which!r}")
    n, p = scenario.n, scenario.p
    sigma = scenario.sigma
    beta_star = np.asarray(scenario.beta_star, dtype=float)
    support = np.flatnonzero(beta_star != 0.0)
    if support.size == 0:
        raise ValueError("theorem coverage needs a nonempty support")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))

    if which in ("thm1", "thm2"):
        x = gen_design(n, p, scenario.rho, rng)
        x /= np.sqrt((x**2).sum(axis=0) / n)  # theory premise: unit column scale
        scaling = compute_scaling(x, x)
        cone = ConeSpec.from_beta_star(
            beta_star, x=3.0 if which == "thm1" else 1.0, weights=scaling.xi_sqrt
        )
        c_rep = restricted_constant(x.T @ x, cone, n, budget=c_budget, seed=seed)
        c = c_rep.c_estimate
        lam = _theorem_lambda(sigma, n, p, eta)
        log_term = math.log(p / eta)
        xi_s = scaling.xi[support].sum()
        rhs1 = 72.0 * sigma**2 / c * log_term * xi_s
        const2 = 24.0 * math.sqrt(2.0) if which == "thm1" else 12.0 * math.sqrt(2.0)
        rhs2 = const2 * sigma / c * math.sqrt(log_term / n) * xi_s
        succ = np.zeros(3, dtype=int)  # bound1, bound2, joint
        for t in range(trials):
            rng_t = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(t + 1,))
            )
            y = x @ beta_star + sigma * rng_t.standard_normal(n)
            prob = RegressionProblem(x=x, y=y, sigma=sigma, normalized=True)
            if which == "thm1":
                est = fit_generalized_lasso(prob, Objective.denoising(), lam)
            else:
                est = fit_generalized_dantzig(prob, Objective.denoising(), lam)
            delta = est.beta - beta_star
            lhs1 = float(((x @ delta) ** 2).sum())
            lhs2 = float(np.abs(delta) @ scaling.xi_sqrt)
            ok1, ok2 = lhs1 <= rhs1, lhs2 <= rhs2
            succ += (ok1, ok2, ok1 and ok2)
        nominal = 1.0 - eta
        return {
            "prediction": CoverageReport(trials, int(succ[0]), nominal),
            "weighted_l1": CoverageReport(trials, int(succ[1]), nominal),
            "joint": CoverageReport(trials, int(succ[2]), nominal),
        }

    # thm3: two-step procedure on an engineered-proximity scenario
    x, z = thm3_scenario(scenario, rng)
    m = z.shape[0]
    lam12 = 0.1 * sigma * math.sqrt(2.0 * n * math.log(p / eta))
    prox = check_design_proximity(
        x, z, n, m, radius=float(np.abs(beta_star).sum()), sigma=sigma, eta=eta
    )
    if not prox.satisfied:
        raise ValueError(
            f"design-proximity precondition fails: sup {prox.sup_value:.3e} "
            f">= threshold {prox.threshold:.3e}"
        )
    m_mat = (n / m) * (z.T @ z)
    cone1 = ConeSpec.from_beta_star(beta_star, x=1.0)
    cone5 = ConeSpec.from_beta_star(beta_star, x=5.0)
    c1 = restricted_constant(m_mat, cone1, n, budget=c_budget, seed=seed).c_estimate
    c5 = restricted_constant(m_mat, cone5, n, budget=c_budget, seed=seed).c_estimate
    log_term = math.log(p / eta)
    s0 = support.size
    rhs = np.array(
        [
            16.0 * sigma**2 / (n * c1) * log_term * s0,
            8.0 * sigma / c1 * math.sqrt(log_term / n) * s0,
            88.0 * sigma**2 / (n * c5) * log_term * s0,
            54.0 * sigma / c5 * math.sqrt(log_term / n) * s0,
        ]
    )
    succ = np.zeros(5, dtype=int)
    for t in range(trials):
        rng_t = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(t + 1,))
        )
        y = x @ beta_star + sigma * rng_t.standard_normal(n)
        prob = RegressionProblem(x=x, y=y, z=z, sigma=sigma)
        check_y, _ = preliminary_labels(prob, lam12, method="dantzig")
        td = fit_transductive_dantzig(check_y, z, n, m, lam12, multiplier=1.0)
        tl = fit_transductive_lasso(check_y, z, n, m, lam12, multiplier=20.0)
        d_td = td.beta - beta_star
        d_tl = tl.beta - beta_star
        lhs = np.array(
            [
                ((z @ d_td) ** 2).sum() / m,
                np.abs(d_td).sum(),
                ((z @ d_tl) ** 2).sum() / m,
                np.abs(d_tl).sum(),
            ]
        )
        ok = lhs <= rhs
        succ[:4] += ok
        succ[4] += bool(ok.all())
    nominal = 1.0 - eta
    return {
        "dantzig_prediction": CoverageReport(trials, int(succ[0]), nominal),
        "dantzig_l1": CoverageReport(trials, int(succ[1]), nominal),
        "lasso_prediction": CoverageReport(trials, int(succ[2]), nominal),
        "lasso_l1": CoverageReport(trials, int(succ[3]), nominal),
        "joint": CoverageReport(trials, int(succ[4]), nominal),
    }


def thm3_scenario(scenario, rng) -> tuple[np.ndarray, np.ndarray]:
    """Design pair (X, Z) with the proximity condition built in: Z stacks X
    on a lightly perturbed replica, so X'X - (n/m) Z'Z is small by
    construction while Z shares its first n rows with X."""
    from .simulate import gen_design

    n, p = scenario.n, scenario.p
    x = gen_design(n, p, scenario.rho, rng)
    x /= np.sqrt((x**2).sum(axis=0) / n)
    wobble = 1e-3 * rng.standard_normal((n, p))
    z = np.vstack([x, x + wobble])
    return x, z


def prop4_sampling(
    chi: np.ndarray,
    k: int,
    eta: float,
    trials: int,
    seed: int = 0,
    kappa: float | None = None,
) -> Prop4Result:
    """Permutation-sampling check of the Gram-deviation bound.

    Per trial, n = m/k rows of the population are drawn uniformly without
    replacement into X; success means the proof-level per-pair bound
    ``|X_i'X_j/n - Z_i'Z_j/m| <= (2 kappa k/(k-1)) sqrt(2 log(p/eta)/n)``
    holds over all column pairs.  The statement-level bound (which drops a
    sqrt(n) against its own proof) is tracked separately and not asserted.
    """
    chi = as_matrix(chi, "population")
    m, p = chi.shape
    if k < 2 or m % k != 0:
        raise ValueError("population size must be k*n for integer k >= 2")
    if p < 2:
        raise ValueError("the bound requires p >= 2")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")
    n = m // k
    if kappa is None:
        kappa = float((chi**2).max())
    bound = (2.0 * kappa * k / (k - 1)) * math.sqrt(2.0 * math.log(p / eta) / n)
    statement_bound = (2.0 * kappa * k / (k - 1)) * math.sqrt(2.0 * math.log(p / eta))
    pop_gram = chi.T @ chi / m
    rng = np.random.default_rng(seed)
    proof_succ = 0
    stmt_succ = 0
    for _ in range(trials):
        rows = rng.permutation(m)[:n]
        xs = chi[rows]
        dev = float(np.abs(xs.T @ xs / n - pop_gram).max())
        proof_succ += dev <= bound
        stmt_succ += n * dev <= statement_bound
    nominal = 1.0 - eta
    return Prop4Result(
        proof_level=CoverageReport(trials, proof_succ, nominal),
        statement_level=CoverageReport(trials, stmt_succ, nominal),
        bound=bound,
        statement_bound=statement_bound,
    )


def prop4_exact_probability(
    chi: np.ndarray, k: int, eta: float, kappa: float | None = None
) -> float:
    """Exact success probability of the proof-level bound by enumerating all
    n-subsets of the population (X'X does not depend on row order)."""
    chi = as_matrix(chi, "population")
    m, p = chi.shape
    n = m // k
    if kappa is None:
        kappa = float((chi**2).max())
    bound = (2.0 * kappa * k / (k - 1)) * math.sqrt(2.0 * math.log(p / eta) / n)
    pop_gram = chi.T @ chi / m
    hits = 0
    total = 0
    for rows in combinations(range(m), n):
        xs = chi[list(rows)]
        dev = float(np.abs(xs.T @ xs / n - pop_gram).max())
        hits += dev <= bound
        total += 1
    return hits / total
