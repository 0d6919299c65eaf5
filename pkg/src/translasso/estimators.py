"""Target-matrix family of sparse estimators.

An estimator in this family is tuned to a linear functional of the
coefficient vector through a q x p target matrix A:

* ``A = X``                -- denoising, reduces to the plain lasso / Dantzig
* ``A = sqrt(n/m) Z``      -- transductive prediction on the unlabeled design
* ``A = sqrt(n) I``        -- coefficient estimation (soft-thresholded LSE)
* custom A                 -- anything else the caller cares about

The per-coordinate scale ``xi_j = (1/n) [G (X'X)^+ G]_jj`` with ``G = A'A``
weights the l1 penalty through the diagonal matrix ``Xi = diag(sqrt(xi_j))``.
The penalized fit minimizes ``||ytilde_A - A b||^2 + 2*lam*||Xi b||_1`` with
``ytilde_A = A (X'X)^+ X'Y``; the constrained fit minimizes ``||b||_1``
subject to ``||Xi^-1 A'A(v - b)||_inf <= lam`` with ``v = (X'X)^+ X'Y``.
Both reduce to standard solvers through the change of variables
``B = A Xi^-1``, ``b = Xi^-1 g``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, as_vector, gram, pseudo_inverse
from .solvers import (
    CdOptions,
    LpProblem,
    SolveDiagnostics,
    coordinate_descent_lasso,
    simplex_lp,
    soft_threshold,
)

__all__ = [
    "RegressionProblem",
    "Objective",
    "ScalingInfo",
    "Estimate",
    "KernelMismatchWarning",
    "target_matrix",
    "compute_scaling",
    "surrogate_response",
    "fit_generalized_lasso",
    "fit_generalized_dantzig",
    "soft_threshold_lse",
    "dantzig_feasibility_residual",
]


class KernelMismatchWarning(UserWarning):
    """Numerical ranks suggest Ker(A) != Ker(X); theory may not apply."""


@dataclass
class RegressionProblem:
    """Labeled design X (n x p), response Y, optional unlabeled design Z.

    When Z is present it holds all m design points, the first n of which
    are the labeled rows of X.  ``sigma`` is the known noise standard
    deviation; ``normalized`` asserts that X'X has unit scaled diagonal
    (``X_j'X_j / n == 1``).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    sigma: float = 0.0
    normalized: bool = False

    def __post_init__(self):
        self.x = as_matrix(self.x, "X")
        self.y = as_vector(self.y, "Y")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("X and Y have different numbers of rows")
        if self.z is not None:
            self.z = as_matrix(self.z, "Z")
            if self.z.shape[1] != self.x.shape[1]:
                raise ValueError("Z must have the same number of columns as X")
            if self.z.shape[0] <= self.x.shape[0]:
                raise ValueError("Z must contain more rows than X")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.normalized:
            col = (self.x**2).sum(axis=0) / self.n
            if np.max(np.abs(col - 1.0)) > 1e-8:
                raise ValueError("normalized flag set but X columns are not scaled")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        if self.z is None:
            raise ValueError("problem has no unlabeled design")
        return self.z.shape[0]

    def normalize(self) -> tuple["RegressionProblem", np.ndarray]:
        """Rescale columns so X_j'X_j/n = 1; Z gets the same column scales.

        Returns the rescaled problem and the scale vector s; an estimate
        ``b`` in the rescaled coordinates maps back as ``b / s``.
        """
        s = np.sqrt((self.x**2).sum(axis=0) / self.n)
        if np.any(s == 0.0):
            raise ValueError("cannot normalize a design with an all-zero column")
        prob = RegressionProblem(
            x=self.x / s,
            y=self.y,
            z=None if self.z is None else self.z / s,
            sigma=self.sigma,
            normalized=True,
        )
        return prob, s


@dataclass(frozen=True)
class Objective:
    """Which estimand the fit targets; fixes the target matrix A."""

    variant: str  # denoising | transductive | estimation | custom
    a_matrix: np.ndarray | None = None

    _VARIANTS = ("denoising", "transductive", "estimation", "custom")

    def __post_init__(self):
        if self.variant not in self._VARIANTS:
            raise ValueError(f"unknown objective {self.variant!r}")
        if (self.variant == "custom") != (self.a_matrix is not None):
            raise ValueError("custom objective requires a_matrix (and only it)")

    @classmethod
    def denoising(cls) -> "Objective":
        return cls("denoising")

    @classmethod
    def transductive(cls) -> "Objective":
        return cls("transductive")

    @classmethod
    def estimation(cls) -> "Objective":
        return cls("estimation")

    @classmethod
    def custom(cls, a_matrix) -> "Objective":
        return cls("custom", as_matrix(a_matrix, "A"))


@dataclass
class ScalingInfo:
    """Per-coordinate penalty scales xi_j(A) and the matrices behind them."""

    xi: np.ndarray
    gram_a: np.ndarray
    pinv_gram_x: np.ndarray
    n: int

    @property
    def xi_sqrt(self) -> np.ndarray:
        return np.sqrt(self.xi)

    @property
    def active(self) -> np.ndarray:
        """Coordinates with xi_j > 0; the rest are pinned at zero."""
        return self.xi > 0.0


@dataclass
class Estimate:
    beta: np.ndarray
    lam: float
    objective: Objective
    method: str
    diagnostics: SolveDiagnostics
    kkt_infinity_norm: float
    lam1: float | None = None
    scaling: ScalingInfo | None = field(default=None, repr=False)


def target_matrix(problem: RegressionProblem, objective: Objective) -> np.ndarray:
    """The matrix A for the requested objective."""
    if objective.variant == "denoising":
        return problem.x
    if objective.variant == "transductive":
        if problem.z is None:
            raise ValueError("transductive objective requires an unlabeled design Z")
        return np.sqrt(problem.n / problem.m) * problem.z
    if objective.variant == "estimation":
        if not _gram_invertible(gram(problem.x)):
            raise ValueError("estimation objective requires an invertible X'X")
        return np.sqrt(problem.n) * np.eye(problem.p)
    a = objective.a_matrix
    if a.shape[1] != problem.p:
        raise ValueError("custom A must have p columns")
    return a


def _gram_invertible(g: np.ndarray, rtol: float | None = None) -> bool:
    d = g.shape[0]
    if rtol is None:
        rtol = 1e-10 * d
    w = np.linalg.eigvalsh((g + g.T) / 2.0)
    return bool(w.min() > rtol * max(w.max(), 0.0)) and w.max() > 0.0


def _default_rtol(n: int, p: int) -> float:
    return 1e-10 * max(n, p)


def compute_scaling(x: np.ndarray, a: np.ndarray, rtol: float | None = None) -> ScalingInfo:
    """xi_j(A) = (1/n) [(A'A) (X'X)^+ (A'A)]_jj, clamped at zero.

    xi depends on A only through its Gram matrix, which resolves the
    ambiguity between writing the scale in terms of A or of A'A.
    """
    x = as_matrix(x, "X")
    n = x.shape[0]
    ga = gram(a)
    if rtol is None:
        rtol = _default_rtol(n, x.shape[1])
    pg = pseudo_inverse(gram(x), rtol=rtol)
    # diagonal of (1/n) * G pg G without forming the full product
    half = pg @ ga
    xi = np.einsum("ij,ij->j", ga, half) / n
    xi = np.where(xi > 0.0, xi, 0.0)
    return ScalingInfo(xi=xi, gram_a=ga, pinv_gram_x=pg, n=n)


def surrogate_response(
    x: np.ndarray, y: np.ndarray, a: np.ndarray, rtol: float | None = None
) -> np.ndarray:
    """ytilde_A = A (X'X)^+ X'Y, the fitted values carried to the A geometry."""
    x = as_matrix(x, "X")
    a = as_matrix(a, "A")
    if rtol is None:
        rtol = _default_rtol(*x.shape)
    v = pseudo_inverse(gram(x), rtol=rtol) @ (x.T @ as_vector(y, "Y"))
    return a @ v


def _warn_on_kernel_mismatch(x: np.ndarray, a: np.ndarray) -> None:
    """Cheap rank diagnostic for the Ker(A) = Ker(X) premise."""
    rx = np.linalg.matrix_rank(x)
    ra = np.linalg.matrix_rank(a)
    rs = np.linalg.matrix_rank(np.vstack([x, a]))
    if not (rx == ra == rs):
        warnings.warn(
            f"numerical ranks rank(X)={rx}, rank(A)={ra}, rank([X;A])={rs} "
            "suggest Ker(A) != Ker(X); guarantees may not apply",
            KernelMismatchWarning,
            stacklevel=3,
        )


def fit_generalized_lasso(
    problem: RegressionProblem,
    objective: Objective,
    lam: float,
    opts: CdOptions | None = None,
    rtol: float | None = None,
) -> Estimate:
    """Penalized fit: argmin ||ytilde_A - A b||^2 + 2*lam*||Xi_A b||_1.

    Reduces to a standard lasso through B = A Xi^-1 and back-maps the
    solution; coordinates with xi_j = 0 are excluded and returned as 0.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    a = target_matrix(problem, objective)
    _warn_on_kernel_mismatch(problem.x, a)
    scaling = compute_scaling(problem.x, a, rtol=rtol)
    ytilde = a @ (scaling.pinv_gram_x @ (problem.x.T @ problem.y))
    active = scaling.active
    w = scaling.xi_sqrt[active]
    b_mat = a[:, active] / w
    gamma, diag = coordinate_descent_lasso(b_mat, ytilde, lam, opts)
    beta = np.zeros(problem.p)
    beta[active] = gamma / w
    resid = b_mat.T @ (ytilde - b_mat @ gamma)
    kkt = float(np.abs(resid).max(initial=0.0))
    return Estimate(
        beta=beta,
        lam=lam,
        objective=objective,
        method="generalized_lasso",
        diagnostics=diag,
        kkt_infinity_norm=kkt,
        scaling=scaling,
    )


def fit_generalized_dantzig(
    problem: RegressionProblem,
    objective: Objective,
    lam: float,
    rtol: float | None = None,
) -> Estimate:
    """Constrained fit: argmin ||b||_1 s.t. ||Xi^-1 A'A(v - b)||_inf <= lam.

    Solved as an LP over (b, u): minimize sum(u) subject to +-b <= u and
    the scaled correlation constraints.  Always feasible for lam >= 0
    since b = v satisfies the constraint exactly.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    a = target_matrix(problem, objective)
    _warn_on_kernel_mismatch(problem.x, a)
    scaling = compute_scaling(problem.x, a, rtol=rtol)
    v = scaling.pinv_gram_x @ (problem.x.T @ problem.y)
    active = scaling.active
    idx = np.flatnonzero(active)
    k = idx.shape[0]
    if k == 0:
        diag = SolveDiagnostics(0, 0.0, True)
        return Estimate(
            beta=np.zeros(problem.p),
            lam=lam,
            objective=objective,
            method="generalized_dantzig",
            diagnostics=diag,
            kkt_infinity_norm=0.0,
            scaling=scaling,
        )
    w = scaling.xi_sqrt[idx]
    c_mat = (scaling.gram_a[np.ix_(idx, idx)]) / w[:, None]
    r0 = (scaling.gram_a @ v)[idx] / w
    # variables (b, u) in R^{2k}; rows: b-u<=0, -b-u<=0, -Cb<=lam-r0, Cb<=lam+r0
    eye = np.eye(k)
    g_rows = np.vstack(
        [
            np.hstack([eye, -eye]),
            np.hstack([-eye, -eye]),
            np.hstack([-c_mat, np.zeros((k, k))]),
            np.hstack([c_mat, np.zeros((k, k))]),
        ]
    )
    h = np.concatenate([np.zeros(2 * k), lam - r0, lam + r0])
    lp = LpProblem(c=np.concatenate([np.zeros(k), np.ones(k)]), g=g_rows, h=h)
    sol, diag = simplex_lp(lp)
    beta = np.zeros(problem.p)
    beta[idx] = sol[:k]
    kkt = float(np.abs(r0 - c_mat @ sol[:k]).max(initial=0.0))
    return Estimate(
        beta=beta,
        lam=lam,
        objective=objective,
        method="generalized_dantzig",
        diagnostics=diag,
        kkt_infinity_norm=kkt,
        scaling=scaling,
    )


def soft_threshold_lse(
    problem: RegressionProblem, lam: float, rtol: float | None = None
) -> Estimate:
    """Soft-thresholded least squares, the closed form of the estimation
    objective: threshold the j-th LSE coordinate at lam * sqrt(xi_j) / n
    with xi from the sqrt(n)*I target."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    g = gram(problem.x)
    if not _gram_invertible(g, rtol=rtol):
        raise ValueError("soft_threshold_lse requires an invertible X'X")
    b_lse = np.linalg.solve(g, problem.x.T @ problem.y)
    scaling = compute_scaling(
        problem.x, np.sqrt(problem.n) * np.eye(problem.p), rtol=rtol
    )
    thresholds = lam * scaling.xi_sqrt / problem.n
    beta = np.array(
        [soft_threshold(b, t) for b, t in zip(b_lse, thresholds)]
    )
    kkt = float(
        np.abs(problem.n * (b_lse - beta) / scaling.xi_sqrt).max(initial=0.0)
    )
    diag = SolveDiagnostics(sweeps_or_pivots=1, final_kkt_residual=0.0, converged=True)
    return Estimate(
        beta=beta,
        lam=lam,
        objective=Objective.estimation(),
        method="soft_threshold_lse",
        diagnostics=diag,
        kkt_infinity_norm=kkt,
        scaling=scaling,
    )


def dantzig_feasibility_residual(
    problem: RegressionProblem,
    a: np.ndarray,
    beta: np.ndarray,
    rtol: float | None = None,
) -> float:
    """||Xi^-1 A'(ytilde_A - A beta)||_inf over coordinates with xi_j > 0.

    This is the constraint value of the Dantzig program; any optimum of the
    penalized program at the same lam is feasible here (subgradient
    condition), which certifies the two formulations against each other.
    """
    a = as_matrix(a, "A")
    beta = as_vector(beta, "beta")
    scaling = compute_scaling(problem.x, a, rtol=rtol)
    v = scaling.pinv_gram_x @ (problem.x.T @ problem.y)
    resid = scaling.gram_a @ (v - beta)
    active = scaling.active
    if not active.any():
        return 0.0
    return float(np.abs(resid[active] / scaling.xi_sqrt[active]).max())
