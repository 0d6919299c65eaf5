"""Command-line surface.

Subcommands: ``fit`` (one estimate on user data), ``path`` (a full lambda
path), ``simulate`` (the Monte Carlo benchmark), ``verify`` (empirical
checks of the probabilistic guarantees).  Exit codes are a stable
contract: 0 success, 2 validation failure, 3 solver non-convergence,
4 verification failure.  All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import report
from .estimators import (
    Objective,
    RegressionProblem,
    fit_generalized_dantzig,
    fit_generalized_lasso,
)
from .simulate import (
    ExperimentConfig,
    PRESET_NAMES,
    default_grid,
    gen_design,
    preset,
    run_experiment,
    summarize,
)
from .solvers import lasso_path
from .transductive import TwoStepConfig, two_step_fit
from .verify import (
    ConeSpec,
    lemma1_coverage,
    prop4_sampling,
    restricted_constant,
    theorem_coverage,
)

_OBJECTIVES = {
    "denoise": Objective.denoising,
    "transductive": Objective.transductive,
    "estimate": Objective.estimation,
}


class CliError(Exception):
    """Validation failure; rendered as a one-line reason with exit code 2."""


def _read_matrix(path: str, name: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{name} file not found: {path}")
    try:
        arr = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except Exception as exc:
        raise CliError(f"{name} file failed to parse: {path}: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise CliError(f"{name} file contains non-finite values: {path}")
    return arr


def _read_vector(path: str, name: str) -> np.ndarray:
    return _read_matrix(path, name).ravel()


def _outdir(args) -> Path:
    out = Path(args.outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"output directory not writable: {out}: {exc}") from None
    return out


def _load_problem(args, need_z: bool) -> tuple[RegressionProblem, np.ndarray]:
    x = _read_matrix(args.design, "design")
    y = _read_vector(args.response, "response")
    z = None
    if args.unlabeled:
        z = _read_matrix(args.unlabeled, "unlabeled design")
    elif need_z:
        raise CliError("transductive objective requires --unlabeled")
    try:
        prob = RegressionProblem(x=x, y=y, z=z, sigma=args.sigma)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    scales = np.ones(prob.p)
    if args.normalize == "on":
        try:
            prob, scales = prob.normalize()
        except ValueError as exc:
            raise CliError(str(exc)) from None
    return prob, scales


def _objective_from_args(args) -> Objective:
    if args.objective == "custom":
        if not args.custom_a:
            raise CliError("custom objective requires --custom-a")
        return Objective.custom(_read_matrix(args.custom_a, "target matrix"))
    return _OBJECTIVES[args.objective]()


def cmd_fit(args) -> int:
    out = _outdir(args)
    need_z = args.objective == "transductive"
    prob, scales = _load_problem(args, need_z)
    try:
        if args.two_step:
            if args.objective != "transductive":
                raise CliError("--two-step requires --objective transductive")
            cfg = TwoStepConfig(
                lambda1=args.lambda1 if args.lambda1 is not None else args.lam,
                lambda2=args.lam,
                preliminary=args.preliminary or args.method,
                stage2=args.method,
                weighting="xi_sqrt" if args.weighting == "xi" else "unit",
                constraint_multiplier=args.multiplier,
            )
            est = two_step_fit(prob, cfg)
        else:
            objective = _objective_from_args(args)
            if args.method == "lasso":
                est = fit_generalized_lasso(prob, objective, args.lam)
            else:
                est = fit_generalized_dantzig(prob, objective, args.lam)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    beta = est.beta / scales
    report.write_estimate_csv(out / "estimate.csv", beta)
    active = int((np.abs(est.beta) > 1e-12).sum())
    with open(out / "diagnostics.txt", "w", encoding="utf-8") as f:
        f.write(f"method = {est.method}\n")
        f.write(f"objective = {est.objective.variant}\n")
        f.write(f"lambda = {report.fmt(est.lam)}\n")
        if est.lam1 is not None:
            f.write(f"lambda1 = {report.fmt(est.lam1)}\n")
        f.write(f"kkt_residual = {report.fmt(est.kkt_infinity_norm)}\n")
        f.write(f"active_set_size = {active}\n")
        f.write(f"converged = {report.fmt(est.diagnostics.converged)}\n")
        f.write(f"sweeps_or_pivots = {est.diagnostics.sweeps_or_pivots}\n")
    print(f"wrote {out / 'estimate.csv'} (active set {active})")
    return 0 if est.diagnostics.converged else 3


def cmd_path(args) -> int:
    out = _outdir(args)
    prob, scales = _load_problem(args, need_z=False)
    grid = _parse_grid(args.grid) if args.grid else default_grid()
    results = lasso_path(prob.x, prob.y, grid)
    betas = np.array([r[0] for r in results]) / scales
    report.write_path_csv(out / "path.csv", grid, betas)
    if args.figures:
        _render_coefficient_paths(out / "path.png", grid, betas)
    nonconv = sum(not r[1].converged for r in results)
    print(f"wrote {out / 'path.csv'} ({len(grid)} grid points)")
    return 3 if nonconv else 0


def _render_coefficient_paths(path, grid, betas):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for j in range(betas.shape[1]):
        ax.plot(grid, betas[:, j], label=f"b{j}")
    ax.set_xscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("coefficient")
    if betas.shape[1] <= 10:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def _parse_grid(text: str) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in text.split(",") if t.strip() != ""])
    except ValueError:
        raise CliError(f"could not parse grid: {text!r}") from None
    if vals.size == 0:
        raise CliError("grid is empty")
    return np.sort(vals)[::-1]


_CONFIG_KEYS = {
    "n": int,
    "m": int,
    "p": int,
    "rho": float,
    "sigma": float,
    "replications": int,
    "seed": int,
    "normalize": lambda s: s.lower() in ("1", "true", "on", "yes"),
    "beta_star": lambda s: np.array([float(t) for t in s.split(",")]),
    "grid_base": float,
    "grid_kmin": int,
    "grid_kmax": int,
    "preliminary": str,
    "stage2": str,
    "weighting": str,
    "multiplier": float,
}


def _read_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"config line {lineno} is not key = value: {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_KEYS:
            raise CliError(f"unknown config key {key!r} on line {lineno}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except Exception:
            raise CliError(f"bad value for {key!r} on line {lineno}: {val!r}") from None
    return values


def _simulate_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for key in ("n", "m", "p", "rho", "sigma", "replications", "seed", "multiplier",
                "preliminary", "stage2", "weighting"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.beta_star is not None:
        values["beta_star"] = np.array([float(t) for t in args.beta_star.split(",")])
    if args.normalize is not None:
        values["normalize"] = args.normalize == "on"

    if args.preset:
        cfg = preset(args.preset)
    else:
        required = ("n", "m", "p", "rho", "sigma", "beta_star")
        missing = [k for k in required if k not in values]
        if missing:
            raise CliError(f"missing required config values: {', '.join(missing)}")
        try:
            cfg = ExperimentConfig(
                n=values["n"], m=values["m"], p=values["p"], rho=values["rho"],
                sigma=values["sigma"], beta_star=values["beta_star"],
            )
        except ValueError as exc:
            raise CliError(str(exc)) from None

    grid_base = values.get("grid_base", 1.2)
    if "grid_kmin" in values or "grid_kmax" in values or "grid_base" in values:
        kmin = values.get("grid_kmin", -50)
        kmax = values.get("grid_kmax", 30)
        cfg.grid = grid_base ** np.arange(kmax, kmin - 1, -1.0)
    ts = cfg.two_step
    cfg.two_step = TwoStepConfig(
        lambda1=0.0,
        lambda2=0.0,
        preliminary=values.get("preliminary", ts.preliminary),
        stage2=values.get("stage2", ts.stage2),
        weighting=values.get("weighting", ts.weighting),
        constraint_multiplier=values.get("multiplier", ts.constraint_multiplier),
    )
    for key in ("n", "m", "p", "rho", "sigma", "replications", "seed"):
        if key in values:
            setattr(cfg, key, values[key])
    if "beta_star" in values:
        cfg.beta_star = values["beta_star"]
    if "normalize" in values:
        cfg.normalize = values["normalize"]
    try:
        cfg.__post_init__()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return cfg


def cmd_simulate(args) -> int:
    out = _outdir(args)
    cfg = _simulate_config(args)

    def progress(done, total):
        print(f"replication {done}/{total}", end="\r", file=sys.stderr, flush=True)

    results = run_experiment(cfg, threads=args.threads, progress=progress)
    print(file=sys.stderr)
    summaries = summarize(results)
    report.write_results_csv(out / "results.csv", cfg, results)
    report.write_summary_csv(out / "summary.csv", cfg, summaries)
    for metric, s in summaries.items():
        slug = metric.strip("PERF()").lower()
        report.write_histogram_csv(out / f"histogram_perf_{slug}.csv", s)
        if args.figures:
            report.render_histogram(
                out / f"histogram_perf_{slug}.png", s, title=cfg.label or metric
            )
    if args.figures:
        r0 = results[0]
        report.render_loss_curves(
            out / "loss_curves_rep0.png",
            cfg.grid,
            r0.lasso_losses,
            cfg.n,
            cfg.m,
            support_lambda=r0.support_recovery_lambda,
            title="lasso path losses, replication 0",
        )
    nonconv = sum(r.nonconverged_fits for r in results)
    print(f"{'metric':<9} {'ME':>8} {'Q3':>8}")
    for metric, s in summaries.items():
        print(f"{metric:<9} {s.me:>8.4f} {s.q3:>8.4f}")
    if nonconv:
        print(f"warning: {nonconv} fits did not meet the KKT tolerance", file=sys.stderr)
    return 0


_VERIFY_PRESETS = {
    "n20p8": dict(n=20, m=40, p=8, rho=0.5, sigma=1.0, beta_star=np.array([3.0, 1.5, 0, 0, 2.0, 0, 0, 0])),
    "n7p8": dict(n=7, m=10, p=8, rho=0.5, sigma=1.0, beta_star=np.array([3.0, 1.5, 0, 0, 2.0, 0, 0, 0])),
}


def _verify_scenario(args) -> ExperimentConfig:
    if args.preset not in _VERIFY_PRESETS:
        raise CliError(
            f"unknown scenario preset {args.preset!r}; available: "
            + ", ".join(_VERIFY_PRESETS)
        )
    kw = dict(_VERIFY_PRESETS[args.preset])
    return ExperimentConfig(replications=1, seed=args.seed, **kw)


def cmd_verify(args) -> int:
    out = _outdir(args)
    rows = []
    ok = True
    scenario = _verify_scenario(args)
    if args.claim == "lemma1":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(0,)))
        x = gen_design(scenario.n, scenario.p, scenario.rho, rng)
        x /= np.sqrt((x**2).sum(axis=0) / scenario.n)
        targets = {"x": x, "identity": math.sqrt(scenario.n) * np.eye(scenario.p)}
        if args.a != "both":
            targets = {args.a: targets[args.a]}
        for name, a in targets.items():
            rep = lemma1_coverage(x, a, scenario.sigma, args.eta, args.trials, seed=args.seed)
            ok &= rep.passed
            rows.append(_coverage_row(f"lemma1[A={name}]", rep))
    elif args.claim in ("thm1", "thm2", "thm3"):
        reps = theorem_coverage(
            args.claim, scenario, trials=args.trials, seed=args.seed, eta=args.eta
        )
        for name, rep in reps.items():
            rows.append(_coverage_row(f"{args.claim}[{name}]", rep))
        ok = reps["joint"].passed
    elif args.claim == "prop4":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(1,)))
        n = args.prop4_n
        chi = rng.uniform(-1.0, 1.0, size=(args.k * n, args.prop4_p))
        res = prop4_sampling(chi, args.k, args.eta, args.trials, seed=args.seed, kappa=1.0)
        rows.append(_coverage_row("prop4[proof-level]", res.proof_level,
                                  bound=res.bound))
        rows.append(_coverage_row("prop4[statement-level, reported only]",
                                  res.statement_level, bound=res.statement_bound))
        ok = res.proof_level.passed
    elif args.claim == "assumption":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(2,)))
        if args.m_matrix == "identity":
            m_mat = scenario.n * np.eye(scenario.p)
        else:
            x = gen_design(scenario.n, scenario.p, scenario.rho, rng)
            x /= np.sqrt((x**2).sum(axis=0) / scenario.n)
            m_mat = x.T @ x
        cone = ConeSpec.from_beta_star(scenario.beta_star, x=args.x)
        rep = restricted_constant(m_mat, cone, scenario.n, budget=args.budget, seed=args.seed)
        rows.append(
            dict(
                claim=f"assumption[c({args.m_matrix}), x={args.x}]",
                bound="",
                trials=rep.samples_used,
                successes=rep.samples_used,
                empirical=rep.c_estimate,
                nominal=float("nan"),
                margin=float("nan"),
                passed=True,
                detail="c_estimate is an upper bound on the true restricted constant",
            )
        )
        print(f"c_estimate = {rep.c_estimate:.6f}")
    report.write_coverage_csv(out / "coverage.csv", rows)
    for r in rows:
        emp = r["empirical"]
        print(f"{r['claim']}: empirical={emp:.4f} nominal={r['nominal']}"
              f" passed={r['passed']}")
    return 0 if ok else 4


def _coverage_row(claim, rep, bound=""):
    return dict(
        claim=claim,
        bound=report.fmt(bound) if bound != "" else "",
        trials=rep.trials,
        successes=rep.successes,
        empirical=rep.empirical,
        nominal=rep.nominal,
        margin=rep.margin,
        passed=rep.passed,
    )


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", required=True, help="design CSV (header row, one column per covariate)")
    p.add_argument("--response", required=True, help="response CSV (header row, single column)")
    p.add_argument("--unlabeled", help="unlabeled design CSV (all m rows, first n equal to the design)")
    p.add_argument("--normalize", choices=("on", "off"), default="on",
                   help="rescale columns to unit n-scaled norm (estimates are reported in original coordinates)")
    p.add_argument("--sigma", type=float, default=0.0, help="known noise standard deviation")
    p.add_argument("--outdir", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="translasso",
        description="Sparse regression with target-matrix estimators, two-step "
        "transductive fitting, theorem verification and a benchmark harness.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one estimator on user data")
    _add_data_flags(p_fit)
    p_fit.add_argument("--objective", choices=("denoise", "transductive", "estimate", "custom"),
                       default="denoise")
    p_fit.add_argument("--method", choices=("lasso", "dantzig"), default="lasso")
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--custom-a", help="CSV with a custom target matrix A")
    p_fit.add_argument("--weighting", choices=("unit", "xi"), default="unit",
                       help="stage-2 weighting for --two-step fits")
    p_fit.add_argument("--two-step", action="store_true",
                       help="two-step transductive fit (stage 1 at --lambda1, stage 2 at --lambda)")
    p_fit.add_argument("--lambda1", type=float, help="stage-1 penalty for --two-step")
    p_fit.add_argument("--preliminary", choices=("lasso", "dantzig"),
                       help="stage-1 method for --two-step (defaults to --method)")
    p_fit.add_argument("--multiplier", type=float, help="stage-2 constraint multiplier")
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", help="lasso path on user data")
    _add_data_flags(p_path)
    p_path.add_argument("--grid", help="comma-separated lambda values (default 1.2^k, k=-50..30)")
    p_path.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_path.set_defaults(func=cmd_path)

    p_sim = sub.add_parser("simulate", help="run the Monte Carlo benchmark")
    p_sim.add_argument("--preset", choices=PRESET_NAMES, help="benchmark cell preset")
    p_sim.add_argument("--config", help="flat key = value config file")
    for key, typ in (("n", int), ("m", int), ("p", int), ("rho", float),
                     ("sigma", float), ("replications", int), ("seed", int),
                     ("multiplier", float)):
        p_sim.add_argument(f"--{key}", type=typ)
    p_sim.add_argument("--beta-star", help="comma-separated true coefficients")
    p_sim.add_argument("--normalize", choices=("on", "off"))
    p_sim.add_argument("--preliminary", choices=("lasso", "dantzig"))
    p_sim.add_argument("--stage2", choices=("lasso", "dantzig"))
    p_sim.add_argument("--weighting", choices=("unit", "xi_sqrt"))
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--outdir", default="out")
    p_sim.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="verify a probabilistic claim empirically")
    p_ver.add_argument("claim", choices=("lemma1", "thm1", "thm2", "thm3", "prop4", "assumption"))
    p_ver.add_argument("--eta", type=float, default=0.05)
    p_ver.add_argument("--trials", type=int, default=1000)
    p_ver.add_argument("--preset", default="n20p8", help="scenario preset (n20p8, n7p8)")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--a", choices=("x", "identity", "both"), default="both",
                       help="target matrix for lemma1")
    p_ver.add_argument("--k", type=int, default=2, help="population multiple m = k n for prop4")
    p_ver.add_argument("--prop4-n", type=int, default=8, help="labeled sample size for prop4")
    p_ver.add_argument("--prop4-p", type=int, default=4, help="covariate count for prop4")
    p_ver.add_argument("--m", dest="m_matrix", choices=("identity", "gram"), default="identity",
                       help="matrix for the assumption check")
    p_ver.add_argument("--x", type=float, default=3.0, help="cone aperture for the assumption check")
    p_ver.add_argument("--budget", type=int, default=2000, help="sampling budget for the assumption check")
    p_ver.add_argument("--outdir", default="out")
    p_ver.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
