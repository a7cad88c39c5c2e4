"""Command-line entry point.

Commands: certify, solve-fbs, solve-pd, verify-theorem3, disagree,
sweep, gen-signal. Each command resolves its parameters as
defaults < --config JSON < explicit flags, writes its artifacts plus a
manifest.json holding the fully resolved configuration, and re-running
from that manifest reproduces every output byte for byte.

Exit codes: 0 success (certify: verdict pass), 1 certification fail,
2 usage or parameter error, 3 step-size condition violation,
4 divergence or aborted run.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, linalg, report, solvers
from .denoise import DENOISER_NAMES, certify, make_denoiser
from .solvers import DivergenceError, StepSizeError

_PROBLEM_DEFAULTS = {
    "n": 64, "m": 256, "seed": 0, "noise_std": None, "noise_rel": 0.1,
    "pieces": None,
}


def _resolve(defaults: dict, config: dict, flags: dict) -> dict:
    out = dict(defaults)
    for key, value in config.items():
        if key in out:
            out[key] = value
    for key, value in flags.items():
        if key in out and value is not None:
            out[key] = value
    return out


def _outdir(args, cfg) -> Path:
    out = args.out or os.environ.get("MOLGRAD_OUT") or cfg.get("output_dir") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    cfg["output_dir"] = str(out)
    return path


def _write_manifest(outdir: Path, command: str, cfg: dict) -> None:
    report.write_json(outdir / "manifest.json", {"command": command, **cfg})


def _load_config(path) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _build_denoiser(cfg):
    name = cfg["denoiser"]
    if name not in DENOISER_NAMES:
        raise KeyError(f"unknown denoiser {name!r}; choose from {DENOISER_NAMES}")
    params = {}
    if name == "soft":
        params["lam"] = cfg["lam"]
        if cfg.get("beta") is not None:
            params["beta"] = cfg["beta"]
    elif name in ("firm", "vector-firm", "group-firm"):
        params["lambda1"] = cfg["lambda1"]
        params["lambda2"] = cfg["lambda2"]
        if name == "group-firm":
            params["groups"] = [int(s) for s in str(cfg["groups"]).split(",")]
    elif name == "garrote":
        params["lam"] = cfg["lam"]
    elif name == "tied-relu":
        params["weights"] = linalg.load_matrix_csv(cfg["weights"])
    return make_denoiser(name, **params)


def _problem(cfg) -> experiments.ProblemInstance:
    if cfg.get("pieces") is None:
        cfg["pieces"] = experiments.default_piece_count(int(cfg["n"]))
    return experiments.generate_problem(
        n=int(cfg["n"]), m=int(cfg["m"]), noise_std=cfg["noise_std"],
        n_pieces=int(cfg["pieces"]), seed=int(cfg["seed"]),
        noise_rel=float(cfg["noise_rel"]),
    )


def _write_trace_csv(path, trace: solvers.SolverTrace) -> None:
    iters = np.arange(len(trace.residuals))
    cols = [iters, np.asarray(trace.residuals)]
    header = ["iter", "residual"]
    if trace.objectives:
        header.append("objective")
        cols.append(np.asarray(trace.objectives))
    report.write_curve_csv(path, header, *cols)


# ---------------------------------------------------------------------------
# command handlers


def _cmd_certify(args) -> int:
    config = _load_config(args.config)
    defaults = {
        "denoiser": args.name, "lam": 1.0, "lambda1": 1.0, "lambda2": 2.0,
        "beta": None, "weights": None, "groups": "1", "dim": 1,
        "samples": 10_000, "probes": 100, "seed": 0, "bound": 20.0,
        "fd_step": 1e-6, "slack": 0.02,
    }
    cfg = _resolve(defaults, config, vars(args))
    if args.name:
        cfg["denoiser"] = args.name
    den = _build_denoiser(cfg)
    rep = certify(
        den, dim=int(cfg["dim"]), bounds=(-float(cfg["bound"]), float(cfg["bound"])),
        n_pairs=int(cfg["samples"]), n_probes=int(cfg["probes"]),
        fd_step=float(cfg["fd_step"]), seed=int(cfg["seed"]),
        lipschitz_slack=float(cfg["slack"]),
    )
    outdir = _outdir(args, cfg)
    (outdir / "certify-report.json").write_text(rep.to_json())
    _write_manifest(outdir, "certify", cfg)
    print(f"{den.name}: verdict={rep.verdict} lipschitz={rep.lipschitz_estimate:.6g} "
          f"jacobian_asymmetry={rep.jacobian_asymmetry:.3g}")
    return 0 if rep.verdict == "pass" else 1


def _cmd_solve_fbs(args) -> int:
    config = _load_config(args.config)
    defaults = {
        **_PROBLEM_DEFAULTS,
        "denoiser": "soft", "lam": 1.0, "lambda1": 1.0, "lambda2": 2.0,
        "beta": None, "weights": None, "groups": "1",
        "mu": 1.0, "max_iter": 10_000, "stop_tol": 1e-10,
    }
    cfg = _resolve(defaults, config, vars(args))
    den = _build_denoiser(cfg)
    instance = _problem(cfg)
    fbs = solvers.FbsConfig(mu=float(cfg["mu"]), denoiser=den,
                            fidelity=instance.fidelity(),
                            max_iter=int(cfg["max_iter"]),
                            stop_tol=float(cfg["stop_tol"]))
    x_hat, trace = solvers.run_fbs(fbs, np.zeros(instance.n))
    outdir = _outdir(args, cfg)
    _write_trace_csv(outdir / "fbs-trace.csv", trace)
    linalg.save_vector_csv(outdir / "fbs-solution.csv", x_hat)
    _write_manifest(outdir, "solve-fbs", cfg)
    print(f"converged: {trace.stop_reason} after {trace.iterations} iterations, "
          f"final residual {trace.residuals[-1]:.3e}")
    return 0


def _cmd_solve_pd(args) -> int:
    config = _load_config(args.config)
    defaults = {
        **_PROBLEM_DEFAULTS,
        "denoiser": "firm", "lam": 1.0, "lambda1": 2.5, "lambda2": 5.0,
        "beta": None, "weights": None, "groups": "1",
        "sigma": None, "tau": None, "delta": 1.0, "gamma": 0.9,
        "max_iter": 10_000, "stop_tol": 1e-10,
    }
    cfg = _resolve(defaults, config, vars(args))
    den = _build_denoiser(cfg)
    instance = _problem(cfg)
    consts = experiments.instance_constants(instance)
    if cfg["sigma"] is None or cfg["tau"] is None:
        sigma, tau = solvers.derive_pd_params(
            consts.rho, consts.kappa, consts.norm_L, den.beta,
            float(cfg["delta"]), float(cfg["gamma"]))
        cfg["sigma"] = sigma if cfg["sigma"] is None else cfg["sigma"]
        cfg["tau"] = tau if cfg["tau"] is None else cfg["tau"]
    if args.derive_params:
        print(f"sigma={report.fmt17(cfg['sigma'])} tau={report.fmt17(cfg['tau'])}")
        return 0
    pd = solvers.PdConfig(
        sigma=float(cfg["sigma"]), tau=float(cfg["tau"]), L=consts.L,
        denoiser=den, fidelity=instance.fidelity(), rho=consts.rho,
        kappa=consts.kappa, L_norm=consts.norm_L,
        max_iter=int(cfg["max_iter"]), stop_tol=float(cfg["stop_tol"]))
    x_hat, _, trace = solvers.run_pd_molgrad(
        pd, np.zeros(instance.n), np.zeros(consts.L.output_dim))
    outdir = _outdir(args, cfg)
    _write_trace_csv(outdir / "pd-trace.csv", trace)
    linalg.save_vector_csv(outdir / "pd-solution.csv", x_hat)
    _write_manifest(outdir, "solve-pd", cfg)
    print(f"converged: {trace.stop_reason} after {trace.iterations} iterations, "
          f"final residual {trace.residuals[-1]:.3e}")
    return 0


def _apply_scale(cfg) -> None:
    if cfg.pop("paper_scale", False):
        cfg["n"] = 256 if cfg["n"] == _PROBLEM_DEFAULTS["n"] else cfg["n"]
        cfg["m"] = 1024 if cfg["m"] == _PROBLEM_DEFAULTS["m"] else cfg["m"]


def _write_curveset(outdir, stem, seed, curves, figure, title):
    iters = np.arange(curves.joint.size)
    files = {}
    for branch, values in (("joint", curves.joint), ("x", curves.x_only),
                           ("u", curves.u_only)):
        path = outdir / f"{stem}-{branch}-{seed}.csv"
        report.write_curve_csv(path, ["iter", "discrepancy"], iters, values)
        files[branch] = path
    if figure:
        series = {"x, u": (iters, curves.joint), "x": (iters, curves.x_only),
                  "u": (iters, curves.u_only)}
        report.render_curves(outdir / f"{stem}-{seed}.png", series,
                             "iteration", "discrepancy", title=title)
    return files


def _cmd_verify_theorem3(args) -> int:
    config = _load_config(args.config)
    defaults = {
        **_PROBLEM_DEFAULTS, "paper_scale": False,
        "lambda1": 2.5, "lambda2": 5.0, "delta": 1.0, "gamma": 0.9,
        "sigma_baseline": 0.2, "iters": 10_000,
    }
    cfg = _resolve(defaults, config, vars(args))
    if args.paper_scale:
        cfg["paper_scale"] = True
    _apply_scale(cfg)
    instance = _problem(cfg)
    curves = experiments.run_agreement_experiment(
        instance, lam1=float(cfg["lambda1"]), lam2=float(cfg["lambda2"]),
        delta=float(cfg["delta"]), gamma=float(cfg["gamma"]),
        sigma_baseline=float(cfg["sigma_baseline"]), iters=int(cfg["iters"]))
    outdir = _outdir(args, cfg)
    seed = int(cfg["seed"])
    _write_curveset(outdir, "agreement", seed, curves, not args.no_figure,
                    "primal-dual agreement on the convex rewrite")
    summary = {
        "final_joint_discrepancy": float(curves.joint[-1]),
        "final_x_discrepancy": float(curves.x_only[-1]),
        "final_u_discrepancy": float(curves.u_only[-1]),
        "iterations": int(cfg["iters"]),
        "params": {k: float(v) for k, v in curves.params.items()},
    }
    report.write_json(outdir / "summary.json", summary)
    _write_manifest(outdir, "verify-theorem3", cfg)
    print(f"final joint discrepancy: {summary['final_joint_discrepancy']:.3e}")
    return 0


def _cmd_disagree(args) -> int:
    config = _load_config(args.config)
    defaults = {
        **_PROBLEM_DEFAULTS, "paper_scale": False,
        "lambda2": 5.0, "mu": None, "sigma": 0.2, "gamma": 0.9,
        "tau": None, "iters": 10_000,
    }
    cfg = _resolve(defaults, config, vars(args))
    if args.paper_scale:
        cfg["paper_scale"] = True
    _apply_scale(cfg)
    instance = _problem(cfg)
    curves = experiments.run_disagreement_experiment(
        instance, lam2=float(cfg["lambda2"]),
        mu=None if cfg["mu"] is None else float(cfg["mu"]),
        sigma=float(cfg["sigma"]), iters=int(cfg["iters"]),
        gamma=float(cfg["gamma"]),
        tau=None if cfg["tau"] is None else float(cfg["tau"]))
    outdir = _outdir(args, cfg)
    seed = int(cfg["seed"])
    _write_curveset(outdir, "disagreement", seed, curves, not args.no_figure,
                    "heuristic plug-in vs reference run")
    summary = {
        "final_joint_discrepancy": float(curves.joint[-1]),
        "final_x_discrepancy": float(curves.x_only[-1]),
        "final_u_discrepancy": float(curves.u_only[-1]),
        "iterations": int(cfg["iters"]),
        "params": {k: float(v) for k, v in curves.params.items()},
    }
    report.write_json(outdir / "summary.json", summary)
    _write_manifest(outdir, "disagree", cfg)
    print(f"final joint discrepancy: {summary['final_joint_discrepancy']:.3e} "
          f"(x-only {summary['final_x_discrepancy']:.3e})")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    defaults = {
        "n": 64, "m": 256, "seed": 0, "noise_std": None, "noise_rel": 0.1,
        "pieces": 8, "trials": 30, "iters": 1500, "gamma": 0.9,
        "sigma_l1": 0.2, "lam1_ratio": 0.5, "workers": 1,
        "lam2_grid": None, "mu_grid": None,
    }
    cfg = _resolve(defaults, config, vars(args))
    if cfg.get("pieces") is None:
        cfg["pieces"] = experiments.default_piece_count(int(cfg["n"]))
    parse_grid = lambda g: None if g is None else [float(s) for s in str(g).split(",")]
    firm_res, l1_res = experiments.run_sweep(
        n_trials=int(cfg["trials"]), lam2_grid=parse_grid(cfg["lam2_grid"]),
        mu_grid=parse_grid(cfg["mu_grid"]), n=int(cfg["n"]), m=int(cfg["m"]),
        iters=int(cfg["iters"]), seed=int(cfg["seed"]), gamma=float(cfg["gamma"]),
        sigma_l1=float(cfg["sigma_l1"]), noise_std=cfg["noise_std"],
        noise_rel=float(cfg["noise_rel"]), lam1_ratio=float(cfg["lam1_ratio"]),
        n_pieces=int(cfg["pieces"]), workers=int(cfg["workers"]))
    outdir = _outdir(args, cfg)
    seed = int(cfg["seed"])
    cfg["lam2_grid"] = ",".join(report.fmt17(v) for v in firm_res.grid)
    cfg["mu_grid"] = ",".join(report.fmt17(v) for v in l1_res.grid)
    report.write_curve_csv(outdir / f"sweep-firm-{seed}.csv",
                           ["lambda2", "mean_mismatch"], firm_res.grid, firm_res.mean)
    report.write_curve_csv(outdir / f"sweep-l1-{seed}.csv",
                           ["mu", "mean_mismatch"], l1_res.grid, l1_res.mean)
    summary = {
        "best_firm": firm_res.best,
        "best_l1": l1_res.best,
        "trials": int(cfg["trials"]),
        "firm_wins": firm_res.best <= l1_res.best,
    }
    report.write_json(outdir / "summary.json", summary)
    if not args.no_figure:
        series = {"firm (lambda2 sweep)": (firm_res.grid, firm_res.mean),
                  "l1 (mu sweep)": (l1_res.grid, l1_res.mean)}
        report.render_curves(outdir / f"sweep-{seed}.png", series,
                             "parameter", "mean system mismatch", logx=True,
                             title="firm vs l1 total-variation recovery")
    _write_manifest(outdir, "sweep", cfg)
    print(f"best firm {summary['best_firm']:.6g} vs best l1 {summary['best_l1']:.6g}")
    return 0


def _cmd_gen_signal(args) -> int:
    config = _load_config(args.config)
    defaults = {"n": 256, "pieces": 8, "seed": 0, "level_lo": -2.0, "level_hi": 2.0}
    cfg = _resolve(defaults, config, vars(args))
    signal = experiments.generate_piecewise_signal(
        int(cfg["n"]), int(cfg["pieces"]),
        (float(cfg["level_lo"]), float(cfg["level_hi"])), int(cfg["seed"]))
    outdir = _outdir(args, cfg)
    linalg.save_vector_csv(outdir / f"signal-{int(cfg['seed'])}.csv", signal)
    _write_manifest(outdir, "gen-signal", cfg)
    print(f"wrote signal of length {signal.size} with {int(cfg['pieces'])} pieces")
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--out", help="output directory (env MOLGRAD_OUT overrides cwd)")


def _add_problem_flags(p):
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--noise-rel", dest="noise_rel", type=float)
    p.add_argument("--pieces", type=int)


def _add_denoiser_flags(p):
    p.add_argument("--denoiser", choices=DENOISER_NAMES)
    p.add_argument("--lam", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--weights", help="CSV file with the weight matrix (tied-relu)")
    p.add_argument("--groups", help="comma-separated group sizes (group-firm)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molgrad",
        description="Operator-splitting toolkit: shrinkage denoisers, "
                    "certification, and splitting-scheme experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="run the certification battery on a denoiser")
    p.add_argument("name", nargs="?", help=f"denoiser name: {', '.join(DENOISER_NAMES)}")
    _add_denoiser_flags(p)
    p.add_argument("--dim", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--probes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bound", type=float)
    p.add_argument("--fd-step", dest="fd_step", type=float)
    p.add_argument("--slack", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("solve-fbs", help="forward-backward splitting run")
    _add_problem_flags(p)
    _add_denoiser_flags(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--stop-tol", dest="stop_tol", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_solve_fbs)

    p = sub.add_parser("solve-pd", help="primal-dual splitting run")
    _add_problem_flags(p)
    _add_denoiser_flags(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--stop-tol", dest="stop_tol", type=float)
    p.add_argument("--derive-params", action="store_true",
                   help="print the derived (sigma, tau) and exit")
    _add_common(p)
    p.set_defaults(func=_cmd_solve_pd)

    p = sub.add_parser("verify-theorem3",
                       help="agreement study: modified scheme vs Condat-Vu baseline")
    _add_problem_flags(p)
    p.add_argument("--paper-scale", action="store_true", help="n=256, m=1024")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma-baseline", dest="sigma_baseline", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--no-figure", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_verify_theorem3)

    p = sub.add_parser("disagree", help="disagreement study: heuristic plug-in")
    _add_problem_flags(p)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--lambda2", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--no-figure", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_disagree)

    p = sub.add_parser("sweep", help="firm-vs-l1 parameter sweep")
    _add_problem_flags(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma-l1", dest="sigma_l1", type=float)
    p.add_argument("--lam1-ratio", dest="lam1_ratio", type=float)
    p.add_argument("--lam2-grid", dest="lam2_grid",
                   help="comma-separated lambda2 values")
    p.add_argument("--mu-grid", dest="mu_grid", help="comma-separated mu values")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-figure", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-signal", help="emit a seeded piecewise-constant signal")
    p.add_argument("--n", type=int)
    p.add_argument("--pieces", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--level-lo", dest="level_lo", type=float)
    p.add_argument("--level-hi", dest="level_hi", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_gen_signal)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StepSizeError as exc:
        print(f"error [{exc.condition}]: {exc}", file=sys.stderr)
        return 3
    except (DivergenceError, experiments.SweepAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
