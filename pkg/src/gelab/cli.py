"""Command-line entry point: ``gel <subcommand> [options]``.

Every subcommand that writes files writes them atomically into the output
directory (``--out-dir``, else ``$GEL_OUT_DIR``, else ``./gel-out``) together
with a ``<command>.manifest.json`` listing their digests. A manifest can be
passed back as ``--config`` to replay the run.
"""

import argparse
from datetime import datetime, timezone
import json
import logging
import math
import os
import sys

import numpy as np

from ._errors import ConfigError, ContractViolation, GELError, InvalidActivationError, SolverError
from .activations import ACTIVATION_KINDS, gauss_moments
from .config import ExperimentConfig, load_config
from .diagnostics import admissibility_check, clt_gap, covariance_gap, product_tanh
from .io import (
    atomic_write_text,
    build_manifest,
    read_matrix_blob,
    read_matrix_csv,
    table_to_csv_text,
    write_manifest,
)
from .lab import (
    PATH_COLUMNS,
    SWEEP_COLUMNS,
    build_instance,
    derivative_estimates,
    lindeberg_path_audit,
    run_trial,
    sweep_p,
    trial_seed,
)

log = logging.getLogger("gelab")

DERIVATIVE_COLUMNS = (
    "p", "seed", "tau_step", "rho_forward", "rho_direct", "rho_backward", "rho_sandwich",
    "pi_forward", "pi_direct", "pi_backward", "pi_sandwich",
)
SUMMARY_COLUMNS = (
    "p", "n_ok", "n_failed", "mean_e_train_A", "mean_e_train_B", "mean_e_gen_A", "mean_e_gen_B",
    "std_e_train_A", "std_e_train_B", "std_e_gen_A", "std_e_gen_B",
    "mean_abs_gap_e_train", "mean_abs_gap_e_gen",
)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args):
    path = args.out_dir or os.environ.get("GEL_OUT_DIR") or "gel-out"
    os.makedirs(path, exist_ok=True)
    return path


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_(master_seed=args.seed)
    return cfg


def _p_values(args, cfg):
    return [args.p] if getattr(args, "p", None) is not None else list(cfg.p_grid)


def _finish(command, cfg, out_dir, outputs, seeds, started, incomplete=False, extra=None):
    manifest = build_manifest(command, cfg, outputs, out_dir, seeds=seeds, incomplete=incomplete,
                              started=started, extra=extra)
    path = os.path.join(out_dir, f"{command}.manifest.json")
    write_manifest(path, manifest)
    print(f"wrote {', '.join(outputs)} and {os.path.basename(path)} to {out_dir}")
    return manifest


def _seed_entry(cfg, p, idx):
    return {"p": int(p), "trial_index": int(idx), "seed": trial_seed(cfg.master_seed, p, idx)}


# ---------------------------------------------------------------- subcommands


def cmd_moments(args):
    consts = gauss_moments(args.activation, args.order)
    print(f"activation = {args.activation}")
    print(f"order = {args.order}")
    print(f"mu0 = {consts.mu0:.17g}")
    print(f"mu1 = {consts.mu1:.17g}")
    print(f"mu2 = {consts.mu2:.17g}")
    return 0


def cmd_trial(args):
    cfg, out_dir, started = _config(args), _out_dir(args), _now()
    p = _p_values(args, cfg)[0]
    entry = _seed_entry(cfg, p, args.trial_index)
    res = run_trial(cfg, p, entry["seed"])
    atomic_write_text(os.path.join(out_dir, "trial.csv"), table_to_csv_text([res.row()], SWEEP_COLUMNS))
    print(f"p={p} seed={entry['seed']}")
    for tag in ("A", "B"):
        print(f"  model {tag}: E_train={getattr(res, 'e_train_' + tag):.6f} "
              f"E_gen={getattr(res, 'e_gen_' + tag):.6f} converged={getattr(res, 'converged_' + tag)}")
    _finish("trial", cfg, out_dir, ["trial.csv"], [entry], started, incomplete=not res.ok,
            extra={"p": p, "trial_index": args.trial_index})
    return 0


def cmd_sweep(args):
    cfg, out_dir, started = _config(args), _out_dir(args), _now()
    report = sweep_p(cfg, range(cfg.n_trials), jobs=args.jobs)
    rows = [r.row() for r in report.rows]
    atomic_write_text(os.path.join(out_dir, "sweep.csv"), table_to_csv_text(rows, SWEEP_COLUMNS))
    atomic_write_text(os.path.join(out_dir, "sweep_summary.csv"),
                      table_to_csv_text(report.aggregates, SUMMARY_COLUMNS))
    for agg in report.aggregates:
        print(f"p={agg['p']:4d} ok={agg['n_ok']:3d}  E_train A/B = {agg['mean_e_train_A']:.4f}/"
              f"{agg['mean_e_train_B']:.4f}  E_gen A/B = {agg['mean_e_gen_A']:.4f}/{agg['mean_e_gen_B']:.4f}")
    seeds = [_seed_entry(cfg, p, i) for p in cfg.p_grid for i in range(cfg.n_trials)]
    _finish("sweep", cfg, out_dir, ["sweep.csv", "sweep_summary.csv"], seeds, started,
            incomplete=report.incomplete)
    return 0


def cmd_derivatives(args):
    cfg, out_dir, started = _config(args), _out_dir(args), _now()
    rows, seeds = [], []
    for p in _p_values(args, cfg):
        entry = _seed_entry(cfg, p, args.trial_index)
        est = derivative_estimates(cfg, p, entry["seed"], tau_step=args.step)
        rows.append({
            "p": p, "seed": entry["seed"], "tau_step": est.tau_step,
            "rho_forward": est.rho_forward, "rho_direct": est.rho_direct, "rho_backward": est.rho_backward,
            "rho_sandwich": est.rho_sandwich_holds,
            "pi_forward": est.pi_forward, "pi_direct": est.pi_direct, "pi_backward": est.pi_backward,
            "pi_sandwich": est.pi_sandwich_holds,
        })
        seeds.append(entry)
        for name in ("rho", "pi"):
            f, d, b = (getattr(est, f"{name}_{k}") for k in ("forward", "direct", "backward"))
            ok = getattr(est, f"{name}_sandwich_holds")
            print(f"p={p} {name}: {f:.10f} <= {d:.10f} <= {b:.10f}  [{'holds' if ok else 'VIOLATED'}]")
    atomic_write_text(os.path.join(out_dir, "derivatives.csv"), table_to_csv_text(rows, DERIVATIVE_COLUMNS))
    incomplete = not all(r["rho_sandwich"] and r["pi_sandwich"] for r in rows)
    _finish("derivatives", cfg, out_dir, ["derivatives.csv"], seeds, started, incomplete=incomplete)
    return 0


def _load_matrix(path):
    if path.endswith(".csv"):
        return read_matrix_csv(path)
    return read_matrix_blob(path)[0]


def cmd_diagnose(args):
    cfg, out_dir, started = _config(args), _out_dir(args), _now()
    consts = gauss_moments(cfg.activation, cfg.quad_order)
    reports, seeds = [], []
    if args.features:
        F = _load_matrix(args.features)
        if args.teacher:
            xi = _load_matrix(args.teacher).ravel()
        else:
            xi = build_instance(cfg.with_(d=F.shape[0]), 1, cfg.master_seed).teacher.xi
        cases = [("file", F, xi, None)]
    else:
        cases = []
        for p in _p_values(args, cfg):
            entry = _seed_entry(cfg, p, args.trial_index)
            inst = build_instance(cfg, p, entry["seed"])
            cases.append((entry, inst.F, inst.teacher.xi, inst))
            seeds.append(entry)
    for entry, F, xi, inst in cases:
        p = F.shape[1]
        adm = admissibility_check(F, xi)
        report = {"p": p, "d": F.shape[0], "source": entry if entry == "file" else entry["seed"],
                  "admissibility": adm.to_dict()}
        if not args.skip_gaps and p > 0:
            n_mc = max(cfg.fresh_samples, 10 * p)
            gap, band = covariance_gap(F, cfg.activation, consts, n_mc, cfg.master_seed)
            report["covariance_gap"] = {"gap": gap, "band": band, "n_mc": n_mc}
            gap, band = clt_gap(F, xi, np.ones(p), product_tanh, n_mc, cfg.master_seed,
                                activation=cfg.activation, consts=consts)
            report["clt_gap"] = {"gap": gap, "band": band, "n_mc": n_mc, "test_fn": "tanh(x) tanh(s)"}
        if inst is not None and not args.skip_solve:
            # descriptive only: sup-norm growth of the solutions is logged, never gated
            w_inf = {}
            for model in ("kernel", "surrogate"):
                res = inst.solve(model)
                w_inf[model] = float(np.max(np.abs(res.w_star)))
            report["solution_sup_norm"] = {**w_inf, "log_p": math.log(p)}
        reports.append(report)
        status = "pass" if adm.passed else "fail"
        line = (f"p={p}: A1 margin {adm.a1_margin:.4f} (<= {adm.a1_threshold:.4f}), "
                f"||F|| {adm.a2_norm:.4f} (<= {adm.a2_threshold:.4f}) -> {status}")
        if "covariance_gap" in report:
            line += (f"; cov gap {report['covariance_gap']['gap']:.4f} +- {report['covariance_gap']['band']:.4f}"
                     f"; clt gap {report['clt_gap']['gap']:.5f} +- {report['clt_gap']['band']:.5f}")
        print(line)
    text = json.dumps({"reports": reports}, indent=2, sort_keys=True, default=float) + "\n"
    atomic_write_text(os.path.join(out_dir, "diagnose.json"), text)
    _finish("diagnose", cfg, out_dir, ["diagnose.json"], seeds, started,
            incomplete=not all(r["admissibility"]["pass_a1"] and r["admissibility"]["pass_a2"] for r in reports))
    return 0


def cmd_audit_path(args):
    cfg, out_dir, started = _config(args), _out_dir(args), _now()
    p = _p_values(args, cfg)[0]
    entry = _seed_entry(cfg, p, args.trial_index)
    audit = lindeberg_path_audit(cfg, p, entry["seed"], k_stride=args.stride or cfg.path_stride,
                                 with_surrogates=not args.no_surrogates)
    atomic_write_text(os.path.join(out_dir, "path.csv"), table_to_csv_text(audit.rows, PATH_COLUMNS))
    summary = {"phi_A_over_p": audit.phi_A / p, "phi_B_over_p": audit.phi_B / p,
               "max_step": audit.max_step, "mean_step": audit.mean_step, "total_drift": audit.total_drift}
    print(f"p={p} n={audit.n}: Phi_A/p={summary['phi_A_over_p']:.10f} Phi_B/p={summary['phi_B_over_p']:.10f}")
    print(f"  max step {audit.max_step:.3e}, mean step {audit.mean_step:.3e}, drift {audit.total_drift:.3e}")
    _finish("audit-path", cfg, out_dir, ["path.csv"], [entry], started, extra=summary)
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value text, JSON, or a run manifest)")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out-dir", default=None, help="output directory (default: $GEL_OUT_DIR or ./gel-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gel", description="Gaussian-equivalence experiments for random-feature ERM")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", parents=[common], help="print Gaussian-equivalence constants")
    p.add_argument("--activation", default="tanh")
    p.add_argument("--order", type=int, default=101)
    p.set_defaults(func=cmd_moments)

    def with_trial_opts(sp):
        sp.add_argument("--p", type=int, default=None, help="feature count (default: first of p_grid)")
        sp.add_argument("--trial-index", type=int, default=0)
        return sp

    with_trial_opts(sub.add_parser("trial", parents=[common], help="one coupled trial")).set_defaults(func=cmd_trial)
    sub.add_parser("sweep", parents=[common], help="full p-grid sweep").set_defaults(func=cmd_sweep)

    p = with_trial_opts(sub.add_parser("derivatives", parents=[common], help="tilt difference quotients"))
    p.add_argument("--step", type=float, default=None, help="tilt step (default: tilt.step or min(tau*, 0.02))")
    p.set_defaults(func=cmd_derivatives)

    p = with_trial_opts(sub.add_parser("diagnose", parents=[common], help="admissibility and gap diagnostics"))
    p.add_argument("--features", help="feature matrix to check (GEL1 blob or CSV) instead of sampling one")
    p.add_argument("--teacher", help="teacher direction for --features (GEL1 blob or CSV)")
    p.add_argument("--skip-gaps", action="store_true", help="admissibility only")
    p.add_argument("--skip-solve", action="store_true", help="skip the solution sup-norm report")
    p.set_defaults(func=cmd_diagnose)

    p = with_trial_opts(sub.add_parser("audit-path", parents=[common], help="kernel-to-surrogate path audit"))
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--no-surrogates", action="store_true", help="skip the leave-one-out surrogates")
    p.set_defaults(func=cmd_audit_path)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "moments" and args.activation not in ACTIVATION_KINDS:
        print(f"error: unknown activation {args.activation!r}; expected one of {ACTIVATION_KINDS}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvalidActivationError, ContractViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, GELError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
