"""Experiment harness: generate, train, evaluate, and check from the command line.

Subcommands share the flags --config PATH, --seed U64, --out DIR, --jobs N,
and --format {json,csv}; flags win over config-file values. All outputs are
deterministic under a fixed seed and config; wall-clock timestamps appear only
in the run log (LDS_SGD_LOG selects its verbosity). Floats are printed with 17
significant digits so files round-trip exactly.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 IO failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import gen as gen_mod
from . import lds, learn
from . import risk as risk_mod
from .acq import (
    DEFAULT_CONE,
    Cone,
    ProjectionError,
    build_polytope,
    is_acquiescent,
    no_blowup_ok,
    spectral_radius_ok,
)
from .poly import char_poly, gamma_quantity, roots

log = logging.getLogger("ldsid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's 2
        raise UsageError(message)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _setup_logging(out_dir: str | None) -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}.get(
        os.environ.get("LDS_SGD_LOG", "warning").lower(), logging.WARNING
    )
    log.setLevel(level)
    log.handlers.clear()
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(console)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        fh = logging.FileHandler(os.path.join(out_dir, "run.log"))
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(fh)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _cone_from(config: dict) -> Cone:
    c = config.get("cone")
    if c is None:
        return DEFAULT_CONE
    return Cone(float(c["tau0"]), float(c["tau1"]), float(c["tau2"]))


def _echo_config(out_dir: str, config: dict) -> None:
    with open(os.path.join(out_dir, "effective_config.json"), "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _h0_policy(config: dict):
    policy = config.get("h0_policy", "zero")
    if isinstance(policy, list):
        return (policy[0], float(policy[1]))
    return policy


def cmd_gen(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is None:
        raise UsageError("gen requires --out")
    spec = gen_mod.GenSpec(
        n=int(config.get("n", 2)),
        alpha=float(config.get("alpha", 0.9)),
        strategy=config.get("strategy", "gaussian_coeff"),
        input_dist=config.get("input_dist", "gaussian"),
        sigma=float(config.get("sigma", 0.0)),
        T=int(config.get("T", 64)),
        N=int(config.get("N", 1)),
        seed=int(config.get("seed", 0)),
    )
    cone = _cone_from(config)
    _setup_logging(args.out)
    teacher = gen_mod.make_teacher(spec, cone, np.random.default_rng(spec.seed))
    manifest = gen_mod.write_dataset(args.out, teacher, spec, _h0_policy(config), cone)
    _echo_config(args.out, {**config, **spec.to_json()})
    log.info("wrote %d trajectories to %s", spec.N, args.out)
    print(f"gen: {spec.N} trajectories, teacher order {teacher.n}, out={args.out}")
    print(f"teacher membership: {manifest['teacher_membership']}")
    return 0


def _train_mode_linreg(config, trajs, out_dir):
    window = int(config.get("window", 4))
    result = learn.linreg_baseline(trajs, window)
    l_in = trajs[0].l_in
    l_out = trajs[0].l_out
    w = result.weights.reshape(window + 1, l_in, l_out)
    if window == 0:
        model = lds.SystemParams(np.zeros(1), np.zeros((l_out, l_in)), w[0].T)
    else:
        # delay-line realization: order = window, a = 0, state block j holds w[j-1]
        C = w[:window].transpose(2, 0, 1).reshape(l_out, window * l_in)
        model = lds.SystemParams(np.zeros(window), C, w[window].T)
    lds.save_system(model, os.path.join(out_dir, "model.json"))
    report = {
        "mode": "linreg",
        "window": window,
        "rows": result.rows,
        "bias_floor": result.bias_floor,
        "weights": [float(v) for v in result.weights.reshape(-1)],
    }
    with open(os.path.join(out_dir, "linreg.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"linreg: window={window} rows={result.rows} bias_floor={_fmt(result.bias_floor)}")
    return model


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is None:
        raise UsageError("train requires --out")
    if args.data is None:
        raise UsageError("train requires --data")
    mode = args.mode or config.get("mode", "proper")
    _setup_logging(args.out)
    teacher, spec, trajs = gen_mod.load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    _echo_config(args.out, {**config, "mode": mode, "data": args.data})

    if mode == "linreg":
        model = _train_mode_linreg(config, trajs, args.out)
        _write_summary(args.out, model, teacher, spec, config)
        return 0

    cone = _cone_from(config)
    alpha = float(config.get("alpha", spec.alpha))
    n_states = int(config.get("n_states", teacher.n))
    if mode == "improper" and n_states <= teacher.n:
        log.warning("improper mode with n_states <= teacher order %d", teacher.n)
    polytope = build_polytope(n_states, alpha, cone)
    sgd = learn.SgdConfig(
        learning_rate=float(config.get("eta", 0.01)),
        passes=int(config.get("passes", 1)),
        t1_fraction=float(config.get("t1_fraction", 0.25)),
        split_beta=config.get("beta"),
        seed=int(config.get("seed", 0)),
        projection=polytope,
    )
    stream = trajs
    if mode == "split":
        beta = int(config.get("beta", 10))
        stream = learn.split_sequences(trajs, beta, teacher.n)
    elif mode not in ("proper", "improper"):
        raise UsageError(f"unknown train mode {mode!r}")

    checkpoint_every = int(config.get("checkpoint_every", 0))

    def checkpoint(i, params):
        lds.save_system(params, os.path.join(args.out, f"model_{i:07d}.json"))

    result = learn.improper_train(
        stream,
        sgd,
        n_states,
        teacher=teacher if teacher.n == n_states else None,
        sigma=spec.sigma,
    ) if mode == "improper" else learn.sgd_train(
        stream,
        sgd,
        init=lds.SystemParams(
            np.zeros(n_states),
            np.zeros((teacher.l_out, n_states * teacher.l_in)),
            np.zeros((teacher.l_out, teacher.l_in)),
        ),
        teacher=teacher if teacher.n == n_states else None,
        sigma=spec.sigma,
        callback=checkpoint if checkpoint_every else None,
        callback_every=checkpoint_every,
    )
    lds.save_system(result.params, os.path.join(args.out, "model.json"))
    learn.history_to_csv(result.history, os.path.join(args.out, "history.csv"))
    _write_summary(args.out, result.params, teacher, spec, config, result.history)
    print(
        f"train[{mode}]: {len(result.history)} steps, "
        f"final partial loss {_fmt(result.history.partial_loss[-1])}"
    )
    return 0


def _write_summary(out_dir, model, teacher, spec, config, history=None) -> None:
    summary = {"model_order": model.n, "teacher_order": teacher.n}
    try:
        err = risk_mod.transfer_grid_error(model, teacher, M=int(config.get("grid", 512)))
        summary["transfer_grid_error"] = err
        if model.n == teacher.n and model.l_in == teacher.l_in:
            pop = risk_mod.population_risk_closed(model, teacher, spec.T, spec.sigma)
            summary["population_risk"] = pop
            summary["excess_risk"] = pop - spec.sigma**2 * teacher.l_out
    except ValueError as exc:
        summary["error"] = str(exc)
    if history is not None and len(history):
        summary["final_partial_loss"] = float(history.partial_loss[-1])
        summary["steps"] = len(history)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    if args.model is None or args.teacher is None:
        raise UsageError("eval requires --model and --teacher")
    _setup_logging(args.out)
    model = lds.load_system(args.model)
    teacher = lds.load_system(args.teacher)
    T = int(config.get("T", 128))
    sigma = float(config.get("sigma", 0.0))
    M = int(config.get("grid", 4096))
    report: dict = {"T": T, "sigma": sigma}
    try:
        base = risk_mod.risk_report(model, teacher, T, sigma)
        report.update(base.to_json())
        report["idealized_freq"] = risk_mod.idealized_risk_freq(model, teacher, M)
        mc_trials = int(config.get("mc_trials", 0))
        if mc_trials > 0:
            mc_mean, mc_se = risk_mod.mc_population_risk(
                model, teacher, T, sigma, mc_trials,
                seed=int(config.get("seed", 0)), jobs=max(1, args.jobs),
            )
            report["population_mc"] = mc_mean
            report["population_mc_se"] = mc_se
        report["population_sweep"] = {
            str(tp): risk_mod.longer_sequence_risk(model, teacher, int(tp), sigma)
            for tp in config.get("T_prime", [2 * T, 4 * T])
        }
        theta, errs = risk_mod.transfer_error_curve(model, teacher, M=512)
        report["transfer_error_max"] = float(errs.max())
        report["transfer_error_rms"] = float(np.sqrt(np.mean(errs**2)))
        curve = list(zip(theta.tolist(), errs.tolist()))
    except ValueError as exc:
        report["error"] = str(exc)
        curve = []

    rows = [(k, report[k]) for k in sorted(report) if isinstance(report[k], float)]
    width = max((len(k) for k, _ in rows), default=10)
    for key, value in rows:
        print(f"{key:<{width}}  {_fmt(value)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _echo_config(args.out, config)
        if args.format == "csv":
            with open(os.path.join(args.out, "report.csv"), "w") as fh:
                fh.write("key,value\n")
                for key, value in rows:
                    fh.write(f"{key},{_fmt(value)}\n")
        else:
            with open(os.path.join(args.out, "report.json"), "w") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(os.path.join(args.out, "transfer_error_curve.csv"), "w") as fh:
            fh.write("theta,error\n")
            for th, err in curve:
                fh.write(f"{_fmt(th)},{_fmt(err)}\n")
    return 0


def cmd_check(args) -> int:
    config = _load_config(args.config)
    if args.model is None and args.coeffs is None:
        raise UsageError("check requires --model or --coeffs")
    _setup_logging(args.out)
    if args.model is not None:
        a = lds.load_system(args.model).a
    else:
        with open(args.coeffs) as fh:
            data = json.load(fh)
        a = np.asarray(data["a"] if isinstance(data, dict) else data, dtype=float)
    alpha = float(config.get("alpha", 1.0))
    cone = _cone_from(config)
    report = is_acquiescent(a, alpha, cone)
    p = char_poly(a)
    rho = float(np.abs(roots(p)).max())
    out = {
        "order": len(a),
        "alpha": alpha,
        "member": report.ok,
        "slope_margin": report.slope_margin,
        "lower_margin": report.lower_margin,
        "upper_margin": report.upper_margin,
        "worst_angle": report.worst_angle,
        "spectral_radius": rho,
        "spectral_radius_ok": spectral_radius_ok(a, alpha),
    }
    if report.ok:
        blow = no_blowup_ok(a, alpha, cone.tau1, K=int(config.get("K", 2000)), cone=cone)
        out["no_blowup_ok"] = bool(blow)
        out["discounted_energy"] = blow.discounted_sum
        out["discounted_energy_bound"] = blow.discounted_bound
    try:
        gamma = gamma_quantity(p)
        out["gamma"] = gamma
        if rho < 1.0:
            h2 = float(np.linalg.norm(p.coeffs))
            out["suggested_extension_degree"] = int(
                max(math.ceil(math.log(max(np.sqrt(len(a)) * gamma * h2, 1.0)) / (1.0 - rho)), 0)
            )
    except ValueError as exc:
        out["gamma_error"] = str(exc)
    for key in sorted(out):
        value = out[key]
        print(f"{key}: {_fmt(value) if isinstance(value, float) else value}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _echo_config(args.out, config)
        with open(os.path.join(args.out, "check.json"), "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="ldsid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--format", choices=["json", "csv"], default="json")

    p_gen = sub.add_parser("gen", help="generate a teacher and dataset")
    shared(p_gen)
    p_train = sub.add_parser("train", help="train on a dataset")
    shared(p_train)
    p_train.add_argument("--data", default=None)
    p_train.add_argument(
        "--mode", choices=["proper", "split", "improper", "linreg"], default=None
    )
    p_eval = sub.add_parser("eval", help="risk report for a model against a teacher")
    shared(p_eval)
    p_eval.add_argument("--model", default=None)
    p_eval.add_argument("--teacher", default=None)
    p_check = sub.add_parser("check", help="cone membership diagnostics")
    shared(p_check)
    p_check.add_argument("--model", default=None)
    p_check.add_argument("--coeffs", default=None)
    return parser


_COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "check": cmd_check}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"usage error: malformed input ({exc})", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, ProjectionError, learn.TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
