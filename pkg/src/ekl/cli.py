"""Command-line interface: ``ekl <command> [options]``.

Every failure prints a single ``error: <kind>: <message>`` line on stderr and
exits with status 2. Output files are written atomically.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .features import ScalarKernelSpec, apply_feature_map
from .harness import (DEFAULT_GAMMAS, DEFAULT_LAMBDAS, METHODS, RESULT_COLUMNS, CvPlan, Dataset,
                      KernelSettings, cross_validate, fit_method, gen_bilinear, learn_model, nmse, ni,
                      split_study, synthetic_study)
from .separability import ppt_check
from .solver import (estimate_kappa, fit_operator_valued, fit_scalar, generalization_bound,
                     predict_features, rademacher_bound, reduce_dimensions)
from .timing import STRUCTURE_CLASSES, TIMING_COLUMNS, BenchSize, timing_benchmark

log = logging.getLogger("ekl")


class UsageError(ValueError):
    pass


def _approx(text: str) -> tuple[str, int | None]:
    if text == "exact":
        return "exact-linear", None
    kind, _, m = text.partition(":")
    if kind not in ("nystrom", "rff") or not m:
        raise UsageError(f"--approx must be exact, nystrom:m or rff:m, got {text!r}")
    return kind, int(m)


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _cv_folds(n: int, wanted: int = 5) -> int:
    folds = min(wanted, n // 2)
    if folds < 2:
        raise UsageError(f"cross-validation needs at least 4 samples, got {n}")
    return folds


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _inputs_for(fit, path, header: bool) -> np.ndarray:
    """Inputs from a CSV holding ``d`` input columns, optionally followed by ``p`` outputs."""
    A = io.load_matrix_csv(path, header)
    d = fit.model.feature_map.d
    if A.shape[1] not in (d, d + fit.p):
        raise UsageError(f"{path} has {A.shape[1]} columns; expected {d} inputs (plus {fit.p} outputs)")
    return A[:, :d]


# Commands --------------------------------------------------------------------------


def cmd_train(args):
    ds = io.load_csv(args.data, args.outputs, header=args.header)
    kind, m = _approx(args.approx)
    settings = KernelSettings(ScalarKernelSpec.parse(args.kernel), kind, m, args.max_iters,
                              args.grad_tol, args.seed)
    if not 0 < args.rank_frac <= 1:
        raise UsageError("--rank-frac must lie in (0, 1]")
    method = "ekl" if args.mode == "ovk" else "ptrekl"
    gamma = None if args.gamma == "cv" else float(args.gamma)
    lam = None if args.lam == "cv" else float(args.lam)
    if gamma is None or lam is None:
        plan = CvPlan(DEFAULT_LAMBDAS if lam is None else (lam,),
                      DEFAULT_GAMMAS if gamma is None else (gamma,),
                      _cv_folds(ds.n), args.seed, args.rank_frac)
        cv = cross_validate(ds, plan, method, settings)
        gamma, lam = cv.best_gamma, cv.best_lambda
        log.info("cross-validation picked lambda=%g gamma=%g", lam, gamma)
    if not lam > 0:
        raise UsageError("--lambda must be positive")
    em, Phi = learn_model(ds.X, ds.Y, gamma, settings, args.rank_frac)
    em = em.with_params(lam=lam)
    fit = fit_operator_valued(em, Phi, ds.Y, lam) if args.mode == "ovk" else fit_scalar(em, Phi, ds.Y, lam)
    io.save_model(args.out, fit, seed=args.seed,
                  extra={"kernel": args.kernel, "approx": args.approx, "rank_frac": args.rank_frac})
    print(f"model p={em.p} m={em.m} r={em.r} lambda={_fmt(lam)} gamma={_fmt(gamma)} -> {args.out}")


def cmd_predict(args):
    fit, _ = io.load_model(args.model)
    X = _inputs_for(fit, args.data, args.header)
    pred = predict_features(fit, apply_feature_map(fit.model.feature_map, X))
    io.save_matrix_csv(args.out, pred)
    print(f"predictions {pred.shape[0]}x{pred.shape[1]} -> {args.out}")


def cmd_eval(args):
    fit, header = io.load_model(args.model)
    ds = io.load_csv(args.data, fit.p, header=args.header)
    pred = predict_features(fit, apply_feature_map(fit.model.feature_map, ds.X))
    err = nmse(pred, ds.Y)
    line = f"nmse={_fmt(err)}"
    if args.krr_baseline:
        train = io.load_csv(args.krr_baseline, fit.p, header=args.header)
        spec = fit.model.feature_map.spec
        settings = KernelSettings(spec, seed=header.get("seed") or 0)
        plan = CvPlan(DEFAULT_LAMBDAS, (0.0,), _cv_folds(train.n), settings.seed)
        cv = cross_validate(train, plan, "krr", settings)
        krr = fit_method("krr", train.X, train.Y, cv.best_lambda, 0.0, settings)
        err_krr = nmse(krr.predict(ds.X), ds.Y)
        line += f" krr_nmse={_fmt(err_krr)} ni={_fmt(ni(err, err_krr))}"
    print(line)


def cmd_synth(args):
    ds = gen_bilinear(args.n, args.p, args.d, args.noise, seed=args.seed)
    io.save_csv(args.out, ds, header=args.header)
    print(f"synthetic n={ds.n} p={ds.p} d={ds.d} seed={args.seed} -> {args.out}")


def cmd_ppt(args):
    if (args.model is None) == (args.gram is None):
        raise UsageError("give exactly one of --model and --gram")
    if args.model is not None:
        fit, _ = io.load_model(args.model)
        M, block = fit.model.dense_D(), fit.model.p
    else:
        if args.block is None:
            raise UsageError("--gram needs --block")
        M, block = io.load_matrix_csv(args.gram), args.block
    print(ppt_check(M, block, tol=args.tol))


def cmd_bounds(args):
    kappa = args.kappa
    if kappa is None:
        if args.data is None:
            raise UsageError("give --kappa or --data (with --kernel)")
        A = io.load_matrix_csv(args.data, args.header)
        kappa, data_dep = estimate_kappa(ScalarKernelSpec.parse(args.kernel), A[:, :A.shape[1] - args.p])
        if data_dep:
            print(f"note: kappa={_fmt(kappa)} estimated from the data", file=sys.stderr)
    print(_fmt(rademacher_bound(args.beta, kappa, args.p, args.n)))
    if args.M is not None:
        if args.emp_risk is None:
            raise UsageError("--M needs --emp-risk")
        print(_fmt(generalization_bound(args.emp_risk, args.beta, kappa, args.p, args.n, args.M, args.delta)))


def cmd_bench_time(args):
    classes = tuple(args.classes.split(",")) if args.classes else STRUCTURE_CLASSES
    unknown = set(classes) - set(STRUCTURE_CLASSES)
    if unknown:
        raise UsageError(f"unknown structure classes {sorted(unknown)}")
    rows = timing_benchmark(BenchSize.parse_grid(args.grid), classes, args.repeats, args.seed)
    io.save_rows(args.out, rows, TIMING_COLUMNS)
    print(f"{len(rows)} timing rows -> {args.out}")


def cmd_reduce(args):
    fit, _ = io.load_model(args.model)
    X = _inputs_for(fit, args.data, args.header)
    Z = reduce_dimensions(fit.model, apply_feature_map(fit.model.feature_map, X))
    io.save_matrix_csv(args.out, Z)
    print(f"coordinates {Z.shape[0]}x{Z.shape[1]} -> {args.out}")


def cmd_experiment(args):
    methods = tuple(args.methods.split(","))
    if set(methods) - set(METHODS):
        raise UsageError(f"--methods must be drawn from {METHODS}")
    kind, m = _approx(args.approx)
    settings = KernelSettings(ScalarKernelSpec.parse(args.kernel), kind, m, args.max_iters,
                              args.grad_tol, args.seed)
    plan = CvPlan(_floats(args.lambdas), _floats(args.gammas), args.folds, args.seed, args.rank_frac)
    seeds = range(args.seed, args.seed + args.repeats)
    if args.data:
        ds = io.load_csv(args.data, args.outputs, header=args.header)
        rows = split_study(ds, args.n, seeds, methods, plan, settings)
    else:
        rows = synthetic_study(args.n, args.p, args.d, seeds, args.n_test, args.noise, methods, plan, settings)
    io.save_rows(args.out, rows, RESULT_COLUMNS)
    for method in methods:
        errs = [r["nmse"] for r in rows if r["method"] == method]
        print(f"{method} median_nmse={_fmt(float(np.median(errs)))}")


# Parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ekl", description="Entangled operator-valued kernel learning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_opts(p, outputs=True):
        p.add_argument("--data", required=True)
        p.add_argument("--header", action="store_true", help="CSV has a header row")
        if outputs:
            p.add_argument("--outputs", type=int, required=True, help="number of output columns p")

    def kernel_opts(p):
        p.add_argument("--kernel", default="linear", help="linear or gaussian[:sigma]")
        p.add_argument("--approx", default="exact", help="exact, nystrom:m or rff:m")
        p.add_argument("--rank-frac", type=float, default=1.0)
        p.add_argument("--max-iters", type=int, default=500)
        p.add_argument("--grad-tol", type=float, default=1e-6)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="learn an entangled kernel and fit the predictor")
    data_opts(p)
    kernel_opts(p)
    p.add_argument("--gamma", default="0.5", help="value in [0, 1] or cv")
    p.add_argument("--lambda", dest="lam", default="1.0", help="positive value or cv")
    p.add_argument("--mode", choices=("ovk", "ptr"), default="ovk")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write p x t predictions")
    p.add_argument("--model", required=True)
    data_opts(p, outputs=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="nMSE of a model on labelled data")
    p.add_argument("--model", required=True)
    data_opts(p, outputs=False)
    p.add_argument("--krr-baseline", metavar="TRAIN_CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="bilinear synthetic data as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ppt", help="positive-partial-transpose check")
    p.add_argument("--model")
    p.add_argument("--gram")
    p.add_argument("--block", type=int)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_ppt)

    p = sub.add_parser("bounds", help="Rademacher and generalization bounds")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--kappa", type=float)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--M", type=float)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--emp-risk", type=float)
    p.add_argument("--data", help="CSV used to estimate kappa when --kappa is absent")
    p.add_argument("--kernel", default="linear")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("bench-time", help="timing benchmark over structure classes")
    p.add_argument("--grid", required=True, help='"n:p:mfrac:rfrac;..."')
    p.add_argument("--classes", help="comma-separated subset of " + ",".join(STRUCTURE_CLASSES))
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_time)

    p = sub.add_parser("reduce", help="reduced coordinates Z for new inputs")
    p.add_argument("--model", required=True)
    data_opts(p, outputs=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("experiment", help="cross-validated method comparison")
    p.add_argument("--data", help="CSV dataset; synthetic bilinear data when absent")
    p.add_argument("--outputs", type=int, help="output columns of --data")
    p.add_argument("--header", action="store_true")
    p.add_argument("--n", type=int, default=20, help="training samples")
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--repeats", type=int, default=10, help="seeds or random splits")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--lambdas", default=",".join(map(repr, DEFAULT_LAMBDAS)))
    p.add_argument("--gammas", default=",".join(map(repr, DEFAULT_GAMMAS)))
    p.add_argument("--folds", type=int, default=5)
    kernel_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment" and args.data and args.outputs is None:
        parser.error("--data needs --outputs")
    try:
        args.func(args)
    except (ValueError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
