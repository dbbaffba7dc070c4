"""``glfgp`` command-line interface.

Exit status: 0 on success, 2 on invalid input or configuration, 3 on a
numerical failure (bound root not found, factorization failure, ...).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings

import numpy as np

from .bounds import plan
from .data import ingest_csv, synth_1d, synth_2d, write_csv
from .diagnostics import spectral_equivalence_check
from .errors import (BoundFailure, CapacityError, ConditioningError, InvalidArgument,
                     OptimizationError, UnsupportedAnalyticity, UnsupportedFamily)
from .experiment import (ExperimentConfig, load_config, load_dataset, parse_config,
                         run_experiment)
from .features import approx_kernel_matrix, build_feature_matrix, rff_build
from .gpr import load_gpr_model, predict, save_gpr_model, train
from .hyperopt import OptOptions, learn
from .kernels import HyperParams, bounding_box_from_data, kernel_matrix
from .quadrature import POSITIVE_BOX, SYMMETRIC_BOX, tensor_grid

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# flag name -> config key
_OVERRIDES = {"kernel": "kernel", "nu": "nu", "n": "n", "s": "s", "seed": "seed", "out": "out",
              "data": "data", "dim": "dim", "ell_lower": "ell_lower", "ell_upper": "ell_upper",
              "sf2_upper": "sf2_upper", "sf2_lower": "sf2_lower", "sn2_lower": "sn2_lower",
              "sn2_upper": "sn2_upper", "test_fraction": "test_fraction", "max_iter": "max_iter",
              "backends": "backends", "s_sweep": "s_sweep", "rff_seed": "rff_seed"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidArgument(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--kernel", choices=["gaussian", "matern", "laplacian", "cauchy",
                                        "reciprocal_semigroup"])
    p.add_argument("--nu", type=float, help="Matern smoothness")
    p.add_argument("--n", type=int, help="number of samples / target dataset size")
    p.add_argument("--s", help="features per dimension, or 'planned'")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path")
    p.add_argument("--data", help="synth_1d, synth_2d, or a CSV path with header x1..xd,y")
    p.add_argument("--dim", type=int)
    p.add_argument("--ell-lower", type=float)
    p.add_argument("--ell-upper", type=float)
    p.add_argument("--sf2-upper", type=float)
    p.add_argument("--sf2-lower", type=float)
    p.add_argument("--sn2-lower", type=float)
    p.add_argument("--sn2-upper", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glfgp", description="Low-rank GP regression from "
                     "quadrature of the spectral density")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    _common(p)
    p.add_argument("--kind", choices=["1d", "2d"], default="1d")

    p = sub.add_parser("bounds", help="print truncation box and quadrature sizes")
    _common(p)
    p.add_argument("--R", type=float, default=2.0, help="data bounding-box side length")
    p.add_argument("--format", choices=["table", "kv", "both"], default="both")

    p = sub.add_parser("fit", help="train a model and save it")
    _common(p)
    p.add_argument("--theta", help="fixed hyperparameters 'theta0,...,sf2,sn2' (default: learn)")
    p.add_argument("--path", choices=["normal_eq", "qr"], default="normal_eq")

    p = sub.add_parser("predict", help="predict with a saved model")
    _common(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("learn", help="learn hyperparameters and write the trace")
    _common(p)
    p.add_argument("--backend", choices=["glf", "rff", "exact"], default="glf")

    p = sub.add_parser("audit", help="check spectral equivalence at the domain corner")
    _common(p)

    p = sub.add_parser("bench", help="run the backend / feature-count sweep")
    _common(p)
    p.add_argument("--backends", type=lambda t: tuple(x for x in t.split(",") if x))
    p.add_argument("--s-sweep", type=lambda t: tuple(int(x) for x in t.split(",") if x))
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--rff-seed", type=int)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            updates[key] = v
    if "s" in updates and updates["s"] != "planned":
        try:
            int(updates["s"])
        except ValueError:
            raise InvalidArgument(f"--s must be an integer or 'planned', got {updates['s']!r}") from None
    cfg = dataclasses.replace(cfg, **updates)
    # re-validate through the text parser so flags and files follow one schema
    from .experiment import format_config
    return parse_config(format_config(cfg))


def _whole_dataset(cfg):
    return load_dataset(dataclasses.replace(cfg, test_fraction=0.0))


def _glf_features(cfg, ds, y):
    spec = cfg.spec(ds.dim)
    spec = spec.with_bounding_box(bounding_box_from_data(spec, ds.X))
    domain = cfg.domain(ds.dim)
    override = None if cfg.s == "planned" else int(cfg.s)
    bp = plan(spec, domain, ds.n, max_features=cfg.max_features, s_override=override)
    kind = SYMMETRIC_BOX if spec.feature_kind == "fourier" else POSITIVE_BOX
    grid = tensor_grid(bp.U, bp.s, kind)
    return spec, domain, bp, grid


def cmd_synth(args, cfg):
    ds = synth_1d(cfg.n, cfg.seed) if args.kind == "1d" else synth_2d(cfg.n, cfg.seed)
    out = args.out or "-"
    if out == "-":
        import io
        buf = io.StringIO()
        _write_csv_to(buf, ds.X, ds.y)
        sys.stdout.write(buf.getvalue())
    else:
        write_csv(out, ds.X, ds.y)
        print(f"wrote {ds.n} rows to {out}")


def _write_csv_to(fh, X, y):
    fh.write(",".join([f"x{k + 1}" for k in range(X.shape[1])] + ["y"]) + "\n")
    for row, v in zip(X, y):
        fh.write(",".join(repr(float(a)) for a in row) + f",{float(v)!r}\n")


def cmd_bounds(args, cfg):
    dim = cfg.dim or 1
    spec = cfg.spec(dim).with_bounding_box(np.full(dim, args.R))
    override = None if cfg.s == "planned" else int(cfg.s)
    bp = plan(spec, cfg.domain(dim), cfg.n, max_features=cfg.max_features, s_override=override)
    if args.format in ("table", "both"):
        print(bp.report())
    if args.format in ("kv", "both"):
        for k, v in bp.as_dict().items():
            print(f"{k}={v}")


def cmd_fit(args, cfg):
    ds = _whole_dataset(cfg)
    spec, domain, bp, grid = _glf_features(cfg, ds, ds.y)
    fm = build_feature_matrix(ds.X, grid, spec, ds.y, path=args.path)
    if args.theta:
        theta = HyperParams.from_vector([float(t) for t in args.theta.split(",")])
    else:
        theta, tr = learn("glf", fm, domain, options=OptOptions(max_iter=cfg.max_iter))
    model = train(fm, theta)
    out = args.out or "model.npz"
    save_gpr_model(model, out)
    mse = float(np.mean((predict(model, ds.X) - ds.y) ** 2))
    print(f"theta = {' '.join(f'{t:.6g}' for t in theta.as_vector())}")
    print(f"s_tot = {grid.total_size}  training MSE = {mse:.6g}")
    print(f"wrote model to {out}")


def cmd_predict(args, cfg):
    model, offset = load_gpr_model(args.model)
    if cfg.data in ("synth_1d", "synth_2d"):
        ds = _whole_dataset(cfg)
    else:
        ds = ingest_csv(cfg.data, model.spec.dim)
    pred = predict(model, ds.X) + offset
    out = args.out or "-"
    if out == "-":
        _write_csv_to(sys.stdout, ds.X, pred)
    else:
        write_csv(out, ds.X, pred)
        print(f"wrote {len(pred)} predictions to {out}; MSE against file targets "
              f"{float(np.mean((pred - ds.y) ** 2)):.6g}")


def cmd_learn(args, cfg):
    ds = _whole_dataset(cfg)
    opts = OptOptions(max_iter=cfg.max_iter)
    if args.backend == "glf":
        spec, domain, bp, grid = _glf_features(cfg, ds, ds.y)
        theta, tr = learn("glf", build_feature_matrix(ds.X, grid, spec, ds.y), domain, options=opts)
    else:
        spec = cfg.spec(ds.dim)
        domain = cfg.domain(ds.dim)
        if args.backend == "rff":
            s = 100 if cfg.s == "planned" else int(cfg.s)
            theta, tr = learn("rff", rff_build(ds.X, spec, s, cfg.rff_seed), domain, ds.y, options=opts)
        else:
            theta, tr = learn("exact", (spec, ds.X), domain, ds.y, options=opts)
    print(f"theta* = {' '.join(f'{t:.6g}' for t in theta.as_vector())}")
    print(f"log marginal likelihood {tr.values[-1]:.10g} after {tr.iterations} iterations "
          f"({tr.reason}), {tr.wall_time:.3f} s")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(tr.to_csv())
        print(f"wrote trace to {args.out}")


def cmd_audit(args, cfg):
    ds = _whole_dataset(cfg)
    spec, domain, bp, grid = _glf_features(cfg, ds, ds.y)
    theta = domain.corner()
    K = kernel_matrix(spec, theta, ds.X)
    Ka = approx_kernel_matrix(spec, grid, theta, ds.X)
    print(bp.report())
    print(spectral_equivalence_check(K, Ka).summary())


def cmd_bench(args, cfg):
    res = run_experiment(dataclasses.replace(cfg, out=args.out or cfg.out))
    print(f"{'backend':>8} {'s':>6} {'mse':>14} {'learn s':>10}")
    for r in res.rows:
        print(f"{r.backend:>8} {r.s:>6d} {r.mse:14.6g} {r.learn_seconds:10.3f}")
    for name, p in res.files.items():
        print(f"wrote {p}")


COMMANDS = {"synth": cmd_synth, "bounds": cmd_bounds, "fit": cmd_fit, "predict": cmd_predict,
            "learn": cmd_learn, "audit": cmd_audit, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            COMMANDS[args.command](args, cfg)
        return EXIT_OK
    except (InvalidArgument, CapacityError, UnsupportedAnalyticity, UnsupportedFamily,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BoundFailure, ConditioningError, OptimizationError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
