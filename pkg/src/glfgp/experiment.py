"""Experiment configuration and the train/test sweep behind ``glfgp bench``.

Configuration is a flat ``key = value`` text file; ``#`` starts a comment and
unknown keys are rejected.  Recognized keys and defaults are listed in
``DEFAULTS``.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .bounds import BoundPlan, plan
from .data import Dataset, ingest_csv, split, synth_1d, synth_2d
from .errors import InvalidArgument
from .features import build_feature_matrix, rff_build
from .gpr import EXACT_MAX_N, exact_gpr, predict, rff_predict, train
from .hyperopt import OptOptions, learn
from .kernels import HyperDomain, KernelSpec, bounding_box_from_data
from .quadrature import POSITIVE_BOX, SYMMETRIC_BOX, tensor_grid

BACKENDS = ("glf", "rff", "exact")


@dataclass
class ExperimentConfig:
    kernel: str = "gaussian"
    nu: float | None = None
    data: str = "synth_1d"
    n: int = 800
    dim: int | None = None
    seed: int = 0
    test_fraction: float = 0.2
    log_y: bool = False
    center_y: bool = False
    anisotropic: bool = False
    ell_lower: float = 0.05
    ell_upper: float | None = None
    sf2_lower: float | None = None
    sf2_upper: float = 4.0
    sn2_lower: float = 0.01
    sn2_upper: float | None = None
    s: str = "planned"
    s_sweep: tuple = (8, 16, 32, 64)
    include_planned: bool = True
    backends: tuple = ("glf", "exact")
    rff_seed: int = 0
    max_iter: int = 500
    max_features: int = 10**6
    out: str = "results"

    def domain(self, dim: int) -> HyperDomain:
        k = dim if self.anisotropic else 1
        lo = np.full(k, self.ell_lower)
        return HyperDomain.from_corner(
            lo, self.sf2_upper, self.sn2_lower,
            theta0_upper=None if self.ell_upper is None else np.full(k, self.ell_upper),
            sf2_lower=self.sf2_lower, sn2_upper=self.sn2_upper)

    def spec(self, dim: int) -> KernelSpec:
        return KernelSpec(self.kernel, dim, self.nu, self.anisotropic)


DEFAULTS = ExperimentConfig()
_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in ("nu", "dim", "ell_upper", "sf2_lower", "sn2_upper") and raw.lower() in ("", "none"):
        return None
    if key in ("n", "dim", "seed", "rff_seed", "max_iter", "max_features"):
        return int(raw)
    if key in ("nu", "test_fraction", "ell_lower", "ell_upper", "sf2_lower", "sf2_upper",
               "sn2_lower", "sn2_upper"):
        return float(raw)
    if key in ("log_y", "center_y", "anisotropic", "include_planned"):
        return _parse_bool(raw)
    if key == "s_sweep":
        return tuple(int(t) for t in raw.replace(" ", "").split(",") if t)
    if key == "backends":
        vals = tuple(t.strip() for t in raw.split(",") if t.strip())
        bad = [b for b in vals if b not in BACKENDS]
        if bad:
            raise ValueError(f"unknown backend(s) {bad}")
        return vals
    if key == "s":
        if raw != "planned":
            int(raw)
        return raw
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise InvalidArgument(f"config line {lineno}: expected key = value")
        key, raw = (t.strip() for t in body.split("=", 1))
        if key not in _FIELDS:
            raise InvalidArgument(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise InvalidArgument(f"config line {lineno}: bad value for {key}: {exc}") from None
    cfg = ExperimentConfig(**{**(base.__dict__ if base else {}), **values})
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.n < 2:
        raise InvalidArgument("n must be at least 2")
    if not 0 <= cfg.test_fraction < 1:
        raise InvalidArgument("test_fraction must be in [0, 1)")
    if any(b not in BACKENDS for b in cfg.backends):
        raise InvalidArgument(f"backends must be among {BACKENDS}")
    if any(s < 1 for s in cfg.s_sweep):
        raise InvalidArgument("feature counts must be positive")


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(str(t) for t in v)
        out.append(f"{name} = {'none' if v is None else v}")
    return "\n".join(out) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data == "synth_1d":
        ds = synth_1d(cfg.n, cfg.seed)
    elif cfg.data == "synth_2d":
        ds = synth_2d(cfg.n, cfg.seed)
    else:
        ds = ingest_csv(cfg.data, cfg.dim, 0.0, cfg.seed, log_y=cfg.log_y)
    return split(ds, cfg.test_fraction, cfg.seed) if cfg.test_fraction > 0 else ds


@dataclass
class SweepRow:
    backend: str
    s: int
    mse: float
    learn_seconds: float
    setup_seconds: float
    theta: np.ndarray
    iterations: int
    reason: str


@dataclass
class ExperimentResult:
    rows: list
    plan: BoundPlan | None
    files: dict = field(default_factory=dict)


def _mse(pred, y) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(y)) ** 2))


def _sweep_sizes(cfg: ExperimentConfig, bp: BoundPlan | None, dim: int) -> list:
    sizes = list(cfg.s_sweep)
    if cfg.s != "planned":
        sizes.append(int(cfg.s))
    elif cfg.include_planned and bp is not None:
        sizes.append(int(bp.s[0]) if dim == 1 else int(round(bp.s_total ** (1.0 / dim))))
    return sorted(set(sizes))


def run_experiment(cfg: ExperimentConfig, *, write: bool = True) -> ExperimentResult:
    """Learn, fit and score every (backend, feature count) cell.

    Writes ``results.csv`` (deterministic for a fixed config), ``timing.csv``
    (wall-clock seconds), ``bounds.txt`` and the two plot-data files.
    """
    validate_config(cfg)
    ds = load_dataset(cfg)
    if ds.X_test is None:
        raise InvalidArgument("a held-out test set is required (test_fraction > 0)")
    y_mean = float(np.mean(ds.y)) if cfg.center_y else 0.0
    y = ds.y - y_mean
    dim = ds.dim
    spec = cfg.spec(dim)
    spec = spec.with_bounding_box(bounding_box_from_data(spec, np.vstack([ds.X, ds.X_test])))
    domain = cfg.domain(dim)
    opts = OptOptions(max_iter=cfg.max_iter)
    kind = SYMMETRIC_BOX if spec.feature_kind == "fourier" else POSITIVE_BOX

    bp = None
    if "glf" in cfg.backends:
        override = None if cfg.s == "planned" else int(cfg.s)
        bp = plan(spec, domain, ds.n, max_features=cfg.max_features, s_override=override)
    sizes = _sweep_sizes(cfg, bp, dim)
    rows = []

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for backend in cfg.backends:
            if backend == "exact":
                if ds.n > EXACT_MAX_N:
                    raise InvalidArgument(f"exact backend refused for n={ds.n} > {EXACT_MAX_N}")
                t0 = time.perf_counter()
                th, tr = learn("exact", (spec, ds.X), domain, y, options=opts)
                t1 = time.perf_counter()
                pred = exact_gpr(spec, th, ds.X, y, ds.X_test, with_grad=False).predictions
                rows.append(SweepRow("exact", ds.n, _mse(pred + y_mean, ds.y_test), t1 - t0, 0.0,
                                     th.as_vector(), tr.iterations, tr.reason))
                continue
            for s in sizes:
                if backend == "glf":
                    t0 = time.perf_counter()
                    grid = tensor_grid(bp.U, [s] * dim, kind)
                    fm = build_feature_matrix(ds.X, grid, spec, y)
                    t1 = time.perf_counter()
                    th, tr = learn("glf", fm, domain, options=opts)
                    t2 = time.perf_counter()
                    pred = predict(train(fm, th), ds.X_test)
                else:
                    if spec.family == "reciprocal_semigroup":
                        raise InvalidArgument("rff backend does not support the semigroup kernel")
                    t0 = time.perf_counter()
                    model = rff_build(ds.X, spec, s, cfg.rff_seed)
                    t1 = time.perf_counter()
                    th, tr = learn("rff", model, domain, y, options=opts)
                    t2 = time.perf_counter()
                    pred = rff_predict(model, th, y, ds.X_test)
                rows.append(SweepRow(backend, s, _mse(pred + y_mean, ds.y_test), t2 - t1, t1 - t0,
                                     th.as_vector(), tr.iterations, tr.reason))

    res = ExperimentResult(rows=rows, plan=bp)
    if write:
        res.files = write_reports(cfg, res)
    return res


RESULT_HEADER = ["backend", "s", "mse", "iterations", "reason", "theta"]
TIMING_HEADER = ["backend", "s", "learn_seconds", "setup_seconds"]


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for r in rows:
        w.writerow([r.backend, r.s, f"{r.mse:.12e}", r.iterations, r.reason,
                    " ".join(f"{t:.12e}" for t in r.theta)])
    return buf.getvalue()


def read_results_csv(text: str) -> list:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(SweepRow(rec["backend"], int(rec["s"]), float(rec["mse"]), math.nan, math.nan,
                             np.array([float(t) for t in rec["theta"].split()]),
                             int(rec["iterations"]), rec["reason"]))
    return rows


def write_reports(cfg: ExperimentConfig, res: ExperimentResult) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    files = {}

    def put(name, text):
        p = os.path.join(cfg.out, name)
        with open(p, "w", newline="") as fh:
            fh.write(text)
        files[name] = p

    put("results.csv", results_csv(res.rows))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_HEADER)
    for r in res.rows:
        w.writerow([r.backend, r.s, f"{r.learn_seconds:.6f}", f"{r.setup_seconds:.6f}"])
    put("timing.csv", buf.getvalue())
    put("plot_mse_vs_s.csv", "backend,s,mse\n" + "".join(
        f"{r.backend},{r.s},{r.mse:.12e}\n" for r in res.rows))
    put("plot_time_vs_s.csv", "backend,s,learn_seconds\n" + "".join(
        f"{r.backend},{r.s},{r.learn_seconds:.6f}\n" for r in res.rows))
    if res.plan is not None:
        put("bounds.txt", res.plan.report() + "\n")
    put("config.txt", format_config(cfg))
    return files
