"""Marginal-likelihood maximization over a hyperparameter box.

The search runs in log coordinates: projected gradient ascent with an Armijo
backtracking line search, optionally accelerated by limited-memory
quasi-Newton directions restricted to the free variables.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import GlfError, InvalidArgument, OptimizationError
from .features import COUNTERS, FeatureModel, RffModel
from .gpr import _require_targets, exact_gpr, likelihood_gradient, rff_likelihood
from .kernels import HyperDomain, HyperParams, KernelSpec

__all__ = ["HyperDomain", "OptOptions", "OptTrace", "GlfObjective", "RffObjective",
           "ExactObjective", "FunctionObjective", "make_objective", "maximize", "learn",
           "profile_likelihood"]


# ---------------------------------------------------------------------------
# objectives: callables returning (value, gradient in natural coordinates)

class GlfObjective:
    backend = "glf"

    def __init__(self, features: FeatureModel, y=None, path: str | None = None):
        self.features = _require_targets(features, y)
        self.path = path
        self.evaluations = 0

    def __call__(self, theta: HyperParams):
        self.evaluations += 1
        r = likelihood_gradient(self.features, theta, path=self.path)
        return r.value, r.grad


class RffObjective:
    backend = "rff"

    def __init__(self, model: RffModel, y):
        self.model = model
        self.y = np.asarray(y, dtype=float)
        self.evaluations = 0

    def __call__(self, theta: HyperParams):
        self.evaluations += 1
        r = rff_likelihood(self.model, theta, self.y)
        return r.value, r.grad


class ExactObjective:
    backend = "exact"

    def __init__(self, spec: KernelSpec, X, y):
        self.spec, self.X, self.y = spec, X, np.asarray(y, dtype=float)
        self.evaluations = 0

    def __call__(self, theta: HyperParams):
        self.evaluations += 1
        r = exact_gpr(self.spec, theta, self.X, self.y)
        return r.value, r.grad


class FunctionObjective:
    """Wrap ``fn(vector) -> (value, grad)`` over ``[theta0..., sf2, sn2]``."""

    backend = "function"

    def __init__(self, fn):
        self.fn = fn
        self.evaluations = 0

    def __call__(self, theta: HyperParams):
        self.evaluations += 1
        return self.fn(theta.as_vector())


def make_objective(backend: str, source, y=None):
    if backend == "glf":
        return GlfObjective(source, y)
    if backend == "rff":
        return RffObjective(source, y)
    if backend == "exact":
        spec, X = source
        return ExactObjective(spec, X, y)
    raise InvalidArgument(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# optimizer

@dataclass(frozen=True)
class OptOptions:
    max_iter: int = 500
    gtol: float = 1e-6
    ftol: float = 1e-12
    memory: int = 8
    c1: float = 1e-4
    max_backtracks: int = 60


@dataclass
class OptTrace:
    thetas: list = field(default_factory=list)
    values: list = field(default_factory=list)
    pg_norms: list = field(default_factory=list)
    reason: str = ""
    wall_time: float = 0.0
    evaluations: int = 0
    gram_builds: int = 0
    rff_builds: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.values) - 1, 0)

    def to_csv(self) -> str:
        if not self.thetas:
            return "iter,value,pg_norm\n"
        k = len(self.thetas[0])
        head = ["iter", "value", "pg_norm"] + [f"theta_{i}" for i in range(k)]
        rows = [",".join(head)]
        for i, (t, v, g) in enumerate(zip(self.thetas, self.values, self.pg_norms)):
            rows.append(",".join([str(i), repr(float(v)), repr(float(g))] + [repr(float(x)) for x in t]))
        return "\n".join(rows) + "\n"


def _evaluate(objective, x):
    theta = HyperParams.from_vector(np.exp(x))
    try:
        f, g = objective(theta)
    except (GlfError, np.linalg.LinAlgError, FloatingPointError):
        return -math.inf, None
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        return -math.inf, None
    # chain rule into log coordinates
    return f, g * np.exp(x)


def _lbfgs_direction(g, S, Y):
    """Two-loop recursion for an ascent direction (curvature pairs of -f)."""
    q = g.copy()
    alphas = []
    for s, y in reversed(list(zip(S, Y))):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    s, y = S[-1], Y[-1]
    q *= float(s @ y) / float(y @ y)
    for a, rho, s, y in reversed(alphas):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def maximize(objective, domain: HyperDomain, *, start: HyperParams | None = None,
             options: OptOptions | None = None) -> tuple[HyperParams, OptTrace]:
    """Maximize ``objective`` over ``domain`` starting from ``start`` (default:
    the domain corner)."""
    opts = options or OptOptions()
    lo, hi = np.log(domain.lower), np.log(domain.upper)
    start = start or domain.corner()
    x = np.clip(np.log(start.as_vector()), lo, hi)
    if x.shape != lo.shape:
        raise InvalidArgument("start point and domain have different sizes")

    counters0 = (COUNTERS["gram_builds"], COUNTERS["rff_builds"])
    t0 = time.perf_counter()
    evals = 0
    f, g = _evaluate(objective, x)
    evals += 1
    if g is None:
        raise OptimizationError("log marginal likelihood is not finite at the starting point "
                                f"{np.exp(x)}")
    trace = OptTrace()
    S, Y = [], []

    def pg_norm(x, g):
        return float(np.max(np.abs(np.clip(x + g, lo, hi) - x)))

    reason = "max_iter"
    for it in range(opts.max_iter + 1):
        pgn = pg_norm(x, g)
        trace.thetas.append(np.exp(x))
        trace.values.append(f)
        trace.pg_norms.append(pgn)
        if pgn <= opts.gtol * (1 + abs(f)):
            reason = "gtol"
            break
        if it == opts.max_iter:
            break
        blocked = ((x <= lo) & (g < 0)) | ((x >= hi) & (g > 0))
        d = None
        if S and opts.memory > 0:
            d = _lbfgs_direction(g, S, Y)
            d[blocked] = 0.0
            if not float(g @ d) > 0:
                d = None
                S.clear()
                Y.clear()
        if d is None:
            d = np.where(blocked, 0.0, g)
            step = min(1.0, 1.0 / max(float(np.max(np.abs(d))), 1e-300))
        else:
            step = 1.0

        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = np.clip(x + step * d, lo, hi)
            f_new, g_new = _evaluate(objective, x_new)
            evals += 1
            if g_new is not None and f_new >= f + opts.c1 * float(g @ (x_new - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            reason = "line_search"
            break

        s_vec, y_vec = x_new - x, g - g_new
        if float(s_vec @ y_vec) > 1e-10 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        improvement = f_new - f
        x, f, g = x_new, f_new, g_new
        if improvement <= opts.ftol * (1 + abs(f)):
            pgn = pg_norm(x, g)
            trace.thetas.append(np.exp(x))
            trace.values.append(f)
            trace.pg_norms.append(pgn)
            reason = "gtol" if pgn <= opts.gtol * (1 + abs(f)) else "ftol"
            break

    trace.reason = reason
    trace.wall_time = time.perf_counter() - t0
    trace.evaluations = evals
    trace.gram_builds = COUNTERS["gram_builds"] - counters0[0]
    trace.rff_builds = COUNTERS["rff_builds"] - counters0[1]
    return HyperParams.from_vector(np.exp(x)), trace


def learn(backend, source, domain: HyperDomain, y=None, *, options: OptOptions | None = None,
          start: HyperParams | None = None) -> tuple[HyperParams, OptTrace]:
    """Learn hyperparameters with the ``glf``, ``rff`` or ``exact`` backend.

    ``source`` is a :class:`FeatureModel` (glf), an :class:`RffModel` (rff) or a
    ``(spec, X)`` pair (exact).  ``backend`` may also be a ready objective.
    """
    objective = backend if callable(backend) else make_objective(backend, source, y)
    return maximize(objective, domain, start=start, options=options)


def _coordinate_index(domain: HyperDomain, coordinate) -> int:
    k = len(domain.lower)
    if isinstance(coordinate, str):
        names = ([f"theta0_{i + 1}" for i in range(k - 2)] if k > 3 else ["theta0"]) + ["sf2", "sn2"]
        if coordinate not in names:
            raise InvalidArgument(f"unknown coordinate {coordinate!r}; expected one of {names}")
        return names.index(coordinate)
    if not -k <= int(coordinate) < k:
        raise InvalidArgument(f"coordinate index {coordinate} out of range")
    return int(coordinate) % k


def profile_likelihood(backend, source, domain: HyperDomain, y, coordinate, values, *,
                       theta: HyperParams) -> np.ndarray:
    """Likelihood along one coordinate with the others held at ``theta``.

    Sweep values are clipped into the domain.
    """
    objective = backend if callable(backend) else make_objective(backend, source, y)
    i = _coordinate_index(domain, coordinate)
    base = theta.as_vector()
    vals = np.clip(np.asarray(values, dtype=float), domain.lower[i], domain.upper[i])
    out = np.empty(vals.shape)
    for j, v in enumerate(vals):
        vec = base.copy()
        vec[i] = v
        out[j] = objective(HyperParams.from_vector(vec))[0]
    return out
