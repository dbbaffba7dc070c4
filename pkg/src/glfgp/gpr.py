"""Low-rank-plus-ridge GP regression on quadrature feature maps.

With ``W = diag(h)`` the approximate kernel matrix is
``K = sf2 Z W Z^H + sn2 I``.  Every quantity needed for training, the log
marginal likelihood and its gradient is obtained from ``s x s`` work on the
cached ``Z^H Z`` (normal-equations path) or on the triangular factor ``R_Z``
of ``Z`` (QR path).  ``Z`` itself is never touched after the feature build.

The model stores ``Ww`` rather than ``w``: predictions are
``sf2 Z_t (Ww)`` and ``Ww`` stays well scaled when some weights underflow.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._linalg import cholesky_jittered, logdet_from_cholesky
from .errors import CapacityError, ConditioningError, InvalidArgument
from .features import (NORMAL_EQ, QR, FeatureModel, RffModel, feature_block, rff_features,
                       rff_grad, rff_mass, weight_diag)
from .kernels import (CAUCHY, HyperParams, KernelSpec, _as_points, kernel_matrix,
                      kernel_matrix_grad, lengthscales)
from .quadrature import QuadratureGrid

log = logging.getLogger(__name__)

H_FLOOR = 1e-300
EXACT_MAX_N = 5000
_LOG_2PI = math.log(2 * math.pi)


@dataclass
class GprModel:
    spec: KernelSpec
    grid: QuadratureGrid
    theta: HyperParams
    path: str
    Ww: np.ndarray
    w: np.ndarray
    n: int
    trace_F: float
    alpha: np.ndarray | None = None

    def predict(self, X_t) -> np.ndarray:
        return predict(self, X_t)


@dataclass
class LikelihoodReport:
    value: float
    grad: np.ndarray
    trace_terms: np.ndarray
    quadratic_terms: np.ndarray
    names: list = field(default_factory=list)


@dataclass
class _Solve:
    h: np.ndarray
    v: np.ndarray            # W w
    w: np.ndarray
    b: np.ndarray            # Z^H y
    logdet: float
    y_alpha: float
    alpha_sq: float
    trace_F: float
    diag_GF: np.ndarray | None


def _weights(fm: FeatureModel, theta: HyperParams):
    wd = weight_diag(fm.grid, fm.spec, theta)
    h = wd.h
    bad = np.flatnonzero(~np.isfinite(h) | (h < 0))
    if bad.size:
        raise ConditioningError(f"non-finite or negative weights at nodes {bad[:10].tolist()}")
    low = h < H_FLOOR
    if np.any(low):
        warnings.warn(f"{int(low.sum())} quadrature weights below {H_FLOOR:g} were clamped; "
                      "those features are effectively inactive", RuntimeWarning, stacklevel=3)
        h = np.where(low, H_FLOOR, h)
    return h, wd.dh


def _require_targets(fm: FeatureModel, y):
    if y is not None:
        y = np.asarray(y, dtype=float).reshape(-1)
        if fm.y is not None and fm.y.shape == y.shape and np.array_equal(fm.y, y):
            return fm
        if fm.has_targets and fm.X is None:
            raise InvalidArgument("targets differ from the ones the features were built with, "
                                  "and the inputs were not retained")
        return fm.with_targets(y)
    if not fm.has_targets:
        raise InvalidArgument("no targets: build the features with y or pass y")
    return fm


def _solve_normal(fm: FeatureModel, theta: HyperParams, need_diag: bool) -> _Solve:
    h, _ = _weights(fm, theta)
    sf2, sn2 = theta.sf2, theta.sn2
    s, n = fm.s, fm.n
    G = fm.gram
    b = fm.zy
    D = np.sqrt(h)
    B = sf2 * (D[:, None] * G * D[None, :])
    B[np.diag_indices_from(B)] += sn2
    L, _ = cholesky_jittered(B, what="inner system sf2 W^1/2 Z^H Z W^1/2 + sn2 I")
    u = linalg.cho_solve((L, True), D * b)
    v = D * u
    w = u / D
    Linv = linalg.solve_triangular(L, np.eye(s), lower=True)
    trace_F = s - sn2 * float(np.sum(np.abs(Linv) ** 2))
    diag_GF = None
    if need_diag:
        T = Linv @ (D[:, None] * G)
        diag_GF = sf2 * np.sum(np.abs(T) ** 2, axis=0)
    bv = float(np.real(np.vdot(b, v)))
    vGv = float(np.real(np.vdot(v, G @ v)))
    return _Solve(h=h, v=v, w=w, b=b,
                  logdet=(n - s) * math.log(sn2) + logdet_from_cholesky(L),
                  y_alpha=(fm.yty - sf2 * bv) / sn2,
                  alpha_sq=(fm.yty - 2 * sf2 * bv + sf2 * sf2 * vGv) / sn2**2,
                  trace_F=trace_F, diag_GF=diag_GF)


def _solve_qr(fm: FeatureModel, theta: HyperParams, need_diag: bool) -> _Solve:
    if fm.R_Z is None or fm.qy is None:
        raise InvalidArgument("QR path needs features built with path='qr' and targets")
    h, _ = _weights(fm, theta)
    sf2, sn2 = theta.sf2, theta.sn2
    s, n = fm.s, fm.n
    R_Z = fm.R_Z
    c = math.sqrt(sn2 / sf2)
    A = np.vstack([R_Z, np.diag((c / np.sqrt(h)).astype(R_Z.dtype))])
    Q1, R_A = np.linalg.qr(A, mode="reduced")
    dA = np.abs(np.diag(R_A))
    if np.any(~(dA > 0)):
        raise ConditioningError(f"stacked QR factor is singular at nodes {np.flatnonzero(~(dA > 0))[:10].tolist()}")
    Q1t = Q1[:s]
    v = linalg.solve_triangular(R_A, Q1t.conj().T @ fm.qy, lower=False) / sf2
    w = v / h
    b = R_Z.conj().T @ fm.qy
    trace_F = float(np.sum(np.abs(Q1t) ** 2))
    diag_GF = None
    if need_diag:
        diag_GF = np.sum(np.abs(Q1t.conj().T @ R_Z) ** 2, axis=0)
    bv = float(np.real(np.vdot(b, v)))
    vGv = float(np.sum(np.abs(R_Z @ v) ** 2))
    logdet = (n * math.log(sn2) + s * math.log(sf2) + float(np.sum(np.log(h)))
              - s * math.log(sn2) + 2.0 * float(np.sum(np.log(dA))))
    return _Solve(h=h, v=v, w=w, b=b, logdet=logdet,
                  y_alpha=(fm.yty - sf2 * bv) / sn2,
                  alpha_sq=(fm.yty - 2 * sf2 * bv + sf2 * sf2 * vGv) / sn2**2,
                  trace_F=trace_F, diag_GF=diag_GF)


def _solve(fm, theta, need_diag=False, path=None) -> _Solve:
    path = path or fm.path
    if path == QR:
        return _solve_qr(fm, theta, need_diag)
    if path == NORMAL_EQ:
        return _solve_normal(fm, theta, need_diag)
    raise InvalidArgument(f"unknown path {path!r}")


def train(fm: FeatureModel, theta: HyperParams, y=None, *, path: str | None = None) -> GprModel:
    """Solve for the feature-space coefficients ``w = Z^H alpha``."""
    fm = _require_targets(fm, y)
    sol = _solve(fm, theta, path=path)
    alpha = None
    if fm.Z is not None and fm.y is not None:
        alpha = (fm.y - theta.sf2 * np.real(fm.Z @ sol.v)) / theta.sn2
    return GprModel(spec=fm.spec, grid=fm.grid, theta=theta, path=path or fm.path, Ww=sol.v,
                    w=sol.w, n=fm.n, trace_F=sol.trace_F, alpha=alpha)


def predict(model: GprModel, X_t, *, chunk_rows: int = 4096) -> np.ndarray:
    """Posterior mean ``sf2 Z_t W w`` at the rows of ``X_t``."""
    X_t = _as_points(model.spec, X_t)
    if not np.all(np.isfinite(X_t)):
        raise InvalidArgument("test inputs must be finite")
    out = np.empty(X_t.shape[0])
    for a in range(0, X_t.shape[0], chunk_rows):
        Zt = feature_block(model.spec, model.grid.nodes, X_t[a:a + chunk_rows])
        out[a:a + chunk_rows] = model.theta.sf2 * np.real(Zt @ model.Ww)
    return out


def log_marginal_likelihood(fm: FeatureModel, theta: HyperParams, y=None, *,
                            path: str | None = None) -> float:
    fm = _require_targets(fm, y)
    sol = _solve(fm, theta, path=path)
    return -0.5 * sol.y_alpha - 0.5 * sol.logdet - 0.5 * fm.n * _LOG_2PI


def _names(spec: KernelSpec) -> list:
    t = [f"theta0_{k + 1}" for k in range(spec.n_theta0)] if spec.n_theta0 > 1 else ["theta0"]
    return t + ["sf2", "sn2"]


def likelihood_gradient(fm: FeatureModel, theta: HyperParams, y=None, *,
                        path: str | None = None) -> LikelihoodReport:
    """Log marginal likelihood and its gradient over ``[theta0..., sf2, sn2]``."""
    fm = _require_targets(fm, y)
    sol = _solve(fm, theta, need_diag=True, path=path)
    _, dh = _weights(fm, theta)
    sf2, sn2, n = theta.sf2, theta.sn2, fm.n
    value = -0.5 * sol.y_alpha - 0.5 * sol.logdet - 0.5 * n * _LOG_2PI

    w_abs2 = np.abs(sol.w) ** 2
    tr_theta = (sf2 / sn2) * (dh @ (fm.gram_diag - sol.diag_GF))
    quad_theta = sf2 * (dh @ w_abs2)
    wWw = float(np.real(np.vdot(sol.w, sol.v)))
    trace_terms = np.concatenate([tr_theta, [sol.trace_F / sf2, (n - sol.trace_F) / sn2]])
    quadratic_terms = np.concatenate([quad_theta, [wWw, sol.alpha_sq]])
    grad = 0.5 * (quadratic_terms - trace_terms)
    return LikelihoodReport(value=float(value), grad=grad, trace_terms=trace_terms,
                            quadratic_terms=quadratic_terms, names=_names(fm.spec))


# ---------------------------------------------------------------------------
# dense oracle

@dataclass
class ExactResult:
    alpha: np.ndarray
    predictions: np.ndarray | None
    value: float
    grad: np.ndarray
    jitter: float


def exact_gpr(spec: KernelSpec, theta: HyperParams, X, y, X_t=None, *, with_grad: bool = True) -> ExactResult:
    """Dense ``O(n^3)`` GPR used as the reference for every approximation."""
    X = _as_points(spec, X)
    n = X.shape[0]
    if n > EXACT_MAX_N:
        raise CapacityError(f"exact GPR is limited to n <= {EXACT_MAX_N}, got {n}")
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise InvalidArgument(f"got {n} inputs but {y.shape[0]} targets")
    K = kernel_matrix(spec, theta, X)
    L, jitter = cholesky_jittered(K, what="exact kernel matrix")
    if jitter:
        log.warning("exact kernel matrix needed jitter %.3g", jitter)
    alpha = linalg.cho_solve((L, True), y)
    value = -0.5 * float(y @ alpha) - 0.5 * logdet_from_cholesky(L) - 0.5 * n * _LOG_2PI
    grad = np.empty(0)
    if with_grad:
        Kinv = linalg.cho_solve((L, True), np.eye(n))
        grad = np.array([0.5 * float(alpha @ dK @ alpha) - 0.5 * float(np.sum(Kinv * dK))
                         for dK in kernel_matrix_grad(spec, theta, X)])
    preds = None
    if X_t is not None:
        preds = kernel_matrix(spec, theta, _as_points(spec, X_t), X) @ alpha
    return ExactResult(alpha=alpha, predictions=preds, value=float(value), grad=grad, jitter=jitter)


# ---------------------------------------------------------------------------
# random Fourier feature likelihood

def _real_pair(Z: np.ndarray) -> np.ndarray:
    """``[Re Z, -Im Z]``, whose Gram ``Zr Zr^T`` equals ``Re(Z Z^H)``."""
    return np.concatenate([Z.real, -Z.imag], axis=1)


def rff_likelihood(model: RffModel, theta: HyperParams, y, *, with_grad: bool = True) -> LikelihoodReport:
    """Likelihood of ``K = sf2 m(L) Re(Z(L) Z(L)^H) + sn2 I`` and its gradient.

    The real part of the complex features' Gram is the real-valued kernel; it
    is computed through the equivalent ``(cos, sin)`` feature pair.  ``Z(L)`` is
    rebuilt on every call, as it depends on the lengthscales.
    """
    spec = model.spec
    y = np.asarray(y, dtype=float).reshape(-1)
    n = model.X.shape[0]
    if y.shape[0] != n:
        raise InvalidArgument(f"got {n} inputs but {y.shape[0]} targets")
    ell = lengthscales(spec, theta.theta0)
    sf2, sn2 = theta.sf2, theta.sn2
    mass = rff_mass(spec, ell)
    c = sf2 * mass
    Zc = rff_features(model, ell)
    Z = _real_pair(Zc)
    s = Z.shape[1]
    G = Z.T @ Z
    b = Z.T @ y
    M = c * G
    M[np.diag_indices_from(M)] += sn2
    L, _ = cholesky_jittered(M, what="RFF inner system")
    u = linalg.cho_solve((L, True), b)          # Z^T alpha
    yty = float(y @ y)
    y_alpha = (yty - c * float(b @ u)) / sn2
    logdet = (n - s) * math.log(sn2) + logdet_from_cholesky(L)
    value = -0.5 * y_alpha - 0.5 * logdet - 0.5 * n * _LOG_2PI
    if not with_grad:
        return LikelihoodReport(float(value), np.empty(0), np.empty(0), np.empty(0), _names(spec))

    alpha = (y - c * (Z @ u)) / sn2
    MinvG = linalg.cho_solve((L, True), G)
    tr_MinvG = float(np.trace(MinvG))
    u2 = float(u @ u)
    d = spec.dim
    tr_L, quad_L = np.empty(d), np.empty(d)
    for k in range(d):
        dZ = _real_pair(rff_grad(model, ell, k, Zc))
        dlogm = -1.0 / ell[k] if spec.family == CAUCHY else 0.0
        # d/dL_k of c Z Z^H = c (dZ Z^H + Z dZ^H) + c dlogm Z Z^H
        quad_L[k] = 2 * c * float(alpha @ (dZ @ u)) + c * dlogm * u2
        tr_L[k] = (2 * c * float(np.trace(linalg.cho_solve((L, True), Z.T @ dZ)))
                   + c * dlogm * tr_MinvG)
    if spec.anisotropic:
        tr_t, quad_t = tr_L, quad_L
    else:
        tr_t, quad_t = np.array([tr_L.sum()]), np.array([quad_L.sum()])
    alpha_sq = float(alpha @ alpha)
    trace_terms = np.concatenate([tr_t, [mass * tr_MinvG, (n - c * tr_MinvG) / sn2]])
    quadratic_terms = np.concatenate([quad_t, [mass * u2, alpha_sq]])
    grad = 0.5 * (quadratic_terms - trace_terms)
    return LikelihoodReport(float(value), grad, trace_terms, quadratic_terms, _names(spec))


def rff_predict(model: RffModel, theta: HyperParams, y, X_t) -> np.ndarray:
    spec = model.spec
    ell = lengthscales(spec, theta.theta0)
    c = theta.sf2 * rff_mass(spec, ell)
    Z = _real_pair(rff_features(model, ell))
    M = c * (Z.T @ Z)
    M[np.diag_indices_from(M)] += theta.sn2
    L, _ = cholesky_jittered(M, what="RFF inner system")
    u = linalg.cho_solve((L, True), Z.T @ np.asarray(y, dtype=float))
    Zt = _real_pair(rff_features(model, ell, X_t))
    return c * (Zt @ u)


# ---------------------------------------------------------------------------
# persistence

def save_gpr_model(model: GprModel, path, *, y_offset: float = 0.0) -> None:
    from .features import FORMAT_VERSION, _spec_json

    with open(path, "wb") as fh:
        np.savez(fh, format_version=np.array(FORMAT_VERSION), kind=np.array("glf_model"),
                 spec=np.array(_spec_json(model.spec)), U=model.grid.U, s=np.asarray(model.grid.s),
                 domain_kind=np.array(model.grid.domain_kind), theta=model.theta.as_vector(),
                 Ww=model.Ww, w=model.w, n=np.array(model.n), path=np.array(model.path),
                 trace_F=np.array(model.trace_F), y_offset=np.array(float(y_offset)))


def load_gpr_model(path) -> tuple[GprModel, float]:
    """Return ``(model, y_offset)``; add the offset to predictions."""
    from .features import FORMAT_VERSION, spec_from_json
    from .quadrature import tensor_grid

    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION or str(data["kind"]) != "glf_model":
            raise InvalidArgument(f"unsupported model dump (version {version})")
        spec = spec_from_json(str(data["spec"]))
        grid = tensor_grid(data["U"], data["s"], str(data["domain_kind"]))
        model = GprModel(spec=spec, grid=grid, theta=HyperParams.from_vector(data["theta"]),
                         path=str(data["path"]), Ww=data["Ww"], w=data["w"], n=int(data["n"]),
                         trace_F=float(data["trace_F"]))
        return model, float(data["y_offset"])
