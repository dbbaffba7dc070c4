"""Gauss-Legendre feature matrices, hyperparameter-dependent weights, and the
frozen-frequency random Fourier feature baseline.

The feature matrix ``Z[l, j] = phi(x_l, eta_j)`` depends only on the grid, never
on hyperparameters.  Training data are consumed in row chunks; only the
``s x s`` Gram matrix (or its triangular QR factor) and the projected targets
are retained unless ``keep_Z`` is requested.
"""
from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, UnsupportedFamily
from .kernels import (CAUCHY, EXPONENTIAL_DECAY, FOURIER, GAUSSIAN, LAPLACIAN, MATERN,
                      HyperParams, KernelSpec, _as_points, density_grad, lengthscales,
                      spectral_density)
from .quadrature import POSITIVE_BOX, SYMMETRIC_BOX, QuadratureGrid

# instrumentation: number of Gram/QR builds and RFF feature-matrix builds
COUNTERS: Counter = Counter()

NORMAL_EQ = "normal_eq"
QR = "qr"
FORMAT_VERSION = 1

_CHUNK_ELEMENTS = 1 << 21


def feature_block(spec: KernelSpec, nodes: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``phi(x_l, eta_j)`` for all rows of ``X`` and all nodes."""
    P = X @ nodes.T
    if spec.feature_kind == FOURIER:
        return np.exp(-1j * P)
    return np.exp(-P)


def _check_grid(spec: KernelSpec, grid: QuadratureGrid):
    want = SYMMETRIC_BOX if spec.feature_kind == FOURIER else POSITIVE_BOX
    if grid.domain_kind != want:
        raise InvalidArgument(f"{spec.family} features need a {want} grid, got {grid.domain_kind}")
    if grid.dim != spec.dim:
        raise InvalidArgument(f"grid dimension {grid.dim} does not match kernel dimension {spec.dim}")


def _check_box(spec: KernelSpec, X: np.ndarray):
    if spec.feature_kind == EXPONENTIAL_DECAY and np.any(X < 0):
        warnings.warn("semigroup features expect nonnegative inputs", RuntimeWarning, stacklevel=3)
    if spec.bounding_box is None:
        return
    R = spec.R
    if spec.feature_kind == FOURIER:
        outside = np.any(np.abs(X) > R / 2 * (1 + 1e-12))
    else:
        outside = np.any(X > R * (1 + 1e-12))
    if outside:
        warnings.warn("inputs lie outside the kernel's bounding box; the planned "
                      "feature count may be insufficient", RuntimeWarning, stacklevel=3)


@dataclass(frozen=True)
class FeatureModel:
    """Hyperparameter-independent summary of the training inputs.

    ``gram = Z^H Z`` is always available.  On the QR path ``R_Z`` is the
    triangular factor of ``Z`` and ``qy`` the matching projection of ``y``
    (so ``Z^H y = R_Z^H qy``).
    """

    spec: KernelSpec
    grid: QuadratureGrid
    n: int
    path: str
    gram: np.ndarray
    gram_diag: np.ndarray
    zy: np.ndarray | None = None
    yty: float | None = None
    R_Z: np.ndarray | None = None
    qy: np.ndarray | None = None
    Z: np.ndarray | None = None
    X: np.ndarray | None = None
    y: np.ndarray | None = None

    @property
    def s(self) -> int:
        return self.grid.total_size

    @property
    def has_targets(self) -> bool:
        return self.zy is not None

    def with_targets(self, y) -> "FeatureModel":
        """Same features with new targets; needs the retained inputs."""
        if self.X is None:
            raise InvalidArgument("features were built without keep_Z; rebuild with the new targets")
        return build_feature_matrix(self.X, self.grid, self.spec, y, path=self.path, keep_Z=True)


def _chunk_rows(s: int) -> int:
    return max(1, _CHUNK_ELEMENTS // max(s, 1))


def build_feature_matrix(X, grid: QuadratureGrid, spec: KernelSpec, y=None, *,
                         path: str = NORMAL_EQ, keep_Z: bool = False,
                         chunk_rows: int | None = None) -> FeatureModel:
    """Stream over the rows of ``X`` once, accumulating ``Z^H Z`` and ``Z^H y``
    (``path="normal_eq"``) or the QR factor of ``[Z | y]`` (``path="qr"``)."""
    _check_grid(spec, grid)
    X = _as_points(spec, X)
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("inputs must be finite")
    n = X.shape[0]
    if y is not None:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != n:
            raise InvalidArgument(f"got {n} inputs but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise InvalidArgument("targets must be finite")
    if path not in (NORMAL_EQ, QR):
        raise InvalidArgument(f"unknown path {path!r}")
    _check_box(spec, X)

    s = grid.total_size
    nodes = grid.nodes
    dtype = complex if spec.feature_kind == FOURIER else float
    step = chunk_rows or _chunk_rows(s)
    gram = np.zeros((s, s), dtype=dtype)
    zy = np.zeros(s, dtype=dtype) if y is not None else None
    R_aug = None
    Z_full = np.empty((n, s), dtype=dtype) if keep_Z else None

    for a in range(0, n, step):
        Zc = feature_block(spec, nodes, X[a:a + step])
        if keep_Z:
            Z_full[a:a + step] = Zc
        gram += Zc.conj().T @ Zc
        if y is not None:
            zy += Zc.conj().T @ y[a:a + step]
        if path == QR:
            block = Zc if y is None else np.column_stack([Zc, y[a:a + step].astype(dtype)])
            stacked = block if R_aug is None else np.vstack([R_aug, block])
            R_aug = np.linalg.qr(stacked, mode="r")
    gram = 0.5 * (gram + gram.conj().T)
    COUNTERS["gram_builds"] += 1

    R_Z = qy = None
    if path == QR:
        width = s + (1 if y is not None else 0)
        full = np.zeros((width, width), dtype=dtype)
        full[:R_aug.shape[0]] = R_aug[:width]
        R_Z = full[:s, :s].copy()
        if y is not None:
            qy = full[:s, s].copy()

    return FeatureModel(
        spec=spec, grid=grid, n=n, path=path, gram=gram, gram_diag=np.real(np.diag(gram)).copy(),
        zy=zy, yty=float(y @ y) if y is not None else None, R_Z=R_Z, qy=qy, Z=Z_full,
        X=X.copy() if keep_Z else None, y=y.copy() if keep_Z and y is not None else None)


# ---------------------------------------------------------------------------
# weights

@dataclass(frozen=True)
class WeightDiagonal:
    h: np.ndarray
    dh: np.ndarray


def weight_diag(grid: QuadratureGrid, spec: KernelSpec, theta) -> WeightDiagonal:
    """``h_j = w_j p(eta_j; theta0)`` and its ``theta0``-gradient."""
    _check_grid(spec, grid)
    theta0 = theta.theta0 if isinstance(theta, HyperParams) else theta
    p = np.atleast_1d(spectral_density(spec, theta0, grid.nodes))
    dp = np.atleast_2d(density_grad(spec, theta0, grid.nodes))
    w = grid.base_weights
    return WeightDiagonal(h=w * p, dh=w[None, :] * dp)


def approx_kernel_eval(spec: KernelSpec, grid: QuadratureGrid, theta: HyperParams, x, xp) -> float:
    x = np.asarray(x, dtype=float).reshape(1, spec.dim)
    xp = np.asarray(xp, dtype=float).reshape(1, spec.dim)
    h = weight_diag(grid, spec, theta).h
    zx = feature_block(spec, grid.nodes, x)[0]
    zxp = feature_block(spec, grid.nodes, xp)[0]
    val = theta.sf2 * np.sum(h * zx * np.conj(zxp))
    if abs(np.imag(val)) > 1e-10 * max(1.0, abs(val)):
        raise ArithmeticError(f"approximate kernel has imaginary part {np.imag(val):.3g}")
    k = float(np.real(val))
    if np.array_equal(x, xp):
        k += theta.sn2
    return k


def approx_kernel_matrix(spec: KernelSpec, grid: QuadratureGrid, theta: HyperParams, X, X2=None):
    """Dense ``sf2 Z W Z2^H`` (plus ``sn2 I`` when ``X2`` is omitted)."""
    X = _as_points(spec, X)
    h = weight_diag(grid, spec, theta).h
    Z = feature_block(spec, grid.nodes, X)
    Z2 = Z if X2 is None else feature_block(spec, grid.nodes, _as_points(spec, X2))
    K = theta.sf2 * np.real((Z * h) @ Z2.conj().T)
    if X2 is None:
        K = 0.5 * (K + K.T)
        K[np.diag_indices_from(K)] += theta.sn2
    return K


# ---------------------------------------------------------------------------
# random Fourier features with frozen base frequencies

_RFF_FAMILIES = (GAUSSIAN, MATERN, LAPLACIAN, CAUCHY)


@dataclass(frozen=True)
class RffModel:
    spec: KernelSpec
    X: np.ndarray
    omega: np.ndarray  # d x s, drawn once from p(.; I)
    seed: int

    @property
    def s(self) -> int:
        return self.omega.shape[1]


def sample_base_frequencies(spec: KernelSpec, s: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    if spec.family == GAUSSIAN:
        return rng.standard_normal((d, s))
    if spec.family == MATERN:
        # multivariate Student t with 2 nu degrees of freedom
        g = rng.standard_normal((d, s))
        chi = rng.chisquare(2 * spec.nu, size=s)
        return g / np.sqrt(chi / (2 * spec.nu))
    if spec.family == LAPLACIAN:
        return rng.standard_cauchy((d, s))
    if spec.family == CAUCHY:
        return rng.laplace(0.0, 1.0, (d, s))
    raise UnsupportedFamily(f"random Fourier features are not defined for {spec.family}")


def rff_build(X, spec: KernelSpec, s: int, seed: int = 0) -> RffModel:
    if spec.family not in _RFF_FAMILIES:
        raise UnsupportedFamily(f"random Fourier features are not defined for {spec.family}")
    if int(s) != s or s < 1:
        raise InvalidArgument(f"feature count must be a positive integer, got {s}")
    X = _as_points(spec, X)
    omega = sample_base_frequencies(spec, int(s), np.random.default_rng(seed))
    omega.setflags(write=False)
    return RffModel(spec=spec, X=X.copy(), omega=omega, seed=int(seed))


def rff_mass(spec: KernelSpec, L) -> float:
    """Spectral mass ``k0(0)``; differs from 1 only for the Cauchy pairing."""
    L = np.asarray(L, dtype=float)
    return float(2.0**spec.dim / np.prod(L)) if spec.family == CAUCHY else 1.0


def rff_features(model: RffModel, L, X=None) -> np.ndarray:
    """``Z(L) = exp(-i X L^{-1} Omega) / sqrt(s)``."""
    L = np.broadcast_to(np.asarray(L, dtype=float), (model.spec.dim,))
    X = model.X if X is None else _as_points(model.spec, X)
    COUNTERS["rff_builds"] += 1
    return np.exp(-1j * ((X / L) @ model.omega)) / math.sqrt(model.s)


def rff_grad(model: RffModel, L, k: int, Z=None) -> np.ndarray:
    """``dZ(L)/dL_k`` for the diagonal scaling ``L``."""
    L = np.broadcast_to(np.asarray(L, dtype=float), (model.spec.dim,))
    if Z is None:
        Z = rff_features(model, L)
    coef = model.X[:, k:k + 1] * (-1.0 / L[k] ** 2) * model.omega[k][None, :]
    return -1j * coef * Z


def rff_eval(model: RffModel, theta: HyperParams, x, xp) -> float:
    spec = model.spec
    L = lengthscales(spec, theta.theta0)
    zx = rff_features(model, L, np.reshape(x, (1, spec.dim)))[0]
    zxp = rff_features(model, L, np.reshape(xp, (1, spec.dim)))[0]
    k = theta.sf2 * rff_mass(spec, L) * float(np.real(np.sum(zx * np.conj(zxp))))
    if np.array_equal(np.asarray(x, dtype=float), np.asarray(xp, dtype=float)):
        k += theta.sn2
    return k


# ---------------------------------------------------------------------------
# persistence

def _spec_json(spec: KernelSpec) -> str:
    return json.dumps({"family": spec.family, "dim": spec.dim, "nu": spec.nu,
                       "anisotropic": spec.anisotropic, "bounding_box": spec.bounding_box})


def spec_from_json(text: str) -> KernelSpec:
    d = json.loads(text)
    bb = d.get("bounding_box")
    return KernelSpec(d["family"], int(d["dim"]), d.get("nu"), bool(d.get("anisotropic", False)),
                      tuple(bb) if bb is not None else None)


def save_feature_model(fm: FeatureModel, path) -> None:
    arrays = {"format_version": np.array(FORMAT_VERSION), "kind": np.array("glf_features"),
              "spec": np.array(_spec_json(fm.spec)), "path": np.array(fm.path),
              "U": fm.grid.U, "s": np.asarray(fm.grid.s), "domain_kind": np.array(fm.grid.domain_kind),
              "n": np.array(fm.n), "gram": fm.gram}
    for name in ("zy", "R_Z", "qy"):
        val = getattr(fm, name)
        if val is not None:
            arrays[name] = val
    if fm.yty is not None:
        arrays["yty"] = np.array(fm.yty)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_feature_model(path) -> FeatureModel:
    from .quadrature import tensor_grid

    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION or str(data["kind"]) != "glf_features":
            raise InvalidArgument(f"unsupported feature dump (version {version})")
        spec = spec_from_json(str(data["spec"]))
        grid = tensor_grid(data["U"], data["s"], str(data["domain_kind"]))
        gram = data["gram"]
        get = lambda k: data[k] if k in data.files else None
        yty = get("yty")
        return FeatureModel(spec=spec, grid=grid, n=int(data["n"]), path=str(data["path"]),
                            gram=gram, gram_diag=np.real(np.diag(gram)).copy(), zy=get("zy"),
                            yty=float(yty) if yty is not None else None, R_Z=get("R_Z"),
                            qy=get("qy"))
