"""Kernel families, their spectral densities, and decay-class metadata.

Every family is written as

    k(x, x') = sf2 * integral phi(x, eta) conj(phi(x', eta)) p(eta; theta0) deta
               + sn2 * [x == x']

with ``phi(x, eta) = exp(-i x.eta)`` for the shift-invariant families and
``phi(x, eta) = exp(-eta.x)`` (over ``eta >= 0``) for the reciprocal
semigroup kernel.

Conventions
-----------
* ``theta0`` holds lengthscales ``ell`` (one value, or one per dimension when
  ``anisotropic``), or the single rate ``lam`` of the semigroup kernel.
* The Cauchy kernel is ``2^d prod ell_k / (ell_k^2 + r_k^2)`` paired with the
  density ``exp(-sum ell_k |eta_k|)``.  This density has total mass
  ``2^d / prod ell_k = k0(0)``, not 1; the pairing is kept exactly as printed
  in the literature rather than renormalized.
* The semigroup density is ``lam^d exp(-lam sum eta_k)`` so that it reproduces
  ``prod lam / (x_k + x'_k + lam)`` in every dimension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import InvalidArgument

GAUSSIAN = "gaussian"
MATERN = "matern"
LAPLACIAN = "laplacian"
CAUCHY = "cauchy"
SEMIGROUP = "reciprocal_semigroup"
FAMILIES = (GAUSSIAN, MATERN, LAPLACIAN, CAUCHY, SEMIGROUP)

FOURIER = "fourier"
EXPONENTIAL_DECAY = "exponential_decay"

# decay class labels
P_POLY = "P_poly"
P_POLY_R = "P_poly_r"
E_EXP1 = "E_exp1"
E_EXP2 = "E_exp2"


@dataclass(frozen=True)
class KernelSpec:
    family: str
    dim: int = 1
    nu: float | None = None
    anisotropic: bool = False
    bounding_box: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown kernel family {self.family!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidArgument(f"dim must be a positive integer, got {self.dim}")
        if self.family == MATERN:
            if self.nu is None or not (self.nu > 0):
                raise InvalidArgument(f"matern requires nu > 0, got {self.nu}")
        if self.family == SEMIGROUP and self.anisotropic:
            raise InvalidArgument("the semigroup kernel has a single rate parameter")
        if self.bounding_box is not None:
            R = np.broadcast_to(np.asarray(self.bounding_box, dtype=float), (self.dim,))
            if np.any(R <= 0):
                raise InvalidArgument("bounding box components must be positive")
            object.__setattr__(self, "bounding_box", tuple(float(r) for r in R))

    @property
    def feature_kind(self) -> str:
        return EXPONENTIAL_DECAY if self.family == SEMIGROUP else FOURIER

    @property
    def n_theta0(self) -> int:
        return self.dim if self.anisotropic else 1

    @property
    def R(self) -> np.ndarray:
        if self.bounding_box is None:
            raise InvalidArgument("kernel spec has no bounding box")
        return np.asarray(self.bounding_box, dtype=float)

    def with_bounding_box(self, R) -> "KernelSpec":
        return KernelSpec(self.family, self.dim, self.nu, self.anisotropic, tuple(np.atleast_1d(R)))


def bounding_box_from_data(spec: KernelSpec, X) -> np.ndarray:
    """Smallest ``R`` with ``X`` inside ``prod [-R/2, R/2]`` (or ``prod [0, R]``
    for the semigroup kernel)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.feature_kind == EXPONENTIAL_DECAY:
        R = X.max(axis=0)
    else:
        R = 2.0 * np.abs(X).max(axis=0)
    return np.maximum(R, 1e-12)


@dataclass(frozen=True)
class HyperParams:
    theta0: np.ndarray
    sf2: float
    sn2: float

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.theta0, dtype=float)).copy()
        t.setflags(write=False)
        object.__setattr__(self, "theta0", t)
        if np.any(~(t > 0)) or not (self.sf2 > 0) or not (self.sn2 > 0):
            raise InvalidArgument(
                f"hyperparameters must be strictly positive: theta0={t}, "
                f"sf2={self.sf2}, sn2={self.sn2}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta0, [self.sf2, self.sn2]])

    @classmethod
    def from_vector(cls, v) -> "HyperParams":
        v = np.asarray(v, dtype=float)
        return cls(v[:-2], float(v[-2]), float(v[-1]))


@dataclass(frozen=True)
class HyperDomain:
    """Box constraints on ``(theta0, sf2, sn2)``.

    The bound-computation corner is ``(theta0_lower, sf2_upper, sn2_lower)``,
    i.e. smallest lengthscale (or rate), largest signal variance and smallest
    noise.  It is also the starting point of hyperparameter learning.
    """

    theta0_lower: np.ndarray
    theta0_upper: np.ndarray
    sf2_lower: float
    sf2_upper: float
    sn2_lower: float
    sn2_upper: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.theta0_lower, dtype=float))
        hi = np.broadcast_to(np.asarray(self.theta0_upper, dtype=float), lo.shape).copy()
        object.__setattr__(self, "theta0_lower", lo)
        object.__setattr__(self, "theta0_upper", hi)
        lows = np.concatenate([lo, [self.sf2_lower, self.sn2_lower]])
        highs = np.concatenate([hi, [self.sf2_upper, self.sn2_upper]])
        if np.any(~(lows > 0)) or np.any(lows > highs):
            raise InvalidArgument(f"invalid hyperparameter box: lower={lows}, upper={highs}")

    @classmethod
    def from_corner(cls, theta0_lower, sf2_upper, sn2_lower, *, theta0_upper=None,
                    sf2_lower=None, sn2_upper=None) -> "HyperDomain":
        lo = np.atleast_1d(np.asarray(theta0_lower, dtype=float))
        return cls(
            lo,
            lo * 100.0 if theta0_upper is None else theta0_upper,
            sf2_upper * 1e-4 if sf2_lower is None else sf2_lower,
            sf2_upper,
            sn2_lower,
            sn2_lower * 1e4 if sn2_upper is None else sn2_upper,
        )

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([self.theta0_lower, [self.sf2_lower, self.sn2_lower]])

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([self.theta0_upper, [self.sf2_upper, self.sn2_upper]])

    def corner(self) -> HyperParams:
        return HyperParams(self.theta0_lower, self.sf2_upper, self.sn2_lower)

    def contains(self, theta: HyperParams, rtol: float = 1e-12) -> bool:
        v = theta.as_vector()
        return bool(np.all(v >= self.lower * (1 - rtol)) and np.all(v <= self.upper * (1 + rtol)))


@dataclass(frozen=True)
class DecayClassInfo:
    kind: str
    C: float
    L: np.ndarray
    r: float | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers

def _check_theta0(spec: KernelSpec, theta0) -> np.ndarray:
    t = np.atleast_1d(np.asarray(theta0, dtype=float))
    if t.shape != (spec.n_theta0,):
        raise InvalidArgument(f"theta0 must have {spec.n_theta0} component(s), got shape {t.shape}")
    if np.any(~(t > 0)):
        raise InvalidArgument(f"theta0 must be strictly positive, got {t}")
    return t


def lengthscales(spec: KernelSpec, theta0) -> np.ndarray:
    """Per-dimension lengthscale vector (or rate vector for the semigroup)."""
    t = _check_theta0(spec, theta0)
    return np.broadcast_to(t, (spec.dim,)).astype(float)


def _as_points(spec: KernelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if spec.dim > 1 or x.size == 1 else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != spec.dim:
        raise InvalidArgument(f"expected points of dimension {spec.dim}, got shape {x.shape}")
    return x


_MATERN_HALF = {0.5, 1.5, 2.5, 3.5}


def matern_profile(nu: float, rho: np.ndarray):
    """Matern correlation ``k(rho)`` and ``dk/drho`` at scaled distance
    ``rho = sqrt(2 nu) |r| / ell``.

    Closed forms for half-integer ``nu`` up to 7/2; modified Bessel functions
    otherwise.
    """
    rho = np.asarray(rho, dtype=float)
    e = np.exp(-rho)
    if nu == 0.5:
        return e, -e
    if nu == 1.5:
        return (1 + rho) * e, -rho * e
    if nu == 2.5:
        return (1 + rho + rho**2 / 3) * e, -(rho / 3) * (1 + rho) * e
    if nu == 3.5:
        return ((1 + rho + 0.4 * rho**2 + rho**3 / 15) * e,
                -(rho / 15) * (3 + 3 * rho + rho**2) * e)
    k = np.ones_like(rho)
    dk = np.zeros_like(rho)
    pos = rho > 0
    rp = rho[pos]
    c = 2.0 ** (1 - nu) / special.gamma(nu)
    k[pos] = c * rp**nu * special.kv(nu, rp)
    dk[pos] = -c * rp**nu * special.kv(abs(nu - 1), rp)
    # kv underflows to 0 for large rho; that is the correct limit
    k[pos & ~np.isfinite(k)] = 0.0
    if nu < 1:
        # derivative blows up like -rho^(2nu-1) at the origin
        dk[~pos] = -np.inf
    return k, dk


# ---------------------------------------------------------------------------
# exact kernel

def _base_kernel(spec: KernelSpec, theta0, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Correlation part ``k0`` for all pairs of rows of A and B."""
    ell = lengthscales(spec, theta0)
    if spec.family == SEMIGROUP:
        S = A[:, None, :] + B[None, :, :]
        lam = ell[0]
        return np.prod(lam / (S + lam), axis=-1)
    D = A[:, None, :] - B[None, :, :]
    if spec.family == GAUSSIAN:
        return np.exp(-0.5 * np.sum((D / ell) ** 2, axis=-1))
    if spec.family == LAPLACIAN:
        return np.exp(-np.sum(np.abs(D) / ell, axis=-1))
    if spec.family == CAUCHY:
        return np.prod(2.0 * ell / (ell**2 + D**2), axis=-1)
    rho = math.sqrt(2 * spec.nu) * np.sqrt(np.sum((D / ell) ** 2, axis=-1))
    return matern_profile(spec.nu, rho)[0]


def kernel_matrix(spec: KernelSpec, theta: HyperParams, X, X2=None, *, ridge: bool = True):
    """Dense exact kernel matrix.

    With ``X2 is None`` the ridge enters as ``sn2 * I`` (one noise term per
    observation); otherwise cross-kernel matrices carry no ridge.
    """
    X = _as_points(spec, X)
    if spec.family == SEMIGROUP and np.any(X < 0):
        raise InvalidArgument("semigroup kernel requires nonnegative inputs")
    if X2 is None:
        K = theta.sf2 * _base_kernel(spec, theta.theta0, X, X)
        K = 0.5 * (K + K.T)
        if ridge:
            K[np.diag_indices_from(K)] += theta.sn2
        return K
    X2 = _as_points(spec, X2)
    return theta.sf2 * _base_kernel(spec, theta.theta0, X, X2)


def eval_kernel(spec: KernelSpec, theta: HyperParams, x, xp) -> float:
    x = np.asarray(x, dtype=float).reshape(1, spec.dim)
    xp = np.asarray(xp, dtype=float).reshape(1, spec.dim)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise InvalidArgument("kernel arguments must be finite")
    if spec.family == SEMIGROUP and (np.any(x < 0) or np.any(xp < 0)):
        raise InvalidArgument("semigroup kernel requires nonnegative inputs")
    k = theta.sf2 * float(_base_kernel(spec, theta.theta0, x, xp)[0, 0])
    if np.array_equal(x, xp):
        k += theta.sn2
    return k


def kernel_matrix_grad(spec: KernelSpec, theta: HyperParams, X) -> list:
    """Derivatives of the (ridged) kernel matrix w.r.t. every hyperparameter,
    ordered ``[theta0..., sf2, sn2]``."""
    X = _as_points(spec, X)
    ell_full = lengthscales(spec, theta.theta0)
    n = X.shape[0]
    K0 = _base_kernel(spec, theta.theta0, X, X)
    grads = []
    if spec.family == SEMIGROUP:
        lam = ell_full[0]
        S = X[:, None, :] + X[None, :, :]
        dlog = np.sum(1.0 / lam - 1.0 / (S + lam), axis=-1)
        grads.append(theta.sf2 * K0 * dlog)
    else:
        D = X[:, None, :] - X[None, :, :]
        # per-dimension derivative of k0 w.r.t. ell_k
        if spec.family == GAUSSIAN:
            per_dim = K0[..., None] * D**2 / ell_full**3
        elif spec.family == LAPLACIAN:
            per_dim = K0[..., None] * np.abs(D) / ell_full**2
        elif spec.family == CAUCHY:
            per_dim = K0[..., None] * (1.0 / ell_full - 2.0 * ell_full / (ell_full**2 + D**2))
        else:
            nu = spec.nu
            rho = math.sqrt(2 * nu) * np.sqrt(np.sum((D / ell_full) ** 2, axis=-1))
            _, dk = matern_profile(nu, rho)
            g = np.zeros_like(rho)
            pos = rho > 0
            g[pos] = dk[pos] / rho[pos]
            # d rho / d ell_k = -2 nu r_k^2 / (ell_k^3 rho)
            per_dim = -g[..., None] * 2 * nu * D**2 / ell_full**3
        if spec.anisotropic:
            grads.extend(theta.sf2 * per_dim[..., k] for k in range(spec.dim))
        else:
            grads.append(theta.sf2 * per_dim.sum(axis=-1))
    grads.append(K0)
    grads.append(np.eye(n))
    return grads


# ---------------------------------------------------------------------------
# spectral densities

def _as_freqs(spec: KernelSpec, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim <= 1 and spec.dim > 1:
        eta = eta.reshape(1, -1)
    elif eta.ndim <= 1:
        eta = eta.reshape(-1, 1)
    if eta.shape[-1] != spec.dim:
        raise InvalidArgument(f"frequencies must have dimension {spec.dim}")
    return eta


def log_spectral_density(spec: KernelSpec, theta0, eta) -> np.ndarray:
    ell = lengthscales(spec, theta0)
    eta = _as_freqs(spec, eta)
    d = spec.dim
    if spec.family == GAUSSIAN:
        return (np.sum(np.log(ell)) - 0.5 * d * math.log(2 * math.pi)
                - 0.5 * np.sum((ell * eta) ** 2, axis=-1))
    if spec.family == LAPLACIAN:
        return (np.sum(np.log(ell)) - d * math.log(math.pi)
                - np.sum(np.log1p((ell * eta) ** 2), axis=-1))
    if spec.family == CAUCHY:
        return -np.sum(ell * np.abs(eta), axis=-1)
    if spec.family == MATERN:
        nu = spec.nu
        r = nu + d / 2
        logc = (special.gammaln(r) - special.gammaln(nu) - 0.5 * d * math.log(math.pi)
                - 0.5 * d * math.log(2 * nu) + np.sum(np.log(ell)))
        return logc - r * np.log1p(np.sum((ell * eta) ** 2, axis=-1) / (2 * nu))
    lam = ell[0]
    out = d * math.log(lam) - lam * np.sum(eta, axis=-1)
    return np.where(np.all(eta >= 0, axis=-1), out, -np.inf)


def spectral_density(spec: KernelSpec, theta0, eta):
    """Spectral density ``p(eta; theta0)``; scalar for a single frequency."""
    single = np.ndim(eta) == 0 or (np.ndim(eta) == 1 and spec.dim > 1)
    p = np.exp(log_spectral_density(spec, theta0, eta))
    return float(p[0]) if single else p


def density_grad(spec: KernelSpec, theta0, eta) -> np.ndarray:
    """Gradient of the density w.r.t. ``theta0``; shape ``(n_theta0, m)``
    (or ``(n_theta0,)`` for a single frequency)."""
    single = np.ndim(eta) == 0 or (np.ndim(eta) == 1 and spec.dim > 1)
    ell = lengthscales(spec, theta0)
    E = _as_freqs(spec, eta)
    p = np.exp(log_spectral_density(spec, theta0, E))
    d = spec.dim
    if spec.family == SEMIGROUP:
        lam = ell[0]
        out = (p * (d / lam - np.sum(E, axis=-1)))[None, :]
    else:
        if spec.family == GAUSSIAN:
            per_dim = 1.0 / ell - ell * E**2
        elif spec.family == LAPLACIAN:
            per_dim = 1.0 / ell - 2 * ell * E**2 / (1 + (ell * E) ** 2)
        elif spec.family == CAUCHY:
            per_dim = -np.abs(E) + 0.0 * ell
        else:
            nu = spec.nu
            r = nu + d / 2
            q = np.sum((ell * E) ** 2, axis=-1, keepdims=True)
            per_dim = 1.0 / ell - r * (ell * E**2 / nu) / (1 + q / (2 * nu))
        dlog = per_dim.T if spec.anisotropic else per_dim.sum(axis=-1)[None, :]
        out = p[None, :] * dlog
    return out[:, 0] if single else out


def density_mass(spec: KernelSpec, theta0) -> float:
    """Total mass of the density, i.e. ``k0(0)``; 1 except for Cauchy."""
    if spec.family == CAUCHY:
        ell = lengthscales(spec, theta0)
        return float(2.0**spec.dim / np.prod(ell))
    return 1.0


# ---------------------------------------------------------------------------
# decay classes

def decay_class(spec: KernelSpec, domain: HyperDomain) -> DecayClassInfo:
    """Worst-case decay class over the domain, evaluated at its corner."""
    t0 = _check_theta0(spec, domain.theta0_lower)
    ell = np.broadcast_to(t0, (spec.dim,)).astype(float)
    d = spec.dim
    if spec.family == GAUSSIAN:
        return DecayClassInfo(E_EXP2, float(np.prod(ell) * (2 * math.pi) ** (-d / 2)),
                              ell / math.sqrt(2))
    if spec.family == MATERN:
        nu = spec.nu
        if not nu > 0:
            raise InvalidArgument("matern requires nu > 0")
        C = math.exp(special.gammaln(nu + d / 2) - special.gammaln(nu)) / (2 * math.pi * nu) ** (d / 2)
        return DecayClassInfo(P_POLY_R, float(C * np.prod(ell)), ell / math.sqrt(2 * nu), nu + d / 2)
    if spec.family == LAPLACIAN:
        return DecayClassInfo(P_POLY, float(np.prod(ell) / math.pi**d), ell.copy())
    if spec.family == CAUCHY:
        return DecayClassInfo(E_EXP1, 1.0, ell.copy())
    lam = ell[0]
    return DecayClassInfo(E_EXP1, float(lam**d), ell.copy(), extra={"half_space": True})
