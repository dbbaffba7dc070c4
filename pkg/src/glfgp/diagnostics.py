"""Certificates of approximation quality: pencil eigenvalue bands, Gaussian KL
divergence, and truncation / quadrature error probes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import CapacityError, InvalidArgument
from .features import approx_kernel_eval
from .kernels import FOURIER, HyperParams, KernelSpec, eval_kernel, spectral_density
from .quadrature import POSITIVE_BOX, SYMMETRIC_BOX, tensor_grid

MAX_N = 5000


@dataclass
class EquivalenceReport:
    n: int
    lam_min: float
    lam_max: float
    required: tuple
    passed: bool
    kl: float | None = None
    kl_bound: float | None = None

    def summary(self) -> str:
        lines = [f"n = {self.n}",
                 f"pencil eigenvalues in [{self.lam_min:.12g}, {self.lam_max:.12g}]",
                 f"required band      [{self.required[0]:.12g}, {self.required[1]:.12g}]",
                 f"spectrally equivalent: {'yes' if self.passed else 'no'}"]
        if self.kl is not None:
            lines.append(f"KL divergence {self.kl:.6g} (bound {self.kl_bound:.6g})")
        return "\n".join(lines)


def _check_pair(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise InvalidArgument("expected two square matrices of the same order")
    if A.shape[0] > MAX_N:
        raise CapacityError(f"matrix order {A.shape[0]} exceeds {MAX_N}")
    for M in (A, B):
        scale = max(1.0, float(np.max(np.abs(M))))
        if np.max(np.abs(M - M.T)) > 1e-10 * scale:
            raise InvalidArgument("matrices must be symmetric")
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def _chol(M, what):
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        raise InvalidArgument(f"{what} is not positive definite") from None


def pencil_eigenvalues(K, K_approx) -> np.ndarray:
    """Eigenvalues of ``K_approx v = lam K v`` via ``K = L L^T``."""
    K, Ka = _check_pair(K, K_approx)
    L = _chol(K, "reference matrix")
    T = linalg.solve_triangular(L, Ka, lower=True)
    M = linalg.solve_triangular(L, T.T, lower=True)
    return linalg.eigvalsh(0.5 * (M + M.T))


def kl_divergence(S0, S1, mu0=None, mu1=None) -> float:
    """``KL(N(mu0, S0) || N(mu1, S1))``; zero means by default."""
    S0, S1 = _check_pair(S0, S1)
    n = S0.shape[0]
    L0 = _chol(S0, "first covariance")
    L1 = _chol(S1, "second covariance")
    A = linalg.solve_triangular(L1, L0, lower=True)
    trace = float(np.sum(A * A))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L1))) - np.sum(np.log(np.diag(L0))))
    quad = 0.0
    if mu0 is not None or mu1 is not None:
        dmu = np.zeros(n) if mu1 is None else np.asarray(mu1, dtype=float)
        if mu0 is not None:
            dmu = dmu - np.asarray(mu0, dtype=float)
        z = linalg.solve_triangular(L1, dmu, lower=True)
        quad = float(z @ z)
    return max(0.0, 0.5 * (trace + quad - n + logdet))


def spectral_equivalence_check(K, K_approx, *, with_kl: bool = True) -> EquivalenceReport:
    lam = pencil_eigenvalues(K, K_approx)
    n = lam.shape[0]
    lo, hi = 1.0 - 1.0 / n, 1.0 + 1.0 / n
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    rep = EquivalenceReport(n=n, lam_min=lam_min, lam_max=lam_max, required=(lo, hi),
                            passed=bool(lam_min >= lo and lam_max <= hi))
    if with_kl:
        rep.kl = kl_divergence(K, K_approx)
        rep.kl_bound = 1.0 + 2.0 / n
    return rep


# ---------------------------------------------------------------------------
# probes

def truncation_probe(spec: KernelSpec, corner: HyperParams, U, n: int, *, M_R: float = 1.0) -> float:
    """``n sn2^-1 M_R^2`` times the density mass outside the truncation box
    (``d = 1``), to be compared with ``1 / (2 sf2 n)``."""
    if spec.dim != 1:
        raise InvalidArgument("the truncation probe is implemented for d = 1")
    U = float(np.atleast_1d(U)[0])
    p = lambda e: float(spectral_density(spec, corner.theta0, e))
    tail, _ = integrate.quad(p, U, math.inf, epsabs=0.0, epsrel=1e-10, limit=400)
    if spec.feature_kind == FOURIER:
        tail *= 2.0
    return n / corner.sn2 * M_R**2 * tail


def quadrature_probe(spec: KernelSpec, theta: HyperParams, U, s_values, pairs) -> np.ndarray:
    """Largest ``|k_approx - k|`` over ``pairs`` for each size in ``s_values``
    (the same size in every dimension)."""
    pairs = list(pairs)
    kind = SYMMETRIC_BOX if spec.feature_kind == FOURIER else POSITIVE_BOX
    U = np.broadcast_to(np.asarray(U, dtype=float), (spec.dim,))
    out = []
    for s in s_values:
        grid = tensor_grid(U, [int(s)] * spec.dim, kind)
        out.append(max(abs(approx_kernel_eval(spec, grid, theta, x, xp) - eval_kernel(spec, theta, x, xp))
                       for x, xp in pairs))
    return np.asarray(out)
