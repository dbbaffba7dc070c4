"""Truncation boxes and quadrature sizes that make the Gauss-Legendre feature
approximation n-spectrally equivalent to the exact kernel over a hyperparameter
box.

All constants are evaluated at the worst-case corner of the box (smallest
lengthscale, largest signal variance, smallest noise).  ``M_R = 1`` for every
supported feature map.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import BoundFailure, InvalidArgument, UnsupportedAnalyticity
from .kernels import (E_EXP1, E_EXP2, GAUSSIAN, MATERN, P_POLY, P_POLY_R, SEMIGROUP,
                      HyperDomain, KernelSpec, decay_class)

log = logging.getLogger(__name__)

M_R = 1.0
DEFAULT_MAX_FEATURES = 10**6


@dataclass(frozen=True)
class PolyellipseParams:
    beta: np.ndarray
    rho: np.ndarray
    M_R: float
    log_M: float
    log_C: float

    @property
    def M_U_beta(self) -> float:
        return math.exp(self.log_M)

    @property
    def C_U_beta(self) -> float:
        return math.exp(self.log_C)


def bernstein_rho(U, beta) -> np.ndarray:
    a = np.asarray(beta, dtype=float) / (2.0 * np.asarray(U, dtype=float))
    return a + np.sqrt(a * a + 1.0)


def _corner(spec: KernelSpec, domain: HyperDomain, n: int):
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n}")
    corner = domain.corner()
    if not corner.sn2 > 0:
        raise InvalidArgument("a positive noise floor sn2 is required")
    return corner


# ---------------------------------------------------------------------------
# truncation

def poly_tail_integral(x: float, d: int, r: float) -> float:
    """``int_{x^2}^inf t^(d/2-1) (1+t)^(-r) dt``.

    With ``u = 1/(1+t)`` the tail becomes an incomplete beta integral
    ``B(r-d/2, d/2) I_z(r-d/2, d/2)`` at ``z = 1/(1+x^2)``.
    """
    a = r - d / 2.0
    if a <= 0:
        raise InvalidArgument("tail integral diverges unless r > d/2")
    b = d / 2.0
    x2 = float(x) * float(x)
    z = 1.0 / (1.0 + x2)
    # I_z computed via the complement when z is close to 1
    if z > 0.5:
        reg = 1.0 - special.betainc(b, a, x2 / (1.0 + x2))
    else:
        reg = special.betainc(a, b, z)
    return float(special.beta(a, b) * reg)


def _matern_lhs_factor(info, d, n, sf2, sn2):
    return (math.pi ** (d / 2) * info.C * n * M_R**2
            / (2 ** (d - 1) * special.gamma(d / 2) * sn2 * float(np.prod(info.L))))


def matern_x_upper_printed(info, d, n, sf2, sn2) -> float:
    """Closed-form bound obtained by dropping the ``1`` in ``(1 + t)^-r``, in
    the form commonly quoted.  It omits a factor 2 and therefore undershoots
    the true root; kept for reporting only."""
    r = info.r
    base = (math.pi ** (d / 2) * info.C * M_R**2 * sf2 * n * n
            / (2 ** (d - 2) * special.gamma(d / 2) * (2 * r - d) * sn2 * float(np.prod(info.L))))
    return base ** (1.0 / (2 * r - d))


def matern_x_upper(info, d, n, sf2, sn2) -> float:
    """Valid closed-form upper bound on the scaled truncation point.

    From ``int_{x^2}^inf t^(d/2-1) (1+t)^-r dt <= 2 x^(d-2r) / (2r-d)``.
    """
    r = info.r
    return 2.0 ** (1.0 / (2 * r - d)) * matern_x_upper_printed(info, d, n, sf2, sn2)


def matern_truncation_residual(x, info, d, n, sf2, sn2) -> float:
    """Left side minus right side of the scaled-truncation equation."""
    return (_matern_lhs_factor(info, d, n, sf2, sn2) * poly_tail_integral(x, d, info.r)
            - 1.0 / (2.0 * sf2 * n))


def compute_umin(spec: KernelSpec, domain: HyperDomain, n: int) -> np.ndarray:
    """Smallest truncation half-widths keeping the tail term below
    ``1 / (2 sf2 n)``."""
    corner = _corner(spec, domain, n)
    sf2, sn2 = corner.sf2, corner.sn2
    info = decay_class(spec, domain)
    d = spec.dim
    L = info.L
    C = info.C
    ratio = C * M_R**2 * sf2 * n * n / sn2

    if spec.family == SEMIGROUP:
        arg = (2.0 * ratio / float(np.prod(L))) ** (1.0 / d)
        if arg <= 1.0:
            raise BoundFailure(f"semigroup truncation argument {arg:.3g} <= 1; any U works")
        return np.log(arg) / L

    if info.kind == P_POLY:
        arg = L * (4.0 * ratio) ** (-1.0 / d)
        if np.any(arg >= math.pi / 2):
            raise BoundFailure(f"cot argument {arg} outside (0, pi/2)")
        return 1.0 / (L * np.tan(arg))

    if info.kind == E_EXP1:
        arg = (4.0 * ratio) ** (1.0 / d) / L
        if np.any(arg <= 1.0):
            raise BoundFailure(f"log argument {arg} <= 1")
        return np.log(arg) / L

    if info.kind == E_EXP2:
        arg = math.sqrt(math.pi) / L * (2.0 ** (2 - d) * ratio) ** (1.0 / d)
        if np.any(arg <= 1.0):
            raise BoundFailure(f"log argument {arg} <= 1")
        return np.sqrt(np.log(arg)) / L

    if info.kind == P_POLY_R:
        r = info.r
        if not r > d / 2:
            raise BoundFailure(f"decay exponent r={r} must exceed d/2={d / 2}")
        if d == 2:
            inner = (math.pi * ratio / ((r - 1.0) * L[0] * L[1])) ** (1.0 / (r - 1.0)) - 1.0
            if inner <= 0:
                raise BoundFailure("d=2 radical is not positive")
            return np.sqrt(inner) / L
        x_hi = matern_x_upper(info, d, n, sf2, sn2)
        f = lambda x: matern_truncation_residual(x, info, d, n, sf2, sn2)
        x_lo = 1e-12 * x_hi
        f_lo, f_hi = f(x_lo), f(x_hi)
        if f_lo <= 0:
            raise BoundFailure(
                f"tail bound already below budget at x={x_lo:.3g} (residual {f_lo:.3g}); no positive root")
        if f_hi > 0:
            raise BoundFailure(
                f"no root in (0, {x_hi:.6g}]: residual at upper bound is {f_hi:.3g}")
        x = optimize.brentq(f, x_lo, x_hi, xtol=1e-15 * x_hi, rtol=4 * np.finfo(float).eps,
                            maxiter=500)
        return x / L

    raise InvalidArgument(f"unknown decay class {info.kind}")


# ---------------------------------------------------------------------------
# quadrature size

def polyellipse_params(spec: KernelSpec, domain: HyperDomain, U, R=None) -> PolyellipseParams:
    U = np.atleast_1d(np.asarray(U, dtype=float))
    if np.any(~(U > 0)):
        raise InvalidArgument("U must be positive")
    R = spec.R if R is None else np.broadcast_to(np.asarray(R, dtype=float), (spec.dim,))
    ell0 = np.broadcast_to(domain.theta0_lower, (spec.dim,)).astype(float)
    d = spec.dim
    if spec.family == GAUSSIAN:
        beta = 2.0 * U
        log_C = (float(np.sum(np.log(ell0))) - 0.5 * d * math.log(2 * math.pi)
                 + 0.5 * float(np.sum(ell0**2 * U**2)))
        log_M = float(np.linalg.norm(U) * np.linalg.norm(R) / 2.0)
    elif spec.family == MATERN:
        nu = spec.nu
        beta = math.sqrt(2 * nu) / (ell0 * math.sqrt(d))
        log_C = (special.gammaln(nu + d / 2) - special.gammaln(nu) + float(np.sum(np.log(ell0)))
                 - 0.5 * d * math.log(2 * nu * math.pi) - (nu + d / 2) * math.log(0.75))
        log_M = float(np.linalg.norm(beta) * np.linalg.norm(R) / 4.0)
    elif spec.family == SEMIGROUP:
        lam0 = ell0[0]
        beta = 2.0 * U
        log_C = d * math.log(lam0) + lam0 * (math.sqrt(2) - 1) * float(np.sum(U)) / 2.0
        log_M = (math.sqrt(2) - 1) / 2.0 * float(np.dot(U, R))
    else:
        raise UnsupportedAnalyticity(
            f"no polyellipse constants for the {spec.family} family; its spectral "
            "density is not covered by the quadrature-size bound")
    return PolyellipseParams(beta=np.asarray(beta, dtype=float), rho=bernstein_rho(U, beta),
                             M_R=M_R, log_M=log_M, log_C=float(log_C))


def s_bound(spec: KernelSpec, domain: HyperDomain, n: int, U, pe: PolyellipseParams) -> np.ndarray:
    """Real-valued lower bound on ``s_k`` before rounding up."""
    corner = _corner(spec, domain, n)
    U = np.atleast_1d(np.asarray(U, dtype=float))
    d = spec.dim
    log_inner = ((2 * d + 2) * math.log(2) + 2 * pe.log_M + pe.log_C
                 - math.log(corner.sn2) + math.log(corner.sf2) + 2 * math.log(n))
    return (log_inner / d + np.log(U) - np.log(pe.rho - 1)) / (2 * np.log(pe.rho)) + 1


def compute_s(spec: KernelSpec, domain: HyperDomain, n: int, U, pe: PolyellipseParams) -> np.ndarray:
    b = s_bound(spec, domain, n, U, pe)
    return np.maximum(np.ceil(b), 1).astype(int)


# ---------------------------------------------------------------------------
# composition

@dataclass
class BoundPlan:
    spec: KernelSpec
    n: int
    U: np.ndarray
    s: np.ndarray
    polyellipse: PolyellipseParams | None
    s_theoretical: np.ndarray | None
    capped: bool = False
    notes: list = field(default_factory=list)

    @property
    def s_total(self) -> int:
        return int(np.prod(self.s))

    @property
    def s_total_theoretical(self) -> int | None:
        if self.s_theoretical is None:
            return None
        return int(np.prod(self.s_theoretical.astype(object)))

    def as_dict(self) -> dict:
        pe = self.polyellipse
        out = {"family": self.spec.family, "dim": self.spec.dim, "n": self.n}
        for k in range(self.spec.dim):
            out[f"U_{k + 1}"] = float(self.U[k])
            if pe is not None:
                out[f"beta_{k + 1}"] = float(pe.beta[k])
                out[f"rho_{k + 1}"] = float(pe.rho[k])
            out[f"s_{k + 1}"] = int(self.s[k])
            if pe is not None:
                out[f"s_theory_{k + 1}"] = int(self.s_theoretical[k])
        if pe is not None:
            out.update(M_R=pe.M_R, log_M_U_beta=pe.log_M, log_C_U_beta=pe.log_C,
                       M_U_beta=_safe_exp(pe.log_M), C_U_beta=_safe_exp(pe.log_C))
        out.update(s_tot=self.s_total, s_tot_theory=self.s_total_theoretical,
                   exceeds_n=None if pe is None else self.s_total_theoretical >= self.n,
                   capped=self.capped)
        return out

    def report(self) -> str:
        pe = self.polyellipse
        lines = [f"bound plan: {self.spec.family} kernel, d={self.spec.dim}, n={self.n}"]
        if pe is None:
            lines.append(f"{'k':>3} {'U':>12} {'s':>6}")
            lines += [f"{k + 1:>3} {self.U[k]:12.6g} {self.s[k]:6d}" for k in range(self.spec.dim)]
            lines.append(f"s_tot = {self.s_total} (no quadrature-size bound for this family)")
        else:
            lines.append(f"{'k':>3} {'U':>12} {'beta':>12} {'rho':>10} {'s':>6} {'s_theory':>9}")
            for k in range(self.spec.dim):
                lines.append(f"{k + 1:>3} {self.U[k]:12.6g} {pe.beta[k]:12.6g} {pe.rho[k]:10.6g} "
                             f"{self.s[k]:6d} {self.s_theoretical[k]:9d}")
            lines.append(f"M_R = {pe.M_R:g}   M_U,beta = {_safe_exp(pe.log_M):.6g}   "
                         f"C_U,beta = {_safe_exp(pe.log_C):.6g}")
            lines.append(f"s_tot = {self.s_total} (theory {self.s_total_theoretical})")
        lines.extend(f"note: {m}" for m in self.notes)
        return "\n".join(lines)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 700 else math.inf


def plan(spec: KernelSpec, domain: HyperDomain, n: int, *, R=None,
         max_features: int = DEFAULT_MAX_FEATURES, s_override=None) -> BoundPlan:
    """Compose ``compute_umin``, ``polyellipse_params`` and ``compute_s``.

    If the theoretical ``s_tot`` exceeds ``max_features`` the plan keeps the
    theoretical values for reporting and uses ``s_override`` (required in that
    case) for the working sizes.  Families without node-count constants
    (Laplacian) are planned only when ``s_override`` is given.
    """
    if R is not None:
        spec = spec.with_bounding_box(R)
    U = compute_umin(spec, domain, n)
    try:
        pe = polyellipse_params(spec, domain, U)
    except UnsupportedAnalyticity:
        if s_override is None:
            raise
        s = np.broadcast_to(np.asarray(s_override, dtype=int), (spec.dim,)).copy()
        return BoundPlan(spec=spec, n=int(n), U=U, s=s, polyellipse=None, s_theoretical=None,
                         capped=True, notes=[f"working sizes set to {s.tolist()} without a bound"])
    s_theory = compute_s(spec, domain, n, U, pe)
    bp = BoundPlan(spec=spec, n=int(n), U=U, s=s_theory.copy(), polyellipse=pe,
                   s_theoretical=s_theory)
    total = int(np.prod(s_theory.astype(object)))
    if total >= n:
        bp.notes.append(f"theoretical s_tot={total} is not smaller than n={n}")
    if s_override is not None:
        bp.s = np.broadcast_to(np.asarray(s_override, dtype=int), (spec.dim,)).copy()
        bp.capped = True
        bp.notes.append(f"working sizes overridden to {bp.s.tolist()}")
    elif total > max_features:
        raise BoundFailure(
            f"theoretical s_tot={total} exceeds max_features={max_features}; "
            "pass s_override to run with fewer features")
    return bp
