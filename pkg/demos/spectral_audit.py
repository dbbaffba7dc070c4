"""Check that the planned feature set reproduces the exact kernel matrix to
within the (1 +- 1/n) spectral band, at the domain corner and away from it.

    python3 demos/spectral_audit.py
"""
import numpy as np

from glfgp import HyperDomain, HyperParams, KernelSpec, plan, spectral_equivalence_check
from glfgp.features import approx_kernel_matrix
from glfgp.kernels import kernel_matrix
from glfgp.quadrature import tensor_grid

n = 100
spec = KernelSpec("gaussian", bounding_box=[2.0])
domain = HyperDomain.from_corner([0.5], 1.0, 0.1)
bp = plan(spec, domain, n)
grid = tensor_grid(bp.U, bp.s)
X = np.random.default_rng(0).uniform(-1, 1, (n, 1))

for ell in (0.5, 1.0, 2.0, 4.0):
    theta = HyperParams([ell], 1.0, 0.1)
    rep = spectral_equivalence_check(kernel_matrix(spec, theta, X), approx_kernel_matrix(spec, grid, theta, X))
    print(f"lengthscale {ell:4.1f}: band [{rep.lam_min:.6f}, {rep.lam_max:.6f}]  "
          f"{'equivalent' if rep.passed else 'outside band'}  KL {rep.kl:.2e}")
