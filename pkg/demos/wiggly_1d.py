"""Learn hyperparameters on the 1D wiggly benchmark with quadrature features
and the dense solver, then compare test errors across feature counts.

    python3 demos/wiggly_1d.py
"""
import warnings

import numpy as np

from glfgp import HyperDomain, KernelSpec, build_feature_matrix, learn, plan, predict, train
from glfgp.data import split, synth_1d
from glfgp.gpr import exact_gpr
from glfgp.quadrature import tensor_grid

warnings.simplefilter("ignore", RuntimeWarning)

ds = split(synth_1d(800, 0), 0.2, 0)
spec = KernelSpec("gaussian", bounding_box=[2.0])
domain = HyperDomain.from_corner([0.05], 4.0, 0.01)

theta, _ = learn("exact", (spec, ds.X), domain, ds.y)
exact = exact_gpr(spec, theta, ds.X, ds.y, ds.X_test, with_grad=False).predictions
print(f"exact  theta={theta.as_vector().round(4)}  mse={np.mean((exact - ds.y_test) ** 2):.5f}")

bp = plan(spec, domain, ds.n)
print(bp.report())
for s in (8, 16, 32, 64, int(bp.s[0])):
    fm = build_feature_matrix(ds.X, tensor_grid(bp.U, [s]), spec, ds.y)
    theta, trace = learn("glf", fm, domain)
    pred = predict(train(fm, theta), ds.X_test)
    print(f"glf s={s:4d}  iterations={trace.iterations:3d}  mse={np.mean((pred - ds.y_test) ** 2):.5f}")
