"""Datasets: the two wiggly synthetic benchmarks and CSV ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise InvalidArgument("X and y have different numbers of rows")
        for name in ("X", "y", "X_test", "y_test"):
            a = getattr(self, name)
            if a is not None and not np.all(np.isfinite(a)):
                raise InvalidArgument(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def f1(x):
    x = np.asarray(x, dtype=float)
    return np.sin(2 * x) + np.sin(6 * np.exp(x))


def f2(x1, x2):
    g = lambda t: np.sin(t) + np.sin(10 * np.exp(t))
    return g(np.asarray(x1, dtype=float)) * g(np.asarray(x2, dtype=float))


NOISE_1D = 0.5
NOISE_2D = 0.3


def synth_1d(n: int, seed: int = 0) -> Dataset:
    """``n`` equidistant samples of ``f1`` on ``[-1, 1]`` with N(0, 0.5^2) noise."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"synth_1d needs n >= 2, got {n}")
    x = np.linspace(-1.0, 1.0, int(n))
    rng = np.random.default_rng(seed)
    y = f1(x) + rng.normal(0.0, NOISE_1D, x.shape)
    return Dataset(x[:, None], y, provenance=f"synth_1d(n={n}, seed={seed})")


def synth_2d(n: int, seed: int = 0) -> Dataset:
    """Uniform ``sqrt(n) x sqrt(n)`` grid on ``[-1, 1]^2`` with N(0, 0.3^2) noise."""
    m = math.isqrt(int(n)) if n >= 1 else 0
    if int(n) != n or m * m != n or m < 2:
        raise InvalidArgument(f"synth_2d needs a perfect square n >= 4, got {n}")
    t = np.linspace(-1.0, 1.0, m)
    A, B = np.meshgrid(t, t, indexing="ij")
    X = np.column_stack([A.ravel(), B.ravel()])
    rng = np.random.default_rng(seed)
    y = f2(X[:, 0], X[:, 1]) + rng.normal(0.0, NOISE_2D, X.shape[0])
    return Dataset(X, y, provenance=f"synth_2d(n={n}, seed={seed})")


def split(ds: Dataset, test_fraction: float, seed: int = 0) -> Dataset:
    """Random held-out split.  The training part has ``floor((1 - f) n)`` rows
    and the test part the remaining ones."""
    if not 0.0 <= test_fraction < 1.0:
        raise InvalidArgument(f"test fraction must be in [0, 1), got {test_fraction}")
    n = ds.n
    n_train = math.floor((1.0 - test_fraction) * n + 1e-9)
    if n_train == n:
        return Dataset(ds.X, ds.y, provenance=ds.provenance)
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return Dataset(ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], provenance=ds.provenance)


def ingest_csv(path, d: int | None = None, split_fraction: float = 0.0, seed: int = 0, *,
               log_y: bool = False) -> Dataset:
    """Read a CSV with header ``x1,...,xd,y``.

    Malformed or non-finite rows raise :class:`InvalidArgument` naming the line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidArgument(f"{path}: empty file") from None
        dd = len(header) - 1
        expected = [f"x{k + 1}" for k in range(dd)] + ["y"]
        if dd < 1 or header != expected or (d is not None and dd != d):
            want = expected if d is None else [f"x{k + 1}" for k in range(d)] + ["y"]
            raise InvalidArgument(f"{path}: line 1: header must be {','.join(want)}, got {','.join(header)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != dd + 1:
                raise InvalidArgument(f"{path}: line {line}: expected {dd + 1} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InvalidArgument(f"{path}: line {line}: non-numeric value") from None
            if not all(math.isfinite(v) for v in vals):
                raise InvalidArgument(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise InvalidArgument(f"{path}: no data rows")
    A = np.asarray(rows)
    y = A[:, -1]
    if log_y:
        if np.any(y <= 0):
            raise InvalidArgument(f"{path}: log transform needs positive targets")
        y = np.log(y)
    ds = Dataset(A[:, :-1], y, provenance=str(path))
    return split(ds, split_fraction, seed) if split_fraction > 0 else ds


def write_csv(path, X, y) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and np.ndim(y) == 1 and len(y) != 1:
        X = X.T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(X.shape[1])] + ["y"])
        for row, v in zip(X, np.asarray(y, dtype=float)):
            w.writerow([repr(float(a)) for a in row] + [repr(float(v))])
