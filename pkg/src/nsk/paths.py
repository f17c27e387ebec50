"""Piecewise-linear paths on [0, 1] and the partitions they are sampled on.

Every path starts at the origin and lives on the unit time interval. Values
between samples are obtained by linear interpolation, so the derivative is
piecewise constant and all integrals of derivative products are finite sums.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateTimestampError,
    IncompatiblePathsError,
    NonNumericFieldError,
    ParseError,
    PathError,
    TooFewRowsError,
)

__all__ = [
    "PiecewiseLinearPath",
    "Partition",
    "derivative_at",
    "increment",
    "deriv_inner",
    "norms",
    "integral_inner",
    "ingest_csv",
    "read_csv",
    "write_csv",
    "synth_path",
    "SYNTH_KINDS",
]

_RBF_JITTER_START = 1e-10
_RBF_JITTER_MAX = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Partition:
    """Strictly increasing grid ``0 = t_0 < ... < t_M = 1``."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise PathError("a partition needs at least two points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise PathError("a partition must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise PathError("partition points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, M: int) -> "Partition":
        if M < 1:
            raise PathError("depth M must be >= 1")
        pts = np.linspace(0.0, 1.0, M + 1)
        pts[-1] = 1.0
        return cls(pts)

    @property
    def M(self) -> int:
        return self.points.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def mesh(self) -> float:
        return float(self.dt.max())

    def refine(self, *others: Iterable[float]) -> "Partition":
        """Union of this grid with other knot sets."""
        pts = [self.points] + [np.asarray(o, dtype=float) for o in others]
        return Partition(np.unique(np.concatenate(pts)))

    def __len__(self):
        return self.points.size

    def __repr__(self):
        return f"Partition(M={self.M}, mesh={self.mesh:.3g})"


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """A continuous path ``x: [0, 1] -> R^d`` with ``x(0) = 0``.

    Parameters
    ----------
    times : array_like, shape (K + 1,)
        Knots, strictly increasing from 0 to 1.
    values : array_like, shape (K + 1, d) or (K + 1,)
        Path values at the knots; the first row must be zero.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 2:
            raise PathError("a path needs at least two knots")
        if v.ndim != 2 or v.shape[0] != t.size or v.shape[1] < 1:
            raise PathError(f"values shape {v.shape} does not match {t.size} knots")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise PathError("path times must start at 0 and end at 1")
        if np.any(np.diff(t) <= 0):
            raise PathError("path times must be strictly increasing")
        if np.any(v[0] != 0.0):
            raise PathError("paths must start at the origin")
        if not np.all(np.isfinite(v)):
            raise PathError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_samples(cls, times, values) -> "PiecewiseLinearPath":
        """Build a path from raw samples: sort, rescale time to [0, 1], shift to 0."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        order = np.argsort(t, kind="stable")
        t, v = t[order], v[order]
        if t.size < 2:
            raise TooFewRowsError("need at least two samples")
        if np.any(np.diff(t) == 0):
            raise DuplicateTimestampError("duplicate timestamps")
        t = (t - t[0]) / (t[-1] - t[0])
        t[-1] = 1.0
        return cls(t, v - v[0])

    @classmethod
    def constant(cls, d: int = 1) -> "PiecewiseLinearPath":
        return cls([0.0, 1.0], np.zeros((2, d)))

    @classmethod
    def line(cls, direction) -> "PiecewiseLinearPath":
        """The straight line ``t -> t * direction``."""
        v = np.atleast_1d(np.asarray(direction, dtype=float))
        return cls([0.0, 1.0], np.stack([np.zeros_like(v), v]))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def K(self) -> int:
        return self.times.size - 1

    @property
    def slopes(self) -> np.ndarray:
        """Per-segment derivative, shape (K, d)."""
        return np.diff(self.values, axis=0) / np.diff(self.times)[:, None]

    def __call__(self, t):
        """Evaluate the linear interpolant at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.stack(
            [np.interp(t, self.times, self.values[:, k]) for k in range(self.dim)],
            axis=-1,
        )
        return out

    def on(self, partition: Partition) -> np.ndarray:
        """Values at the partition points, shape (M + 1, d)."""
        return self(partition.points)

    def increments(self, partition: Partition) -> np.ndarray:
        """Increments over the partition intervals, shape (M, d)."""
        return np.diff(self.on(partition), axis=0)

    def scaled(self, c: float) -> "PiecewiseLinearPath":
        return PiecewiseLinearPath(self.times, c * self.values)

    def restricted(self, t: float) -> "PiecewiseLinearPath":
        """The path on [0, t], reparametrised to [0, 1].

        Signatures and 1-variation are invariant under this reparametrisation.
        """
        if not 0.0 < t <= 1.0:
            raise PathError("restriction time must lie in (0, 1]")
        if t == 1.0:
            return self
        inner = self.times[(self.times > 0.0) & (self.times < t)]
        knots = np.concatenate([[0.0], inner, [t]])
        return PiecewiseLinearPath(knots / t, self(knots))

    def __repr__(self):
        return f"PiecewiseLinearPath(d={self.dim}, K={self.K})"


def _segment_index(path: PiecewiseLinearPath, t):
    idx = np.searchsorted(path.times, t, side="right") - 1
    return np.clip(idx, 0, path.K - 1)


def derivative_at(path: PiecewiseLinearPath, t: float) -> np.ndarray:
    """Slope of the segment containing ``t``.

    Interior knots take the right-hand slope; ``t = 1`` takes the last one.
    """
    return path.slopes[_segment_index(path, t)]


def increment(path: PiecewiseLinearPath, a: float, b: float) -> np.ndarray:
    """``x(b) - x(a)``."""
    if a == b:
        return np.zeros(path.dim)
    return path(b) - path(a)


def _check_dims(x, y):
    if x.dim != y.dim:
        raise IncompatiblePathsError(f"path dimensions differ: {x.dim} != {y.dim}")


def deriv_inner(x: PiecewiseLinearPath, y: PiecewiseLinearPath, s: float, t: float) -> float:
    """``<x'(s), y'(t)>`` for the piecewise-constant derivatives."""
    _check_dims(x, y)
    return float(derivative_at(x, s) @ derivative_at(y, t))


def integral_inner(x: PiecewiseLinearPath, y: PiecewiseLinearPath, t: float = 1.0) -> float:
    """Exact ``int_0^t <x'(u), y'(u)> du`` summed over common sub-segments."""
    _check_dims(x, y)
    if t <= 0.0:
        return 0.0
    knots = np.union1d(x.times, y.times)
    knots = np.union1d(knots[knots < t], [t])
    mids = 0.5 * (knots[1:] + knots[:-1])
    sx = x.slopes[_segment_index(x, mids)]
    sy = y.slopes[_segment_index(y, mids)]
    return float(np.sum(np.einsum("ij,ij->i", sx, sy) * np.diff(knots)))


def norms(path: PiecewiseLinearPath) -> dict:
    """1-variation and L2-derivative norms on [0, 1]."""
    dt = np.diff(path.times)
    speed = np.linalg.norm(path.slopes, axis=1)
    return {
        "one_var": float(np.sum(speed * dt)),
        "l2_deriv": float(math.sqrt(np.sum(speed**2 * dt))),
    }


# ---------------------------------------------------------------------------
# CSV input / output


def _parse_float(field, row_no, col_no):
    try:
        return float(field)
    except ValueError:
        raise NonNumericFieldError(
            f"non-numeric field {field!r} at row {row_no}, column {col_no}"
        ) from None


def _is_numeric_row(row):
    try:
        [float(f) for f in row]
    except ValueError:
        return False
    return True


def ingest_csv(rows: Sequence[Sequence]) -> PiecewiseLinearPath:
    """Build a path from ``(time, v_1, ..., v_d)`` rows.

    Rows may arrive unsorted. A leading non-numeric row is treated as a
    header; rows whose first field starts with ``#`` are comments. Times are affinely mapped onto [0, 1] and the first value is
    subtracted so the path starts at the origin.
    """
    rows = [
        list(r)
        for r in rows
        if len(r) and any(str(f).strip() for f in r) and not str(r[0]).lstrip().startswith("#")
    ]
    if rows and not _is_numeric_row(rows[0]):
        rows = rows[1:]
    if len(rows) < 2:
        raise TooFewRowsError(f"need at least 2 data rows, got {len(rows)}")
    width = len(rows[0])
    if width < 2:
        raise ParseError("each row needs a time column and at least one value column")
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"row {i} has {len(row)} fields, expected {width}")
        data[i] = [_parse_float(str(f).strip(), i, j) for j, f in enumerate(row)]
    return PiecewiseLinearPath.from_samples(data[:, 0], data[:, 1:])


def read_csv(source) -> PiecewiseLinearPath:
    """Read a path from a CSV file name or an open text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return ingest_csv(list(csv.reader(fh)))
    return ingest_csv(list(csv.reader(source)))


def write_csv(path: PiecewiseLinearPath, dest=None, header: bool = True) -> str:
    """Write ``time, x1..xd`` rows; returns the text when ``dest`` is None."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(["time"] + [f"x{k + 1}" for k in range(path.dim)])
    for t, v in zip(path.times, path.values):
        w.writerow([repr(float(t))] + [repr(float(c)) for c in v])
    text = buf.getvalue()
    if dest is None:
        return text
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)
    return text


# ---------------------------------------------------------------------------
# Synthetic paths

SYNTH_KINDS = ("line", "paper_2d", "cos_exp", "gp_rbf")


def _rbf_cholesky(grid, lengthscale_coef):
    diff = grid[:, None] - grid[None, :]
    gram = np.exp(-lengthscale_coef * diff**2)
    jitter = _RBF_JITTER_START
    while jitter <= _RBF_JITTER_MAX:
        try:
            return np.linalg.cholesky(gram + jitter * np.eye(grid.size))
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise PathError(f"RBF Gram matrix not positive definite with jitter up to {_RBF_JITTER_MAX}")


def synth_path(kind: str, d: int = 1, n_samples: int = 100, params=None, seed=None):
    """Generate one of the benchmark paths.

    Parameters
    ----------
    kind : {'line', 'paper_2d', 'cos_exp', 'gp_rbf'}
        ``line``: ``t -> t * v`` with ``v = params['direction']`` (default
        ``e_1`` in ``R^d``). ``paper_2d``: ``(sin 15t, cos 30t + 3e^t)``.
        ``cos_exp``: ``cos 15t + 3e^t``. ``gp_rbf``: a sample path of a centred
        Gaussian process with kernel ``exp(-5 (s - t)^2)`` on [-2, 2].
    d : int
        Output dimension for ``line`` and ``gp_rbf`` (independent channels).
    n_samples : int
        Number of regularly spaced observation times.
    params : dict, optional
        ``direction`` for ``line``; ``interval`` (default ``(-2, 2)``) and
        ``coef`` (default 5) for ``gp_rbf``.
    seed : int, optional
        Seed for ``gp_rbf``; fixed seeds give identical paths.

    Returns
    -------
    PiecewiseLinearPath
        Basepoint-shifted path on [0, 1].
    """
    params = dict(params or {})
    if n_samples < 2:
        raise PathError("n_samples must be >= 2")
    t = np.linspace(0.0, 1.0, n_samples)
    if kind == "line":
        direction = params.get("direction")
        if direction is None:
            direction = np.eye(d)[0]
        direction = np.atleast_1d(np.asarray(direction, dtype=float))
        return PiecewiseLinearPath.from_samples(t, t[:, None] * direction[None, :])
    if kind == "paper_2d":
        vals = np.stack([np.sin(15 * t), np.cos(30 * t) + 3 * np.exp(t)], axis=1)
        return PiecewiseLinearPath.from_samples(t, vals)
    if kind == "cos_exp":
        return PiecewiseLinearPath.from_samples(t, np.cos(15 * t) + 3 * np.exp(t))
    if kind == "gp_rbf":
        lo, hi = params.get("interval", (-2.0, 2.0))
        grid = np.linspace(lo, hi, n_samples)
        chol = _rbf_cholesky(grid, params.get("coef", 5.0))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        vals = chol @ rng.standard_normal((n_samples, d))
        return PiecewiseLinearPath.from_samples(grid, vals)
    raise PathError(f"unknown synthetic path kind {kind!r}; choose from {SYNTH_KINDS}")
