"""Limiting kernel of wide inhomogeneous controlled ResNets.

The kernel ``kappa(x, y)(t)`` solves the coupled one-parameter system

    d/dt kappa^{x,y} = (sigma_A^2 V_phi(Sigma(t)) + sigma_b^2) <x'_t, y'_t>,
    Sigma(t) = [[kappa^{x,x}, kappa^{x,y}], [kappa^{x,y}, kappa^{y,y}]],

with every component starting at ``sigma_a^2``. The three components are
evolved jointly. On a partition the infinite-width kernel is exactly the
explicit Euler scheme of this system (``discrete_kernel``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NumericalBreakdown
from .paths import Partition, PiecewiseLinearPath, _check_dims, integral_inner
from .vphi import ID, Activation, v_phi_arrays

__all__ = [
    "KernelParams",
    "KernelTriple",
    "KernelTrajectory",
    "discrete_kernel",
    "solve_ode",
    "closed_form_id",
    "closed_form_relu_diag",
    "gram",
    "OFFDIAG_TOL",
]

# Relative amount by which |k_xy| may exceed sqrt(k_xx k_yy) before the
# solver gives up; smaller excesses are clamped.
OFFDIAG_TOL = 1e-8


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters ``(sigma_a, sigma_A, sigma_b, activation)`` of both model families."""

    sigma_a: float = 1.0
    sigma_A: float = 1.0
    sigma_b: float = 0.0
    act: Activation = ID

    def __post_init__(self):
        if not self.sigma_a > 0 or not self.sigma_A > 0:
            raise ValueError("sigma_a and sigma_A must be > 0")
        if not self.sigma_b >= 0:
            raise ValueError("sigma_b must be >= 0")

    @classmethod
    def parse(cls, text: str, act: Activation | str = ID) -> "KernelParams":
        """From ``"sigma_a,sigma_A,sigma_b"``."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated values, got {text!r}")
        if isinstance(act, str):
            act = Activation.from_name(act)
        return cls(*parts, act=act)

    def rescaled(self) -> "KernelParams":
        """Parameters ``(sigma_a, 1, sigma_b / sigma_A)`` of the path-rescaling symmetry."""
        return replace(self, sigma_A=1.0, sigma_b=self.sigma_b / self.sigma_A)

    @property
    def var_a(self):
        return self.sigma_a**2

    @property
    def var_A(self):
        return self.sigma_A**2

    @property
    def var_b(self):
        return self.sigma_b**2

    def as_dict(self) -> dict:
        return {
            "sigma_a": self.sigma_a,
            "sigma_A": self.sigma_A,
            "sigma_b": self.sigma_b,
            "activation": self.act.name,
        }


class KernelTriple(NamedTuple):
    k_xx: float
    k_xy: float
    k_yy: float


@dataclass(frozen=True, eq=False)
class KernelTrajectory:
    """The coupled state ``(k_xx, k_xy, k_yy)`` on a time grid."""

    times: np.ndarray
    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray

    @property
    def final(self) -> KernelTriple:
        return KernelTriple(float(self.xx[-1]), float(self.xy[-1]), float(self.yy[-1]))

    @property
    def value(self) -> float:
        """``kappa(x, y)(1)``."""
        return float(self.xy[-1])

    def as_array(self) -> np.ndarray:
        """Columns ``t, k_xx, k_xy, k_yy``."""
        return np.column_stack([self.times, self.xx, self.xy, self.yy])


def _project(xx, xy, yy, where):
    """Clamp tiny PSD violations of the off-diagonal; raise on large ones."""
    bound = math.sqrt(max(xx, 0.0) * max(yy, 0.0))
    excess = abs(xy) - bound
    if excess > 0.0:
        if excess > OFFDIAG_TOL * max(1.0, bound) or not math.isfinite(xy):
            raise NumericalBreakdown(
                f"kernel state left the PSD cone at {where}: "
                f"k_xx={xx!r}, k_xy={xy!r}, k_yy={yy!r}",
                location=where,
            )
        xy = math.copysign(bound, xy)
    if not (math.isfinite(xx) and math.isfinite(yy)):
        raise NumericalBreakdown(f"non-finite kernel state at {where}", location=where)
    return xy


def _drift(params, xx, xy, yy):
    """``sigma_A^2 V_phi + sigma_b^2`` for the three components."""
    v = v_phi_arrays(
        params.act,
        np.array([xx, xx, yy]),
        np.array([xx, xy, yy]),
        np.array([xx, yy, yy]),
    )
    return params.var_A * v + params.var_b


def discrete_kernel(
    x: PiecewiseLinearPath,
    y: PiecewiseLinearPath,
    part: Partition,
    params: KernelParams,
) -> KernelTrajectory:
    """Infinite-width kernel of a depth-``M`` inhomogeneous ResNet.

    Runs ``k(t_i) = k(t_{i-1}) + (sigma_A^2 V_phi(Sigma(t_{i-1})) + sigma_b^2)
    <dx_i, dy_i> / dt_i`` for the three components jointly, from
    ``sigma_a^2``.
    """
    _check_dims(x, y)
    dx, dy, dt = x.increments(part), y.increments(part), part.dt
    c_xx = np.einsum("ij,ij->i", dx, dx) / dt
    c_xy = np.einsum("ij,ij->i", dx, dy) / dt
    c_yy = np.einsum("ij,ij->i", dy, dy) / dt

    M = part.M
    out = np.empty((3, M + 1))
    xx = xy = yy = params.var_a
    out[:, 0] = xx, xy, yy
    for i in range(M):
        f = _drift(params, xx, xy, yy)
        xx = xx + f[0] * c_xx[i]
        xy = xy + f[1] * c_xy[i]
        yy = yy + f[2] * c_yy[i]
        xy = _project(xx, xy, yy, i + 1)
        out[:, i + 1] = xx, xy, yy
    return KernelTrajectory(part.points, out[0], out[1], out[2])


def _ode_grid(x, y, steps):
    return Partition.uniform(steps).refine(x.times, y.times)


def solve_ode(
    x: PiecewiseLinearPath,
    y: PiecewiseLinearPath,
    params: KernelParams,
    steps: int = 1000,
    method: str = "rk4",
) -> KernelTrajectory:
    """Integrate the kernel ODE on ``steps`` uniform steps refined by all path knots.

    Within each step the derivative products are constant, so RK4 keeps its
    order despite the driver jumping at knots.
    """
    _check_dims(x, y)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    grid = _ode_grid(x, y, steps)
    t = grid.points
    h = grid.dt
    mids = 0.5 * (t[1:] + t[:-1])
    sx = x.slopes[np.clip(np.searchsorted(x.times, mids, side="right") - 1, 0, x.K - 1)]
    sy = y.slopes[np.clip(np.searchsorted(y.times, mids, side="right") - 1, 0, y.K - 1)]
    c = np.stack(
        [
            np.einsum("ij,ij->i", sx, sx),
            np.einsum("ij,ij->i", sx, sy),
            np.einsum("ij,ij->i", sy, sy),
        ],
        axis=1,
    )

    n = h.size
    out = np.empty((3, n + 1))
    k = np.full(3, params.var_a)
    out[:, 0] = k

    def rhs(state, ci, where):
        xy = _project(state[0], state[1], state[2], where)
        return _drift(params, state[0], xy, state[2]) * ci

    for i in range(n):
        ci, hi = c[i], h[i]
        if method == "euler":
            k = k + hi * rhs(k, ci, i)
        else:
            k1 = rhs(k, ci, i)
            k2 = rhs(k + 0.5 * hi * k1, ci, i)
            k3 = rhs(k + 0.5 * hi * k2, ci, i)
            k4 = rhs(k + hi * k3, ci, i)
            k = k + (hi / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k[1] = _project(k[0], k[1], k[2], i + 1)
        out[:, i + 1] = k
    return KernelTrajectory(t, out[0], out[1], out[2])


def closed_form_id(x, y, t: float, params: KernelParams) -> float:
    """Exact kernel for the identity activation (activation in ``params`` ignored)."""
    ratio = params.var_b / params.var_A
    return (params.var_a + ratio) * math.exp(params.var_A * integral_inner(x, y, t)) - ratio


def closed_form_relu_diag(x, t: float, params: KernelParams) -> float:
    """Exact diagonal ``kappa(x, x)(t)`` for ReLU."""
    ratio = 2.0 * params.var_b / params.var_A
    return (params.var_a + ratio) * math.exp(0.5 * params.var_A * integral_inner(x, x, t)) - ratio


def gram(
    paths: Sequence[PiecewiseLinearPath],
    params: KernelParams,
    steps: int = 1000,
    method: str = "rk4",
    workers: int | None = None,
) -> np.ndarray:
    """Gram matrix ``[kappa(x_i, x_j)(1)]``; upper triangle solved, then mirrored."""
    if len(paths) < 1:
        raise ValueError("gram needs at least one path")
    n = len(paths)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]

    def solve(pair):
        i, j = pair
        try:
            return solve_ode(paths[i], paths[j], params, steps, method).value
        except NumericalBreakdown as exc:
            raise NumericalBreakdown(f"pair ({i}, {j}): {exc}", location=(i, j)) from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(solve, pairs))
    else:
        values = [solve(p) for p in pairs]
    G = np.empty((n, n))
    for (i, j), v in zip(pairs, values):
        G[i, j] = G[j, i] = v
    return G
