"""Neural signature kernels of wide homogeneous controlled ResNets.

The two-parameter kernel ``K(s, t)`` solves the Goursat problem

    d^2 K / ds dt = (sigma_A^2 V_phi(Sigma(s, t)) + sigma_b^2) <x'_s, y'_t>,
    K(s, 0) = K(0, t) = sigma_a^2,

where ``Sigma(s, t)`` pairs ``K`` with the diagonals ``K^{x,x}(s, s)`` and
``K^{y,y}(t, t)``. The infinite-width kernel of a network on a partition is
the explicit marching scheme

    K[m, n] = K[m-1, n] + K[m, n-1] - K[m-1, n-1]
              + (sigma_A^2 V_phi(Sigma[m-1, n-1]) + sigma_b^2) <dx_m, dy_n>,

which doubles as a first-order solver for the PDE. The innovation of row
``m`` only reads row ``m - 1``, so each row is a cumulative sum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, NumericalBreakdown
from .kernel_inhom import OFFDIAG_TOL, KernelParams
from .paths import Partition, PiecewiseLinearPath, _check_dims, norms
from .vphi import v_phi_arrays

__all__ = [
    "KernelSurface",
    "discrete_surface",
    "diagonal_surface",
    "sig_kernel_surface",
    "closed_form_hom_id",
    "sig_series_oracle",
    "SeriesResult",
    "gram_hom",
    "MAX_ORACLE_LEVEL",
    "MAX_ORACLE_DIM",
]

MAX_ORACLE_LEVEL = 15
MAX_ORACLE_DIM = 3


@dataclass(frozen=True, eq=False)
class KernelSurface:
    """Values ``K(s_i, t_j)`` on ``s_grid x t_grid`` with the diagonals they depend on."""

    s_grid: Partition
    t_grid: Partition
    values: np.ndarray
    diag_xx: np.ndarray
    diag_yy: np.ndarray

    @property
    def corner(self) -> float:
        """``K(1, 1)``."""
        return float(self.values[-1, -1])

    def at(self, s: float, t: float) -> float:
        """Value at the grid point nearest to ``(s, t)``."""
        i = int(np.argmin(np.abs(self.s_grid.points - s)))
        j = int(np.argmin(np.abs(self.t_grid.points - t)))
        return float(self.values[i, j])

    def rows(self):
        """Yield ``(s, t, value)`` in row-major order."""
        for i, s in enumerate(self.s_grid.points):
            for j, t in enumerate(self.t_grid.points):
                yield float(s), float(t), float(self.values[i, j])


def _inner_increments(x, y, D, D2):
    return x.increments(D) @ y.increments(D2).T


def _clamp_row(prev_diag_x, row, diag_y, where_row):
    """Clamp tiny PSD violations in ``row`` against ``diag_x * diag_y``."""
    bound = np.sqrt(np.maximum(prev_diag_x, 0.0) * np.maximum(diag_y, 0.0))
    excess = np.abs(row) - bound
    bad = excess > OFFDIAG_TOL * np.maximum(1.0, bound)
    if np.any(bad) or not np.all(np.isfinite(row)):
        n = int(np.argmax(bad | ~np.isfinite(row)))
        raise NumericalBreakdown(
            f"Sigma left the PSD cone at cell ({where_row}, {n})", location=(where_row, n)
        )
    over = excess > 0
    if np.any(over):
        row = np.where(over, np.copysign(bound, row), row)
    return row


def diagonal_surface(x: PiecewiseLinearPath, D: Partition, params: KernelParams) -> np.ndarray:
    """The full symmetric surface ``K^{x,x}`` on ``D x D``.

    Cell ``(m, n)`` needs the diagonal up to ``max(m, n) - 1``, so the
    lower triangle is filled row by row and mirrored.
    """
    ip = _inner_increments(x, x, D, D)
    M = D.M
    K = np.empty((M + 1, M + 1))
    K[0, :] = K[:, 0] = params.var_a
    diag = np.empty(M + 1)
    diag[0] = params.var_a
    for m in range(1, M + 1):
        # innovations for cells (m, 1..m) use Sigma at (m-1, 0..m-1)
        prev = K[m - 1, :m]
        prev = _clamp_row(diag[m - 1], prev, diag[:m], m - 1)
        v = v_phi_arrays(params.act, diag[m - 1], prev, diag[:m])
        inc = (params.var_A * v + params.var_b) * ip[m - 1, :m]
        # cells n < m: K[m, n] = K[m-1, n] + sum_{j<=n} inc
        row = np.empty(m + 1)
        row[0] = params.var_a
        row[1:m] = K[m - 1, 1:m] + np.cumsum(inc[: m - 1])
        # diagonal cell uses K[m-1, m] = K[m, m-1]
        row[m] = 2.0 * row[m - 1] - K[m - 1, m - 1] + inc[m - 1]
        if not np.all(np.isfinite(row)):
            raise NumericalBreakdown(f"non-finite diagonal surface at row {m}", location=(m, m))
        K[m, : m + 1] = row
        K[: m + 1, m] = row
        diag[m] = row[m]
    return K


def _cross(ip, diag_x, diag_y, params):
    M, M2 = ip.shape
    K = np.empty((M + 1, M2 + 1))
    K[0, :] = K[:, 0] = params.var_a
    for m in range(1, M + 1):
        prev = _clamp_row(diag_x[m - 1], K[m - 1, :M2], diag_y[:M2], m - 1)
        v = v_phi_arrays(params.act, diag_x[m - 1], prev, diag_y[:M2])
        inc = (params.var_A * v + params.var_b) * ip[m - 1]
        K[m, 1:] = K[m - 1, 1:] + np.cumsum(inc)
        if not np.all(np.isfinite(K[m])):
            n = int(np.argmax(~np.isfinite(K[m])))
            raise NumericalBreakdown(f"non-finite kernel at cell ({m}, {n})", location=(m, n))
    return K


def discrete_surface(
    x: PiecewiseLinearPath,
    y: PiecewiseLinearPath,
    D: Partition,
    D2: Partition,
    params: KernelParams,
    diag_xx: np.ndarray | None = None,
    diag_yy: np.ndarray | None = None,
) -> KernelSurface:
    """Cross surface ``K^{x,y}`` on ``D x D2``.

    The diagonals ``K^{x,x}(s_i, s_i)`` on ``D`` and ``K^{y,y}(t_j, t_j)`` on
    ``D2`` are computed first (or taken from the arguments), then the cross
    pass marches row by row.
    """
    _check_dims(x, y)
    if diag_xx is None:
        diag_xx = np.diag(diagonal_surface(x, D, params)).copy()
    if diag_yy is None:
        diag_yy = np.diag(diagonal_surface(y, D2, params)).copy()
    K = _cross(_inner_increments(x, y, D, D2), diag_xx, diag_yy, params)
    return KernelSurface(D, D2, K, np.asarray(diag_xx), np.asarray(diag_yy))


def sig_kernel_surface(
    x: PiecewiseLinearPath, y: PiecewiseLinearPath, D: Partition, D2: Partition
) -> KernelSurface:
    """Signature kernel by the marching scheme of ``k_st = <x'_s, y'_t> k``, boundary 1.

    ``k[m, n] = k[m-1, n] + k[m, n-1] - k[m-1, n-1] (1 - <dx_m, dy_n>)``.
    """
    _check_dims(x, y)
    ip = _inner_increments(x, y, D, D2)
    M, M2 = ip.shape
    k = np.empty((M + 1, M2 + 1))
    k[0, :] = k[:, 0] = 1.0
    for m in range(1, M + 1):
        k[m, 1:] = k[m - 1, 1:] + np.cumsum(k[m - 1, :-1] * ip[m - 1])
    return KernelSurface(D, D2, k, np.ones(M + 1), np.ones(M2 + 1))


def closed_form_hom_id(
    x: PiecewiseLinearPath,
    y: PiecewiseLinearPath,
    s: float,
    t: float,
    params: KernelParams,
    grid_M: int = 512,
) -> float:
    """Identity-activation kernel via the affine map of the signature kernel.

    ``(sigma_a^2 + sigma_b^2/sigma_A^2) k_sig(sigma_A x, sigma_A y)(s, t) -
    sigma_b^2/sigma_A^2`` with ``k_sig`` from :func:`sig_kernel_surface` on a
    uniform ``grid_M`` grid, read at the nearest grid point.
    """
    if grid_M < 2:
        raise ValueError("grid_M must be >= 2")
    D = Partition.uniform(grid_M)
    k = sig_kernel_surface(x.scaled(params.sigma_A), y.scaled(params.sigma_A), D, D).at(s, t)
    ratio = params.var_b / params.var_A
    return (params.var_a + ratio) * k - ratio


# ---------------------------------------------------------------------------
# Truncated signature series


@dataclass(frozen=True)
class SeriesResult:
    value: float
    tail_bound: float
    warning: bool


def _signature(path: PiecewiseLinearPath, level: int) -> list:
    """Levels 0..level of the signature, dense arrays of shape (d,)*n.

    Chen's identity over the linear pieces; a piece with increment ``v``
    has signature ``sum_n v^{(x)n} / n!`` and the product is formed with a
    Horner scheme per level.
    """
    d = path.dim
    sig = [np.ones(())] + [np.zeros((d,) * n) for n in range(1, level + 1)]
    for v in np.diff(path.values, axis=0):
        if not np.any(v):
            continue
        new = [sig[0]]
        for n in range(1, level + 1):
            acc = sig[0]
            for k in range(1, n + 1):
                acc = np.multiply.outer(acc, v / (n - k + 1)) + sig[k]
            new.append(acc)
        sig = new
    return sig


def sig_series_oracle(
    x: PiecewiseLinearPath,
    y: PiecewiseLinearPath,
    s: float = 1.0,
    t: float = 1.0,
    truncation: int = 12,
) -> SeriesResult:
    """Truncated ``sum_{n<=L} <Sig^n(x|[0,s]), Sig^n(y|[0,t])>`` with a factorial tail bound.

    The tail is bounded by ``sum_{n>L} (|x|_1 |y|_1)^n / (n!)^2`` using the
    1-variation of the restricted paths. ``warning`` is set when that bound
    exceeds 1.
    """
    _check_dims(x, y)
    L = int(truncation)
    if L < 1:
        raise ValueError("truncation level must be >= 1")
    if L > MAX_ORACLE_LEVEL or x.dim > MAX_ORACLE_DIM:
        raise CapacityError(
            f"oracle supports level <= {MAX_ORACLE_LEVEL} and dimension <= {MAX_ORACLE_DIM}"
        )
    if s <= 0.0 or t <= 0.0:
        return SeriesResult(1.0, 0.0, False)
    xs, ys = x.restricted(s), y.restricted(t)
    sx, sy = _signature(xs, L), _signature(ys, L)
    value = float(sum(np.sum(a * b) for a, b in zip(sx, sy)))

    r = norms(xs)["one_var"] * norms(ys)["one_var"]
    tail, n = 0.0, L + 1
    term = math.exp(n * math.log(r) - 2 * math.lgamma(n + 1)) if r > 0 else 0.0
    # terms decrease once n^2 > r
    while term > 0.0 and (n * n <= r or term > 1e-18 * tail):
        tail += term
        n += 1
        term *= r / (n * n)
    return SeriesResult(value, tail, tail > 1.0)


def gram_hom(
    paths: Sequence[PiecewiseLinearPath],
    params: KernelParams,
    grid_M: int = 128,
    workers: int | None = None,
) -> np.ndarray:
    """Gram matrix ``[K(x_i, x_j)(1, 1)]`` on a uniform ``grid_M`` grid.

    Each path's diagonal surface is computed once and shared by every pair.
    """
    if len(paths) < 1:
        raise ValueError("gram_hom needs at least one path")
    n = len(paths)
    D = Partition.uniform(grid_M)

    def diag(i):
        try:
            return diagonal_surface(paths[i], D, params)
        except NumericalBreakdown as exc:
            raise NumericalBreakdown(f"pair ({i}, {i}): {exc}", location=(i, i)) from exc

    def cross(pair):
        i, j = pair
        try:
            return discrete_surface(
                paths[i], paths[j], D, D, params, diags[i], diags[j]
            ).corner
        except NumericalBreakdown as exc:
            raise NumericalBreakdown(f"pair ({i}, {j}): {exc}", location=(i, j)) from exc

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            surfaces = list(pool.map(diag, range(n)))
            diags = [np.diag(S).copy() for S in surfaces]
            values = list(pool.map(cross, pairs))
    else:
        surfaces = [diag(i) for i in range(n)]
        diags = [np.diag(S).copy() for S in surfaces]
        values = [cross(p) for p in pairs]
    G = np.empty((n, n))
    for i, S in enumerate(surfaces):
        G[i, i] = S[-1, -1]
    for (i, j), v in zip(pairs, values):
        G[i, j] = G[j, i] = v
    return G
