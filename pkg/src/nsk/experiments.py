"""Monte Carlo harnesses for the width, depth and Gaussianity experiments.

Each harness returns plain data (rows plus a verdict) that the CLI writes
as CSV/JSON and the acceptance tests gate on.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel_hom import diagonal_surface, discrete_surface
from .kernel_inhom import KernelParams
from .paths import Partition, PiecewiseLinearPath, synth_path
from .resnet import SimConfig, _increments, _run, init_weights, mc_ensemble, realization_config
from .rng import derive_seed
from .stats import SlopeFit, ks_statistic, loglog_slope, qq_points, wasserstein1_1d
from .vphi import RELU

__all__ = [
    "WIDTHS",
    "QQ_WIDTHS",
    "DEPTHS",
    "QQ_PARAMS",
    "gp_pair",
    "WidthSweep",
    "width_sweep",
    "Gaussianity",
    "gaussianity",
    "DepthSweep",
    "depth_sweep",
]

WIDTHS = (50, 100, 200, 400, 800)
QQ_WIDTHS = (10, 100, 500)
DEPTHS = tuple(2**k for k in range(5, 11))
QQ_PARAMS = KernelParams(0.5, 1.0, 1.2, RELU)


def gp_pair(seed: int, n_samples: int = 50) -> list[PiecewiseLinearPath]:
    """Two independent GP-RBF sample paths derived from ``seed``."""
    return [
        synth_path("gp_rbf", 1, n_samples, seed=derive_seed(seed, i, role="path"))
        for i in range(2)
    ]


@dataclass
class WidthSweep:
    widths: list
    mse: list
    stderr: list
    target: np.ndarray
    fit: SlopeFit
    slope_window: tuple = (-1.3, -0.7)
    min_r_squared: float = 0.9

    @property
    def passed(self) -> bool:
        lo, hi = self.slope_window
        return lo <= self.fit.slope <= hi and self.fit.r_squared >= self.min_r_squared

    def rows(self):
        return [
            {"N": n, "statistic": m, "stderr": s}
            for n, m, s in zip(self.widths, self.mse, self.stderr)
        ]


def width_sweep(
    paths=None,
    widths=WIDTHS,
    R: int = 250,
    depth: int = 200,
    params: KernelParams | None = None,
    seed: int = 0,
    threads: int = 1,
) -> WidthSweep:
    """MSE of ``<S(x_i), S(x_j)>/N`` against the infinite-width kernel, per width.

    The target is the infinite-width kernel of the same depth-``depth``
    network, so only the width error is measured. Squared errors are pooled
    over the distinct entries of the Gram matrix.
    """
    params = params or KernelParams()
    paths = list(paths) if paths is not None else gp_pair(seed)
    part = Partition.uniform(depth)
    n = len(paths)
    diags = [np.diag(diagonal_surface(p, part, params)).copy() for p in paths]
    target = np.empty((n, n))
    for i in range(n):
        target[i, i] = diags[i][-1]
        for j in range(i + 1, n):
            target[i, j] = target[j, i] = discrete_surface(
                paths[i], paths[j], part, part, params, diags[i], diags[j]
            ).corner
    iu = np.triu_indices(n)
    mses, ses = [], []
    for N in widths:
        cfg = SimConfig(N, part, "hom", params, seed, paths[0].dim)
        ens = mc_ensemble(cfg, paths, R, threads)
        # one pooled squared error per realisation keeps the samples independent
        sq = ((ens.inner_products - target)[:, iu[0], iu[1]] ** 2).mean(axis=1)
        mses.append(float(sq.mean()))
        ses.append(float(sq.std(ddof=1) / np.sqrt(R)))
    return WidthSweep(list(widths), mses, ses, target, loglog_slope(widths, mses))


@dataclass
class Gaussianity:
    widths: list
    variance: float
    ks: list
    qq: list = field(repr=False)

    @property
    def monotone(self) -> bool:
        stats = [k.stat for k in self.ks]
        return all(b < a for a, b in zip(stats, stats[1:]))

    @property
    def passed(self) -> bool:
        return self.ks[-1].passed and self.monotone

    def rows(self):
        return [
            {"N": n, "statistic": k.stat, "threshold": k.critical_01, "pass": k.passed}
            for n, k in zip(self.widths, self.ks)
        ]


def gaussianity(
    path: PiecewiseLinearPath | None = None,
    widths=QQ_WIDTHS,
    R: int = 250,
    depth: int = 100,
    params: KernelParams = QQ_PARAMS,
    seed: int = 0,
    reference_depth: int = 1000,
    threads: int = 1,
) -> Gaussianity:
    """KS and QQ diagnostics of network outputs against ``N(0, K(x, x)(1, 1))``.

    The variance comes from the infinite-width recursion on a
    ``reference_depth`` grid.
    """
    path = path if path is not None else synth_path("paper_2d", n_samples=100)
    variance = float(diagonal_surface(path, Partition.uniform(reference_depth), params)[-1, -1])
    part = Partition.uniform(depth)
    ks, qq = [], []
    for N in widths:
        cfg = SimConfig(N, part, "hom", params, seed, path.dim)
        samples = mc_ensemble(cfg, [path], R, threads).readout_samples[:, 0]
        ks.append(ks_statistic(samples, variance))
        qq.append(qq_points(samples, variance))
    return Gaussianity(list(widths), variance, ks, qq)


@dataclass
class DepthSweep:
    depths: list
    w1: list
    reference_depth: int
    fit: SlopeFit
    slope_window: tuple = (-0.8, -0.3)

    @property
    def passed(self) -> bool:
        lo, hi = self.slope_window
        return lo <= self.fit.slope <= hi

    def rows(self):
        return [{"M": m, "statistic": w} for m, w in zip(self.depths, self.w1)]


def depth_sweep(
    path: PiecewiseLinearPath | None = None,
    depths=DEPTHS,
    R: int = 200,
    width: int = 100,
    reference_depth: int = 2**14,
    params: KernelParams | None = None,
    seed: int = 0,
    threads: int = 1,
) -> DepthSweep:
    """W1 between outputs at depth ``M`` and at ``reference_depth``, same weights per draw."""
    params = params or KernelParams()
    path = path if path is not None else synth_path("cos_exp", n_samples=100)
    ref_part = Partition.uniform(reference_depth)
    base = SimConfig(width, ref_part, "hom", params, seed, path.dim)
    incs = [_increments([path], Partition.uniform(M)) for M in depths]
    ref_inc = _increments([path], ref_part)

    def one(r):
        w = init_weights(realization_config(base, r))
        deep = w.readout @ _run(w, ref_inc)[0][:, 0]
        return deep, [w.readout @ _run(w, inc)[0][:, 0] for inc in incs]

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(R)))
    else:
        results = [one(r) for r in range(R)]
    deep = np.array([res[0] for res in results])
    shallow = np.array([res[1] for res in results])
    w1 = [wasserstein1_1d(shallow[:, k], deep) for k in range(len(depths))]
    return DepthSweep(list(depths), w1, reference_depth, loglog_slope(depths, w1))
