"""Randomly initialised controlled ResNets and their continuous-depth limits.

A controlled ResNet of width ``N`` on a partition ``0 = t_0 < ... < t_M = 1``
reads a path ``x`` through its increments:

    S_{i+1} = S_i + sum_j (A_j phi(S_i) + b_j) dx^j_{i+1},   S_0 = a,
    output  = <readout, S_M>.

*Homogeneous* networks share ``A_j ~ N(0, sigma_A^2/N)``, ``b_j ~ N(0, sigma_b^2)``
across layers. *Inhomogeneous* networks draw fresh weights per layer with
variances scaled by ``1/dt_i``. In both, ``a ~ N(0, sigma_a^2)`` and
``readout ~ N(0, 1/N)`` entrywise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NumericalBreakdown
from .kernel_inhom import KernelParams
from .paths import Partition, PiecewiseLinearPath
from .rng import ROLES, derive_seed, stream

__all__ = [
    "MODES",
    "SimConfig",
    "ResNetWeights",
    "ForwardResult",
    "EnsembleResult",
    "init_weights",
    "forward",
    "forward_many",
    "cde_euler",
    "sde_euler_inhom",
    "mc_ensemble",
    "realization_config",
]

MODES = ("hom", "inhom")
_MODE_KEY = {"hom": 0, "inhom": 1}
_FINITE_CHECK_EVERY = 32


@dataclass(frozen=True)
class SimConfig:
    """Width, partition, weight-sharing mode, hyperparameters, seed and input dimension."""

    width: int
    partition: Partition
    mode: str = "hom"
    params: KernelParams = field(default_factory=KernelParams)
    seed: int = 0
    dim: int = 1

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not isinstance(self.partition, Partition):
            raise TypeError("partition must be a Partition")

    @property
    def depth(self) -> int:
        return self.partition.M


@dataclass(frozen=True, eq=False)
class ResNetWeights:
    """Sampled initial vector, readout, weight matrices and biases.

    Homogeneous: ``matrices`` has shape (d, N, N) and ``biases`` (d, N).
    Inhomogeneous: shapes (M, d, N, N) and (M, d, N), or ``None`` to draw
    each layer on demand from its own stream (same values either way).
    """

    config: SimConfig
    a: np.ndarray
    readout: np.ndarray
    matrices: np.ndarray | None
    biases: np.ndarray | None

    def layer(self, i: int):
        """``(A, b)`` used by the update from ``t_i`` to ``t_{i+1}``."""
        cfg = self.config
        if cfg.mode == "hom":
            return self.matrices, self.biases
        if self.matrices is not None:
            return self.matrices[i], self.biases[i]
        return _draw_inhom_layer(cfg, i)

    def materialized(self) -> "ResNetWeights":
        if self.config.mode == "hom" or self.matrices is not None:
            return self
        layers = [_draw_inhom_layer(self.config, i) for i in range(self.config.depth)]
        return replace(
            self,
            matrices=np.stack([A for A, _ in layers]),
            biases=np.stack([b for _, b in layers]),
        )


def _draw_matrix(cfg, channel, layer, std):
    rng = stream(cfg.seed, _MODE_KEY[cfg.mode], ROLES["matrix"], channel, layer)
    return rng.standard_normal((cfg.width, cfg.width)) * std


def _draw_bias(cfg, channel, layer, std):
    rng = stream(cfg.seed, _MODE_KEY[cfg.mode], ROLES["bias"], channel, layer)
    return rng.standard_normal(cfg.width) * std


def _draw_inhom_layer(cfg, i):
    p, N = cfg.params, cfg.width
    dt = cfg.partition.dt[i]
    A = np.stack([_draw_matrix(cfg, j, i, p.sigma_A / math.sqrt(N * dt)) for j in range(cfg.dim)])
    b = np.stack([_draw_bias(cfg, j, i, p.sigma_b / math.sqrt(dt)) for j in range(cfg.dim)])
    return A, b


def init_weights(config: SimConfig, materialize: bool = False) -> ResNetWeights:
    """Sample weights; a deterministic function of ``config``."""
    p, N, mk = config.params, config.width, _MODE_KEY[config.mode]
    a = stream(config.seed, mk, ROLES["initial"]).standard_normal(N) * p.sigma_a
    readout = stream(config.seed, mk, ROLES["readout"]).standard_normal(N) / math.sqrt(N)
    if config.mode == "hom":
        std = p.sigma_A / math.sqrt(N)
        A = np.stack([_draw_matrix(config, j, 0, std) for j in range(config.dim)])
        b = np.stack([_draw_bias(config, j, 0, p.sigma_b) for j in range(config.dim)])
        return ResNetWeights(config, a, readout, A, b)
    w = ResNetWeights(config, a, readout, None, None)
    return w.materialized() if materialize else w


class ForwardResult(NamedTuple):
    trajectory: np.ndarray
    readout_value: float


class EnsembleResult(NamedTuple):
    readout_samples: np.ndarray
    inner_products: np.ndarray
    final_states: np.ndarray | None = None


def _check_weights(weights, config):
    wc = weights.config
    if (wc.width, wc.mode, wc.dim) != (config.width, config.mode, config.dim):
        raise ValueError("weights were sampled for a different configuration")


def _run(weights, increments, keep_trajectory=False):
    """March the recursion for P paths at once.

    ``increments`` has shape (M, d, P). Returns the final states (N, P) and,
    if requested, the trajectory (M + 1, N, P).
    """
    cfg = weights.config
    act = cfg.params.act
    M, d, P = increments.shape
    if d != cfg.dim:
        raise ValueError(f"path dimension {d} does not match weights dimension {cfg.dim}")
    N = cfg.width
    S = np.repeat(weights.a[:, None], P, axis=1)
    traj = np.empty((M + 1, N, P)) if keep_trajectory else None
    if keep_trajectory:
        traj[0] = S
    for i in range(M):
        A, b = weights.layer(i)
        phi = act(S)
        drift = (A.reshape(d * N, N) @ phi).reshape(d, N, P) + b[:, :, None]
        S = S + np.einsum("jnp,jp->np", drift, increments[i])
        if keep_trajectory:
            traj[i + 1] = S
        if (i + 1) % _FINITE_CHECK_EVERY == 0 or i + 1 == M:
            if not np.all(np.isfinite(S)):
                raise NumericalBreakdown(
                    f"hidden state overflowed by layer {i + 1}", location=i + 1
                )
    return S, traj


def _increments(paths, partition):
    return np.stack([p.increments(partition) for p in paths], axis=-1)


def forward(weights: ResNetWeights, config: SimConfig, x: PiecewiseLinearPath) -> ForwardResult:
    """Hidden states at every partition point and the scalar output."""
    _check_weights(weights, config)
    S, traj = _run(weights, _increments([x], config.partition), keep_trajectory=True)
    return ForwardResult(traj[:, :, 0], float(weights.readout @ S[:, 0]))


def forward_many(
    weights: ResNetWeights, config: SimConfig, paths: Sequence[PiecewiseLinearPath]
) -> np.ndarray:
    """Final hidden states for several paths, shape (N, n)."""
    _check_weights(weights, config)
    S, _ = _run(weights, _increments(paths, config.partition))
    return S


def cde_euler(
    weights: ResNetWeights, x: PiecewiseLinearPath, fine_partition: Partition
) -> np.ndarray:
    """Reference solution of ``dS = sum_j (A_j phi(S) + b_j) dx^j`` by Euler on a fine grid.

    Only meaningful for shared (homogeneous) weights, which do not depend
    on the partition.
    """
    if weights.config.mode != "hom":
        raise ValueError("cde_euler needs homogeneous weights")
    S, _ = _run(weights, _increments([x], fine_partition))
    return S[:, 0]


def sde_euler_inhom(config: SimConfig, x: PiecewiseLinearPath) -> float:
    """Output of the inhomogeneous network, read as an Euler-Maruyama sample.

    With ``dW ~ sqrt(dt) N(0, 1)``, the layer weights ``A_i ~ N(0,
    sigma_A^2/(N dt))`` satisfy ``A_i dx = (sigma_A/sqrt(N)) (dx/dt) dW``, so
    the forward pass is exactly one Euler-Maruyama path of the limiting SDE.

    The convergence result behind this reading assumes a path whose derivative
    is 1/2-Holder. Piecewise-linear inputs with few knots fall outside it; use
    densely sampled smooth paths when comparing against the limit.
    """
    if config.mode != "inhom":
        raise ValueError("sde_euler_inhom needs an inhomogeneous configuration")
    return forward(init_weights(config), config, x).readout_value


def realization_config(config: SimConfig, r: int) -> SimConfig:
    """Configuration of realisation ``r`` of an ensemble."""
    return replace(config, seed=derive_seed(config.seed, r))


def mc_ensemble(
    config: SimConfig,
    paths: Sequence[PiecewiseLinearPath],
    R: int,
    threads: int = 1,
    keep_states: bool = False,
) -> EnsembleResult:
    """Outputs and normalised Gram matrices ``<S(x_i), S(x_j)>/N`` over ``R`` weight draws.

    Realisation ``r`` uses seed ``derive_seed(config.seed, r)``; results do
    not depend on ``threads``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    paths = list(paths)
    n, N = len(paths), config.width
    inc = _increments(paths, config.partition)

    def one(r):
        cfg = realization_config(config, r)
        try:
            w = init_weights(cfg)
            S, _ = _run(w, inc)
        except NumericalBreakdown as exc:
            raise NumericalBreakdown(f"realization {r}: {exc}", location=(r, exc.location)) from exc
        return w.readout @ S, (S.T @ S) / N, S

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(R)))
    else:
        results = [one(r) for r in range(R)]
    readouts = np.stack([res[0] for res in results]).reshape(R, n)
    inner = np.stack([res[1] for res in results]).reshape(R, n, n)
    states = np.stack([res[2] for res in results]) if keep_states else None
    return EnsembleResult(readouts, inner, states)
