"""Neural signature kernels and randomly initialised controlled ResNets.

Submodules
----------
paths
    Piecewise-linear paths, partitions, CSV ingestion and synthetic paths.
vphi
    Gaussian expectations ``V_phi`` of activations and their quadrature oracle.
kernel_inhom
    Limiting kernel of inhomogeneous networks (ODE, discrete recursion, closed forms).
kernel_hom
    Two-parameter kernel of homogeneous networks, signature kernel and series oracle.
resnet
    Finite-width simulators and Monte Carlo ensembles.
stats
    Slopes, KS, QQ and Wasserstein diagnostics.
experiments
    Width, depth and Gaussianity harnesses.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    IncompatiblePathsError,
    InvalidPSDError,
    NSKError,
    NumericalBreakdown,
    ParseError,
    PathError,
)
from .kernel_hom import (
    KernelSurface,
    closed_form_hom_id,
    discrete_surface,
    gram_hom,
    sig_kernel_surface,
    sig_series_oracle,
)
from .kernel_inhom import (
    KernelParams,
    closed_form_id,
    closed_form_relu_diag,
    discrete_kernel,
    gram,
    solve_ode,
)
from .paths import Partition, PiecewiseLinearPath, read_csv, synth_path, write_csv
from .resnet import SimConfig, cde_euler, forward, init_weights, mc_ensemble
from .vphi import ERF, ID, RELU, Activation, Psd2, v_phi, v_phi_quadrature

__all__ = [
    "__version__",
    "Activation",
    "CapacityError",
    "ERF",
    "ID",
    "IncompatiblePathsError",
    "InvalidPSDError",
    "KernelParams",
    "KernelSurface",
    "NSKError",
    "NumericalBreakdown",
    "ParseError",
    "Partition",
    "PathError",
    "PiecewiseLinearPath",
    "Psd2",
    "RELU",
    "SimConfig",
    "cde_euler",
    "closed_form_hom_id",
    "closed_form_id",
    "closed_form_relu_diag",
    "discrete_kernel",
    "discrete_surface",
    "forward",
    "gram",
    "gram_hom",
    "init_weights",
    "mc_ensemble",
    "read_csv",
    "sig_kernel_surface",
    "sig_series_oracle",
    "solve_ode",
    "synth_path",
    "v_phi",
    "v_phi_quadrature",
    "write_csv",
]
