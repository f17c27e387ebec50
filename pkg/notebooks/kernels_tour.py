# %% [markdown]
# # Kernels on paths
#
# The three kernel solvers on a few small paths: the inhomogeneous ODE and its
# closed forms, the homogeneous surface, and the signature kernel it reduces to
# for the identity activation.

# %%
import numpy as np
from scipy.special import i0

from nsk import KernelParams, Partition, PiecewiseLinearPath, synth_path
from nsk.kernel_hom import discrete_surface, sig_kernel_surface, sig_series_oracle
from nsk.kernel_inhom import closed_form_id, closed_form_relu_diag, solve_ode
from nsk.vphi import ERF, ID, RELU, Psd2, v_phi, v_phi_quadrature

# %% [markdown]
# ## The Gaussian expectation map
#
# Closed forms next to the quadrature oracle for one covariance.

# %%
sigma = Psd2(1.0, 0.3, 2.0)
for act in (ID, RELU, ERF):
    print(f"{act.name:5s} closed {v_phi(act, sigma):.12f}  quadrature {v_phi_quadrature(act, sigma):.12f}")

# %% [markdown]
# ## Inhomogeneous kernel
#
# For the identity the ODE has an exponential solution. The ReLU diagonal has
# one too.

# %%
line = PiecewiseLinearPath.line([1.0])
p = KernelParams(1.0, 1.0, 0.5)
print("id   RK4", solve_ode(line, line, p, 1000).value, "exact", closed_form_id(line, line, 1.0, p))

x = synth_path("cos_exp", n_samples=50).scaled(0.2)
p_relu = KernelParams(1.0, 1.0, 0.5, RELU)
exact = closed_form_relu_diag(x, 1.0, p_relu)
for steps in (500, 1000, 2000, 4000):
    rk4 = solve_ode(x, x, p_relu, steps).value
    euler = solve_ode(x, x, p_relu, steps, method="euler").value
    print(f"steps {steps:5d}  RK4 rel err {abs(rk4 - exact) / exact:.2e}  Euler rel err {abs(euler - exact) / exact:.2e}")

# %% [markdown]
# ## Homogeneous kernel and the signature kernel
#
# On the unit line the signature kernel at (1, 1) is I0(2). The surface solver
# converges to it at first order in the grid size.

# %%
oracle = sig_series_oracle(line, line, 1.0, 1.0, 15)
print("series", oracle.value, "I0(2)", float(i0(2.0)), "tail", oracle.tail_bound)
for M in (64, 128, 256, 512, 1024):
    D = Partition.uniform(M)
    corner = discrete_surface(line, line, D, D, KernelParams()).corner
    print(f"M={M:5d}  error {abs(corner - oracle.value):.3e}")

# %%
# identity activation with bias is an affine map of the signature kernel
p = KernelParams(0.5, 1.3, 0.8)
y = synth_path("paper_2d", n_samples=40).scaled(0.1)
z = synth_path("gp_rbf", d=2, n_samples=40, seed=3).scaled(0.3)
D = Partition.uniform(128)
ratio = p.var_b / p.var_A
lhs = discrete_surface(y, z, D, D, p).corner
rhs = (p.var_a + ratio) * sig_kernel_surface(y.scaled(p.sigma_A), z.scaled(p.sigma_A), D, D).corner - ratio
print("affine identity", lhs, rhs)

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    D = Partition.uniform(128)
    surf = discrete_surface(y, z, D, D, KernelParams(act=RELU))
    fig, ax = plt.subplots(figsize=(4, 3.5))
    im = ax.imshow(surf.values, origin="lower", extent=(0, 1, 0, 1))
    ax.set_xlabel("t")
    ax.set_ylabel("s")
    fig.colorbar(im)
    fig.savefig("kernel_surface.png", dpi=120, bbox_inches="tight")
