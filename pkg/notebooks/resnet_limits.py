# %% [markdown]
# # Wide and deep controlled ResNets
#
# Monte Carlo runs of the randomly initialised network. Widths, depths and
# realization counts are smaller than the full harness so that the script runs
# in a few seconds; pass the defaults of the experiment functions to reproduce
# the full sweeps.

# %%
import numpy as np

from nsk import KernelParams, Partition, SimConfig, synth_path
from nsk.experiments import depth_sweep, gp_pair, width_sweep
from nsk.kernel_hom import discrete_surface
from nsk.resnet import mc_ensemble

# %% [markdown]
# ## One ensemble
#
# The readouts at two paths have an empirical covariance close to the kernel.

# %%
paths = gp_pair(0)
cfg = SimConfig(200, Partition.uniform(100), "hom", KernelParams(), seed=1, dim=1)
ens = mc_ensemble(cfg, paths, 200)
print("empirical covariance\n", np.cov(ens.readout_samples.T, bias=True))
D = Partition.uniform(100)
print("kernel", [discrete_surface(a, b, D, D, KernelParams()).corner for a, b in [(paths[0], paths[0]), (paths[0], paths[1])]])

# %% [markdown]
# ## Width
#
# The mean squared error of the inner products falls like 1/N.

# %%
res = width_sweep(widths=(25, 50, 100, 200), R=60, depth=50)
for row in res.rows():
    print(row)
print("slope", res.fit.slope, "r^2", res.fit.r_squared)

# %% [markdown]
# ## Depth
#
# With the weights held fixed, deeper discretizations approach the continuous
# limit; the W1 distance between readout distributions shrinks.

# %%
res = depth_sweep(depths=(32, 64, 128, 256), R=80, width=50, reference_depth=2048)
for row in res.rows():
    print(row)
print("slope", res.fit.slope)
