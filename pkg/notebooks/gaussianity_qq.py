# %% [markdown]
# # Gaussian readouts
#
# At large width the readout at a fixed path is close to a centred Gaussian
# whose variance is the kernel diagonal. This script draws readouts, compares
# them with that Gaussian and writes a QQ plot when matplotlib is available.

# %%
import numpy as np

from nsk.experiments import QQ_PARAMS, gaussianity
from nsk.kernel_hom import diagonal_surface
from nsk.paths import Partition, synth_path

# %%
res = gaussianity(widths=(10, 100), R=100)
print("reference variance", res.variance)
for row in res.rows():
    print(row)

# %% [markdown]
# The network at depth M is compared against the kernel computed on the M-step
# grid too. The two variances differ because the discrete kernel has not yet
# converged in the grid size on this path.

# %%
path = synth_path("paper_2d", n_samples=100)
print("kernel at the network depth", diagonal_surface(path, Partition.uniform(100), QQ_PARAMS)[-1, -1])

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, axes = plt.subplots(1, len(res.widths), figsize=(4 * len(res.widths), 3.5))
    for ax, n, pts in zip(np.atleast_1d(axes), res.widths, res.qq):
        ax.plot(pts[:, 0], pts[:, 1], ".", ms=3)
        lim = np.abs(pts).max()
        ax.plot([-lim, lim], [-lim, lim], "k--", lw=0.8)
        ax.set_title(f"N = {n}")
        ax.set_xlabel("theoretical")
    np.atleast_1d(axes)[0].set_ylabel("empirical")
    fig.savefig("qq.png", dpi=120, bbox_inches="tight")
