import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import i0

from conftest import random_path
from nsk.errors import NumericalBreakdown
from nsk.kernel_inhom import KernelParams
from nsk.paths import Partition, PiecewiseLinearPath, synth_path
from nsk.resnet import (
    ResNetWeights,
    SimConfig,
    cde_euler,
    forward,
    forward_many,
    init_weights,
    mc_ensemble,
    realization_config,
    sde_euler_inhom,
)
from nsk.stats import loglog_slope
from nsk.vphi import RELU


def cfg(N=20, M=16, mode="hom", params=None, seed=0, dim=1):
    return SimConfig(N, Partition.uniform(M), mode, params or KernelParams(), seed, dim)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(N=0)
    with pytest.raises(ValueError):
        cfg(mode="shared")


# init_weights


@pytest.mark.parametrize("mode", ["hom", "inhom"])
def test_weights_deterministic(mode):
    c = cfg(mode=mode, dim=2, params=KernelParams(1, 1, 0.5))
    a, b = init_weights(c, materialize=True), init_weights(c, materialize=True)
    for f in ("a", "readout", "matrices", "biases"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_lazy_and_materialized_layers_agree():
    c = cfg(mode="inhom", dim=2, params=KernelParams(1, 1, 0.5))
    lazy, full = init_weights(c), init_weights(c, materialize=True)
    for i in (0, 7, 15):
        assert np.array_equal(lazy.layer(i)[0], full.layer(i)[0])
        assert np.array_equal(lazy.layer(i)[1], full.layer(i)[1])


def test_modes_do_not_share_draws():
    h = init_weights(cfg(mode="hom"))
    i = init_weights(cfg(mode="inhom"), materialize=True)
    assert not np.array_equal(h.a, i.a)
    assert not np.array_equal(h.matrices[0], i.matrices[0, 0] * math.sqrt(1 / 16))


def test_hom_matrix_variance():
    N = 1000
    w = init_weights(cfg(N=N, params=KernelParams(1.0, 1.7, 0.3)))
    var = w.matrices.var()
    assert 0.95 <= var / (1.7**2 / N) <= 1.05


def test_inhom_bias_and_matrix_variance():
    N, M = 1000, 100
    w = init_weights(cfg(N=N, M=M, mode="inhom", params=KernelParams(1.0, 0.9, 1.3)), materialize=True)
    assert 0.95 <= w.biases.var() / (1.3**2 * M) <= 1.05
    assert 0.95 <= w.matrices[:5].var() / (0.9**2 * M / N) <= 1.05


def test_initial_and_readout_variance():
    N = 1000
    ws = [init_weights(cfg(N=N, M=1, params=KernelParams(0.6), seed=s)) for s in range(100)]
    a = np.concatenate([w.a for w in ws])
    r = np.concatenate([w.readout for w in ws])
    assert 0.95 <= a.var() / 0.36 <= 1.05
    assert 0.95 <= r.var() * N <= 1.05


def test_inhom_variance_uses_own_step():
    part = Partition([0.0, 0.1, 1.0])
    c = SimConfig(2000, part, "inhom", KernelParams(1, 1, 1), 3)
    w = init_weights(c, materialize=True)
    assert 0.95 <= w.biases[0].var() / 10 <= 1.05
    assert 0.95 <= w.biases[1].var() / (1 / 0.9) <= 1.05


# forward


def test_constant_path_returns_initial_state():
    c = cfg(N=30, params=KernelParams(1, 1, 0.7, RELU))
    w = init_weights(c)
    res = forward(w, c, PiecewiseLinearPath.constant())
    assert np.all(res.trajectory == w.a)
    assert res.readout_value == pytest.approx(float(w.readout @ w.a), abs=0)


def test_hand_recursion():
    c = SimConfig(1, Partition.uniform(1))
    w = ResNetWeights(c, np.array([1.0]), np.array([1.0]), np.array([[[2.0]]]), np.array([[0.0]]))
    res = forward(w, c, PiecewiseLinearPath.line([1.0]))
    assert res.trajectory[:, 0].tolist() == [1.0, 3.0]
    assert res.readout_value == 3.0


def test_hand_recursion_inhom_two_layers():
    c = SimConfig(1, Partition.uniform(2), "inhom")
    A = np.array([[[[2.0]]], [[[-1.0]]]])
    b = np.array([[[1.0]], [[0.5]]])
    w = ResNetWeights(c, np.array([1.0]), np.array([2.0]), A, b)
    res = forward(w, c, PiecewiseLinearPath.line([1.0]))
    # S1 = 1 + (2*1 + 1) * 0.5 = 2.5 ; S2 = 2.5 + (-2.5 + 0.5) * 0.5 = 1.5
    assert res.trajectory[:, 0].tolist() == [1.0, 2.5, 1.5]
    assert res.readout_value == 3.0


def test_forward_many_matches_forward(rng):
    c = cfg(N=25, dim=2, params=KernelParams(1, 1, 0.2, RELU))
    w = init_weights(c)
    paths = [random_path(rng, 2) for _ in range(3)]
    S = forward_many(w, c, paths)
    for k, p in enumerate(paths):
        np.testing.assert_allclose(S[:, k], forward(w, c, p).trajectory[-1], rtol=1e-13, atol=1e-13)


def test_readout_is_linear(rng):
    c = cfg(N=40, params=KernelParams(act=RELU))
    w = init_weights(c)
    x = random_path(rng)
    S = forward(w, c, x).trajectory[-1]
    u, v = rng.standard_normal(40), rng.standard_normal(40)
    val = lambda r: forward(ResNetWeights(c, w.a, r, w.matrices, w.biases), c, x).readout_value
    assert val(2 * u - 3 * v) == pytest.approx(2 * val(u) - 3 * val(v), abs=1e-12 * (1 + np.abs(S).sum()))


def test_overflow_raises_with_layer():
    c = cfg(N=10, M=400, params=KernelParams(1.0, 100.0, 0.0))
    x = PiecewiseLinearPath.line([1000.0])
    with pytest.raises(NumericalBreakdown) as info:
        forward(init_weights(c), c, x)
    loc = info.value.location
    assert isinstance(loc, int) and (loc % 32 == 0 or loc == 400)


def test_weights_for_other_config_rejected():
    with pytest.raises(ValueError):
        forward(init_weights(cfg(N=5)), cfg(N=6), PiecewiseLinearPath.line([1.0]))
    with pytest.raises(ValueError):
        forward(init_weights(cfg(N=5)), cfg(N=5), PiecewiseLinearPath.line([1.0, 0.0]))


# continuous-depth limits


def test_cde_euler_same_partition_bitwise(rng):
    c = cfg(N=30, M=64, dim=2, params=KernelParams(1, 1, 0.4, RELU))
    w = init_weights(c)
    x = random_path(rng, 2)
    assert np.array_equal(cde_euler(w, x, c.partition), forward(w, c, x).trajectory[-1])


def test_cde_euler_constant_path():
    c = cfg(N=12)
    w = init_weights(c)
    assert np.array_equal(cde_euler(w, PiecewiseLinearPath.constant(), Partition.uniform(100)), w.a)


def test_cde_euler_rejects_inhom():
    c = cfg(mode="inhom")
    with pytest.raises(ValueError):
        cde_euler(init_weights(c), PiecewiseLinearPath.line([1.0]), c.partition)


def test_depth_converges_first_order():
    x = synth_path("cos_exp", n_samples=100).scaled(0.3)
    c = cfg(N=50, params=KernelParams(1, 1, 0.5))
    w = init_weights(c)
    ref = cde_euler(w, x, Partition.uniform(2**14))
    depths = [2**k for k in range(5, 13)]
    errs = [np.abs(cde_euler(w, x, Partition.uniform(M)) - ref).max() for M in depths]
    fit = loglog_slope(depths, errs)
    assert -1.2 <= fit.slope <= -0.8, fit


def test_hom_depth_m_vs_2m_is_order_one_over_m():
    x = PiecewiseLinearPath.line([1.0])
    c = cfg(N=50)
    w = init_weights(c)
    diffs = [
        abs(w.readout @ (cde_euler(w, x, Partition.uniform(M)) - cde_euler(w, x, Partition.uniform(2 * M))))
        for M in (64, 128, 256, 512)
    ]
    ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
    assert np.all((ratios > 1.6) & (ratios < 2.4)), ratios


def test_sde_euler_is_forward():
    c = cfg(N=15, M=40, mode="inhom", params=KernelParams(1, 1, 0.3, RELU), seed=9)
    x = synth_path("cos_exp", n_samples=20)
    assert sde_euler_inhom(c, x) == forward(init_weights(c), c, x).readout_value
    w = init_weights(c)
    assert sde_euler_inhom(c, PiecewiseLinearPath.constant()) == pytest.approx(float(w.readout @ w.a), abs=0)
    with pytest.raises(ValueError):
        sde_euler_inhom(cfg(), x)


@pytest.mark.slow
def test_sde_readout_variance_matches_closed_form():
    c = cfg(N=200, M=1000, mode="inhom", seed=2024)
    ens = mc_ensemble(c, [PiecewiseLinearPath.line([1.0])], 250)
    y2 = ens.readout_samples[:, 0] ** 2
    se = y2.std(ddof=1) / math.sqrt(y2.size)
    assert abs(y2.mean() - math.e) <= 3 * se, (y2.mean(), se)


# ensembles


def test_ensemble_single_realization_matches_forward(rng):
    c = cfg(N=20, dim=2, seed=77)
    paths = [random_path(rng, 2), random_path(rng, 2)]
    ens = mc_ensemble(c, paths, 1)
    cr = realization_config(c, 0)
    w = init_weights(cr)
    for k, p in enumerate(paths):
        assert ens.readout_samples[0, k] == pytest.approx(forward(w, cr, p).readout_value, rel=1e-12)
    S = forward_many(w, cr, paths)
    assert np.array_equal(ens.inner_products[0], S.T @ S / 20)


def test_ensemble_thread_independent(rng):
    c = cfg(N=30, M=20, dim=2, params=KernelParams(1, 1, 0.3, RELU), seed=5)
    paths = [random_path(rng, 2) for _ in range(3)]
    a = mc_ensemble(c, paths, 12, threads=1)
    b = mc_ensemble(c, paths, 12, threads=4)
    assert np.array_equal(a.readout_samples, b.readout_samples)
    assert np.array_equal(a.inner_products, b.inner_products)


def test_ensemble_inhom_thread_independent():
    c = cfg(N=10, M=20, mode="inhom", seed=5)
    x = PiecewiseLinearPath.line([1.0])
    assert np.array_equal(mc_ensemble(c, [x], 6).readout_samples, mc_ensemble(c, [x], 6, threads=3).readout_samples)


def test_ensemble_mean_kernel_id():
    c = cfg(N=400, M=200, seed=11)
    ens = mc_ensemble(c, [PiecewiseLinearPath.line([1.0])], 250)
    ip = ens.inner_products[:, 0, 0]
    assert abs(ip.mean() - float(i0(2))) <= 3 * ip.std(ddof=1) / math.sqrt(250)


def test_ensemble_failure_has_realization():
    c = cfg(N=10, M=400, params=KernelParams(1.0, 100.0, 0.0))
    with pytest.raises(NumericalBreakdown) as info:
        mc_ensemble(c, [PiecewiseLinearPath.line([1000.0])], 3)
    assert info.value.location[0] == 0


@pytest.mark.slow
def test_inner_product_variance_scales_like_one_over_n():
    x = PiecewiseLinearPath.line([1.0])
    y = synth_path("cos_exp", n_samples=50).scaled(0.3)
    widths = [50, 100, 200, 400, 800]
    variances = []
    for N in widths:
        ens = mc_ensemble(cfg(N=N, M=50, seed=31), [x, y], 200)
        variances.append(ens.inner_products[:, 0, 1].var(ddof=1))
    fit = loglog_slope(widths, variances)
    assert -1.3 <= fit.slope <= -0.7, fit


seeds = st.integers(0, 2**63)


@given(seeds)
def test_zero_path_collapse_any_weights(seed):
    c = cfg(N=8, M=5, dim=3, mode="inhom", params=KernelParams(1, 2, 1, RELU), seed=seed)
    w = init_weights(c)
    assert np.array_equal(forward(w, c, PiecewiseLinearPath.constant(3)).trajectory[-1], w.a)


@given(seeds)
def test_seed_determines_output(seed):
    c = cfg(N=6, M=8, seed=seed)
    x = PiecewiseLinearPath.line([0.5])
    assert forward(init_weights(c), c, x).readout_value == forward(init_weights(c), c, x).readout_value
