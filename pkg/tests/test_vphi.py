import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsk.errors import InvalidPSDError
from nsk.vphi import (
    ERF,
    ID,
    RELU,
    Activation,
    Psd2,
    gamma,
    random_psd2,
    v_phi,
    v_phi_quadrature,
)

NAMED = [ID, RELU, ERF]


# gamma


def test_gamma_ratio():
    assert gamma(Psd2(1, 0.5, 1)) == 0.5


def test_gamma_rank_one():
    assert gamma(Psd2(4, 4, 4)) == 1.0


def test_gamma_clamps_rounding_excess():
    assert gamma(Psd2(1, 1 + 1e-12, 1)) == 1.0


def test_gamma_degenerate():
    assert gamma(Psd2(0, 0, 3)) == 0.0
    with pytest.raises(InvalidPSDError):
        gamma(Psd2(0, 1e-3, 3))


def test_psd_validation():
    with pytest.raises(InvalidPSDError):
        Psd2(1, 2, 1)
    with pytest.raises(InvalidPSDError):
        Psd2(-1, 0, 1)
    assert Psd2(2, 0, 0.5).in_psd2_R(2)
    assert not Psd2(3, 0, 0.5).in_psd2_R(2)


# closed forms


def test_vphi_id():
    assert v_phi(ID, Psd2(1, 0.5, 1)) == 0.5


def test_vphi_relu_rank_one():
    assert v_phi(RELU, Psd2(4, 4, 4)) == pytest.approx(2.0, abs=1e-15)


def test_vphi_relu_independent():
    assert v_phi(RELU, Psd2(1, 0, 1)) == pytest.approx(1 / (2 * math.pi), abs=1e-15)


def test_vphi_erf_independent():
    assert v_phi(ERF, Psd2(1, 0, 1)) == 0.0


def test_vphi_erf_zero_variance():
    assert v_phi(ERF, Psd2(0, 0, 0)) == 0.0


def test_relu_matches_unrewritten_arccos_form():
    # the textbook form divides by gamma; compare away from gamma = 0
    rng = np.random.default_rng(3)
    for _ in range(200):
        s = random_psd2(rng, 10)
        g = gamma(s)
        if abs(g) < 1e-3:
            continue
        theta = math.acos(g)
        textbook = math.sqrt(s.v11 * s.v22) / (2 * math.pi) * (math.sin(theta) + (math.pi - theta) * math.cos(theta))
        assert v_phi(RELU, s) == pytest.approx(textbook, rel=1e-12, abs=1e-14)


# quadrature oracle


def test_quadrature_id_exact():
    assert v_phi_quadrature(ID, Psd2(1, 0.5, 1), 200) == pytest.approx(0.5, abs=1e-10)


def test_quadrature_relu_rank_one():
    assert v_phi_quadrature(RELU, Psd2(4, 4, 4), 200) == pytest.approx(2.0, abs=1e-8)


def test_quadrature_erf():
    s = Psd2(0.5, 0.25, 0.5)
    assert v_phi_quadrature(ERF, s, 200) == pytest.approx(v_phi(ERF, s), abs=1e-8)


def test_plain_hermite_is_too_coarse_for_relu():
    # motivates the panel rule used by default for non-polynomial activations
    s = Psd2(1, 0.3, 2)
    assert abs(v_phi_quadrature(RELU, s, 200, rule="hermite") - v_phi(RELU, s)) > 1e-8
    assert abs(v_phi_quadrature(RELU, s, 200) - v_phi(RELU, s)) < 1e-10


def test_quadrature_rejects_few_nodes():
    with pytest.raises(ValueError):
        v_phi_quadrature(ID, Psd2(1, 0, 1), 5)


@pytest.mark.parametrize("act", NAMED, ids=lambda a: a.name)
@pytest.mark.parametrize("a", [0.25, 1.0, 4.0])
def test_diagonal_consistency(act, a):
    z, w = np.polynomial.legendre.leggauss(400)
    z, w = 12 * z, 12 * w  # E[phi(sqrt(a) Z)^2] by 1-d quadrature on [-12, 12]
    one_d = float(np.sum(w * act(math.sqrt(a) * z) ** 2 * np.exp(-z * z / 2)) / math.sqrt(2 * math.pi))
    if act is RELU:  # kink at 0: integrate the half line exactly instead
        one_d = a / 2
    assert v_phi(act, Psd2(a, a, a)) == pytest.approx(one_d, abs=1e-8)
    assert v_phi_quadrature(act, Psd2(a, a, a)) == pytest.approx(one_d, abs=1e-8)


def test_tabulated_relu_matches_closed_form():
    xs = np.linspace(-3, 3, 7)
    act = Activation.tabulated(xs, np.maximum(xs, 0))
    s = Psd2(1.5, -0.4, 0.7)
    assert v_phi(act, s) == pytest.approx(v_phi(RELU, s), abs=1e-8)
    assert act.linear_bound() == pytest.approx(1.0)


def test_tabulated_extrapolates_linearly():
    act = Activation.tabulated([0, 1, 2], [0, 1, 3])
    assert act(np.array([-1.0, 3.0])).tolist() == [-1.0, 5.0]


def test_tabulated_validation():
    with pytest.raises(ValueError):
        Activation.tabulated([0, 0, 1], [0, 1, 2])
    with pytest.raises(ValueError):
        Activation.from_name("tanh")


# properties

seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_symmetry_under_swap(seed):
    s = random_psd2(np.random.default_rng(seed), 10)
    for act in NAMED:
        assert v_phi(act, s) == pytest.approx(v_phi(act, s.swapped()), rel=1e-13, abs=1e-15)


@given(seeds)
def test_random_psd2_in_range(seed):
    s = random_psd2(np.random.default_rng(seed), 10)
    assert s.in_psd2_R(10)
    assert s.v12**2 <= s.v11 * s.v22 + 1e-10


def test_linear_bound_on_random_matrices():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        s = random_psd2(rng)
        env = 5 * (1 + math.sqrt(s.v11)) * (1 + math.sqrt(s.v22))
        for act in NAMED:
            v = v_phi(act, s)
            assert math.isfinite(v) and abs(v) <= env


def test_lipschitz_on_psd2_4():
    def quotients(eps):
        out = []
        rng_local = np.random.default_rng(7)
        for _ in range(1000):
            s = random_psd2(rng_local, 4)
            d = rng_local.uniform(-1, 1, 3) * eps
            try:
                t = Psd2(s.v11 * (1 + d[0]), s.v12 * (1 + d[1]), s.v22 * (1 + d[2]))
            except InvalidPSDError:
                continue
            norm = max(abs(t.v11 - s.v11), abs(t.v12 - s.v12), abs(t.v22 - s.v22))
            if norm == 0 or not t.in_psd2_R(4):
                continue
            out.append([abs(v_phi(a, t) - v_phi(a, s)) / norm for a in NAMED])
        return np.percentile(np.array(out), 99, axis=0)

    q1, q2, q3 = quotients(1e-2), quotients(5e-3), quotients(2.5e-3)
    assert np.all(np.isfinite(q1))
    # halving the perturbation must not blow the ratio up
    assert np.all(q2 <= 1.5 * q1 + 1e-12)
    assert np.all(q3 <= 1.5 * q2 + 1e-12)
