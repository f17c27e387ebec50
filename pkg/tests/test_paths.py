import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_path
from nsk.errors import (
    DuplicateTimestampError,
    IncompatiblePathsError,
    NonNumericFieldError,
    PathError,
    TooFewRowsError,
)
from nsk.paths import (
    Partition,
    PiecewiseLinearPath,
    deriv_inner,
    derivative_at,
    increment,
    ingest_csv,
    integral_inner,
    norms,
    read_csv,
    synth_path,
    write_csv,
)


def two_knot(values):
    return PiecewiseLinearPath([0.0, 0.5, 1.0], np.array(values, dtype=float)[:, None])


# derivative_at


def test_derivative_single_segment():
    x = PiecewiseLinearPath([0.0, 1.0], [[0.0], [2.0]])
    assert derivative_at(x, 0.5) == pytest.approx([2.0])


def test_derivative_constant_path():
    assert np.all(derivative_at(PiecewiseLinearPath.constant(3), 0.3) == 0.0)


def test_derivative_flat_second_segment():
    assert derivative_at(two_knot([0, 1, 1]), 0.75) == pytest.approx([0.0])


def test_derivative_takes_right_slope_at_knots_and_last_at_one():
    x = two_knot([0, 1, 3])
    assert derivative_at(x, 0.5) == pytest.approx([4.0])
    assert derivative_at(x, 0.0) == pytest.approx([2.0])
    assert derivative_at(x, 1.0) == pytest.approx([4.0])


# increment


def test_increment_line():
    assert increment(PiecewiseLinearPath.line([1.0]), 0.2, 0.7) == pytest.approx([0.5])


def test_increment_empty_interval(rng):
    x = random_path(rng, 2)
    assert np.all(increment(x, 0.4, 0.4) == 0.0)


def test_increment_across_knot():
    assert increment(two_knot([0, 1, 3]), 0.25, 0.75) == pytest.approx([1.5])


# deriv_inner


def test_deriv_inner_unit_slopes():
    x = PiecewiseLinearPath.line([1.0])
    assert deriv_inner(x, x, 0.1, 0.9) == 1.0


def test_deriv_inner_orthogonal():
    assert deriv_inner(
        PiecewiseLinearPath.line([1.0, 0.0]), PiecewiseLinearPath.line([0.0, 1.0]), 0.3, 0.6
    ) == 0.0


def test_deriv_inner_scalar_product():
    x = PiecewiseLinearPath.line([3.0])
    y = PiecewiseLinearPath.line([-2.0])
    assert deriv_inner(x, y, 0.2, 0.8) == -6.0


def test_deriv_inner_dimension_mismatch():
    with pytest.raises(IncompatiblePathsError):
        deriv_inner(PiecewiseLinearPath.line([1.0]), PiecewiseLinearPath.line([1.0, 0.0]), 0, 0)


# norms


def test_norms_line():
    assert norms(PiecewiseLinearPath.line([1.0])) == pytest.approx({"one_var": 1.0, "l2_deriv": 1.0})


def test_norms_constant():
    assert norms(PiecewiseLinearPath.constant()) == {"one_var": 0.0, "l2_deriv": 0.0}


def test_norms_tent():
    assert norms(two_knot([0, 1, 0])) == pytest.approx({"one_var": 2.0, "l2_deriv": 2.0})


def test_one_var_below_l2_on_random_paths(rng):
    for _ in range(100):
        n = norms(random_path(rng, int(rng.integers(1, 4))))
        assert n["one_var"] <= n["l2_deriv"] + 1e-12


# ingestion


def test_ingest_shift_and_rescale():
    x = ingest_csv([(0, 5), (2, 7)])
    assert list(x.times) == [0.0, 1.0]
    assert x.values[:, 0].tolist() == [0.0, 2.0]


def test_ingest_sorts():
    x = ingest_csv([(1, 1), (0, 0), (2, 4)])
    assert x.times.tolist() == [0.0, 0.5, 1.0]
    assert x.values[:, 0].tolist() == [0.0, 1.0, 4.0]


def test_ingest_single_row():
    with pytest.raises(TooFewRowsError):
        ingest_csv([(0, 1)])


def test_ingest_duplicate_timestamps():
    with pytest.raises(DuplicateTimestampError):
        ingest_csv([(0, 1), (1, 2), (1, 3)])


def test_ingest_non_numeric():
    with pytest.raises(NonNumericFieldError):
        ingest_csv([(0, 1), (1, "x")])


def test_parse_errors_are_distinct():
    kinds = {TooFewRowsError, DuplicateTimestampError, NonNumericFieldError}
    assert len(kinds) == 3
    assert all(issubclass(k, PathError) for k in kinds)


def test_ingest_header_and_comments():
    text = "# produced elsewhere\ntime,a,b\n0,1,1\n1,2,3\n"
    x = read_csv(io.StringIO(text))
    assert x.dim == 2
    assert x.values[-1].tolist() == [1.0, 2.0]


def test_csv_roundtrip(rng):
    x = random_path(rng, 3)
    y = read_csv(io.StringIO(write_csv(x)))
    assert np.array_equal(x.times, y.times)
    assert np.array_equal(x.values, y.values)


# synthetic paths


def test_synth_line():
    x = synth_path("line", d=2, n_samples=2)
    assert x.times.tolist() == [0.0, 1.0]
    assert x.values.tolist() == [[0.0, 0.0], [1.0, 0.0]]


def test_synth_paper_2d():
    x = synth_path("paper_2d", n_samples=100)
    t = np.linspace(0, 1, 100)
    expected = np.stack([np.sin(15 * t), np.cos(30 * t) + 3 * np.exp(t)], axis=1) - [0.0, 4.0]
    assert x.K == 99
    np.testing.assert_allclose(x.values, expected, atol=1e-12)


def test_synth_gp_deterministic():
    a = synth_path("gp_rbf", 2, 50, seed=11)
    b = synth_path("gp_rbf", 2, 50, seed=11)
    c = synth_path("gp_rbf", 2, 50, seed=12)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_synth_unknown_kind():
    with pytest.raises(PathError):
        synth_path("spiral")


# invariants


@pytest.mark.parametrize("kind", ["line", "paper_2d", "cos_exp", "gp_rbf"])
def test_generated_paths_are_normalised(kind):
    x = synth_path(kind, n_samples=30, seed=1)
    assert x.times[0] == 0.0 and x.times[-1] == 1.0
    assert np.all(x.values[0] == 0.0)


def test_rejects_bad_paths():
    with pytest.raises(PathError):
        PiecewiseLinearPath([0.0, 1.0], [[1.0], [2.0]])
    with pytest.raises(PathError):
        PiecewiseLinearPath([0.0, 0.5], [[0.0], [2.0]])
    with pytest.raises(PathError):
        PiecewiseLinearPath([0.0, 0.6, 0.5, 1.0], np.zeros((4, 1)))


def test_partition_validation():
    with pytest.raises(PathError):
        Partition([0.0, 0.5, 0.5, 1.0])
    p = Partition.uniform(4)
    assert p.M == 4 and p.mesh == pytest.approx(0.25)
    assert Partition.uniform(2).refine([0.25]).points.tolist() == [0.0, 0.25, 0.5, 1.0]


seeds = st.integers(0, 2**32 - 1)
unit = st.floats(0.0, 1.0)


@given(seeds, unit, unit, unit)
def test_increment_additive(seed, a, b, c):
    a, b, c = sorted((a, b, c))
    x = random_path(np.random.default_rng(seed), 2)
    np.testing.assert_allclose(increment(x, a, b) + increment(x, b, c), increment(x, a, c), atol=1e-12)


@given(seeds)
def test_full_increment_is_endpoint(seed):
    x = random_path(np.random.default_rng(seed), 3)
    np.testing.assert_allclose(increment(x, 0.0, 1.0), x.values[-1], atol=1e-12)


@given(seeds, unit, unit, st.floats(-5, 5))
def test_deriv_inner_symmetric_and_bilinear(seed, s, t, c):
    rng = np.random.default_rng(seed)
    x, y = random_path(rng, 2), random_path(rng, 2)
    assert deriv_inner(x, x, s, t) == pytest.approx(deriv_inner(x, x, t, s), abs=1e-12)
    assert deriv_inner(x.scaled(c), y, s, t) == pytest.approx(c * deriv_inner(x, y, s, t), rel=1e-12, abs=1e-12)


@given(seeds)
def test_integral_inner_matches_fine_riemann_sum(seed):
    rng = np.random.default_rng(seed)
    x, y = random_path(rng, 2), random_path(rng, 2)
    part = Partition.uniform(64).refine(x.times, y.times)
    exact = np.sum(np.einsum("ij,ij->i", x.increments(part), y.increments(part)) / part.dt)
    assert integral_inner(x, y) == pytest.approx(exact, rel=1e-10, abs=1e-12)
