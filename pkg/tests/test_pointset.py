from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from msqi.errors import ConfigError
from msqi.pointset import (Domain, PointSet, build_level_sequence, fill_distance, grid_axes,
                           halton, halton_base_set, halton_sequence, halton_tile,
                           separation_radius, UNIT_SQUARE)


def radical_inverse(i, b):
    """Digit-reversal with exact rationals."""
    out, scale = Fraction(0), Fraction(1, b)
    while i:
        i, d = divmod(i, b)
        out += d * scale
        scale /= b
    return out


@pytest.mark.parametrize("i,b,expected", [(1, 2, 0.5), (3, 2, 0.75), (5, 3, 7 / 9)])
def test_halton_known_values(i, b, expected):
    assert halton(i, b) == pytest.approx(expected, abs=1e-15)


@given(st.integers(1, 10**6), st.sampled_from([2, 3, 5, 7]))
def test_halton_matches_digit_reversal(i, b):
    assert halton(i, b) == pytest.approx(float(radical_inverse(i, b)), abs=1e-15)


def test_halton_sequence_vectorized():
    seq = halton_sequence(50, 3)
    assert np.allclose(seq, [float(radical_inverse(i, 3)) for i in range(1, 51)], atol=1e-15)
    assert np.all((seq > 0) & (seq < 1))


def test_base_set_small_and_validation():
    ps = halton_base_set(4)
    assert np.allclose(ps.sites, [[0.5, 1 / 3], [0.25, 2 / 3], [0.75, 1 / 9], [0.125, 4 / 9]])
    with pytest.raises(ConfigError):
        halton_base_set(2)


def test_fill_distance_single_center_site():
    ps = PointSet([[0.5, 0.5]], UNIT_SQUARE)
    # farthest probe is a corner
    assert fill_distance(ps, 1 / 64) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


def test_fill_distance_four_corners():
    ps = PointSet([[0, 0], [1, 0], [0, 1], [1, 1]], UNIT_SQUARE)
    assert fill_distance(ps, 1 / 64) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


def test_fill_distance_against_monte_carlo(rng):
    sites = rng.random((40, 2))
    ps = PointSet(sites, UNIT_SQUARE)
    probe = rng.random((200_000, 2))
    mc = max(np.sqrt(((chunk[:, None, :] - sites[None]) ** 2).sum(-1)).min(1).max()
             for chunk in np.array_split(probe, 20))
    h = fill_distance(ps, 1 / 512)
    # grid probes and random probes both underestimate the true sup slightly
    assert h == pytest.approx(mc, rel=0.02)


def test_separation_radius_brute_force(rng):
    sites = rng.random((60, 2))
    d = np.sqrt(((sites[:, None] - sites[None]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    assert separation_radius(PointSet(sites, UNIT_SQUARE)) == pytest.approx(d.min() / 2, rel=1e-14)


def test_neighbors_match_linear_scan(rng):
    sites = rng.random((300, 2))
    ps = PointSet(sites, UNIT_SQUARE)
    q = rng.random((50, 2))
    r = 0.13
    indptr, indices = ps.neighbors(q, r)
    for k in range(len(q)):
        expect = np.flatnonzero(np.sqrt(((sites - q[k]) ** 2).sum(1)) < r)
        assert np.array_equal(indices[indptr[k]:indptr[k + 1]], expect)


def test_neighbors_are_strict():
    ps = PointSet([[0.0, 0.0], [0.5, 0.0]], UNIT_SQUARE)
    indptr, indices = ps.neighbors([[0.0, 0.0]], 0.5)
    assert list(indices) == [0]


def test_nearest_breaks_ties_by_index():
    ps = PointSet([[1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]], Domain(-1, 1, -1, 1))
    assert ps.nearest([[0.5, 0.0], [-0.5, 0.0]]).tolist() == [0, 1]


def test_tile_reaches_target_fill_distance():
    D = Domain(-0.95, 0.95, -0.95, 0.95)
    for h in (0.375, 0.3, 0.192):
        X = halton_tile(D, h)
        assert abs(X.fill_distance - h) <= 0.15 * h
        assert D.contains(X.sites).sum() > 0
        # tiles anchored at the lower-left corner cover it
        assert X.sites.min(axis=0).tolist() >= [D.x_min, D.y_min]


@pytest.mark.xfail(reason="bases (2, 3), n=400 give h/q near 10.3, not the quoted 4.01",
                   strict=True)
def test_base_set_quasi_uniformity_ratio():
    B = halton_base_set(400)
    assert B.fill_distance / B.separation_radius == pytest.approx(4.01, rel=0.15)


def test_tile_quasi_uniformity_is_scale_invariant():
    D = Domain(-0.95, 0.95, -0.95, 0.95)
    ratios = [halton_tile(D, h).fill_distance / halton_tile(D, h).separation_radius
              for h in (0.375, 0.24, 0.1536)]
    assert max(ratios) / min(ratios) < 1.05


def test_level_sequence_nominal_values(reference_levels):
    assert np.allclose(reference_levels.nominal_h, [0.375, 0.3, 0.24, 0.192, 0.1536], atol=1e-15)
    assert np.allclose(reference_levels.support_radii, 3.0 * np.array(reference_levels.nominal_h))
    counts = [len(X) for X in reference_levels.levels]
    assert counts == sorted(counts)


def test_level_sequence_validation():
    D = Domain(0, 1, 0, 1)
    for kw in ({"mu": 1.0}, {"mu": 0.0}, {"nu": 1.0}, {"n": 0}):
        args = dict(h1=0.3, mu=0.8, nu=3.0, n=2) | kw
        with pytest.raises(ConfigError):
            build_level_sequence(D, **args)
    with pytest.raises(ConfigError):
        halton_tile(D, 5.0)


def test_tiling_is_deterministic():
    D = Domain(-1, 1, -1, 1)
    assert np.array_equal(halton_tile(D, 0.2).sites, halton_tile(D, 0.2).sites)


def test_grid_axes_include_endpoints():
    xs, ys = grid_axes(Domain(0, 1, 0, 0.5), 0.25)
    assert np.allclose(xs, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(ys, [0, 0.25, 0.5])


def test_domain_parse_and_inset():
    D = Domain.parse("-1,1,-2,2")
    assert D.as_tuple() == (-1, 1, -2, 2)
    assert D.inset(0.5).as_tuple() == (-0.5, 0.5, -1.5, 1.5)
    with pytest.raises(ConfigError):
        Domain.parse("1,0,0,1")


def test_separation_rejects_numerical_duplicates():
    with pytest.raises(ConfigError, match="duplicate"):
        PointSet([(0.0, 0.0), (0.0, 1e-240)], UNIT_SQUARE).separation_radius


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=30, unique=True))
def test_fill_distance_dominates_separation(pts):
    # the midpoint of the closest pair lies in the square at distance q from every site
    gaps = np.linalg.norm(np.subtract.outer(pts, pts).diagonal(axis1=1, axis2=3), axis=-1)
    assume(gaps[np.triu_indices(len(pts), 1)].min() > 1e-150)  # squared gap must not underflow
    ps = PointSet(pts, UNIT_SQUARE)
    step = 1 / 64
    assert fill_distance(ps, step) >= ps.separation_radius - step * np.sqrt(2) / 2 - 1e-12
