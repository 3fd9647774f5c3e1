import numpy as np
import pytest

from msqi import testfunctions as tf
from msqi.errors import CutLocus, EmptyNeighborhood, MissingValues
from msqi.manifold_multiscale import (BaseFunction, ManifoldField, ManifoldQuasiInterpolant,
                                      base_function, manifold_linf_error,
                                      manifold_multiscale_fit, manifold_quasi_interp, sample_field)
from msqi.manifolds import (SO3_MANIFOLD as SO3, SPD3_MANIFOLD as SPD, Euclidean, rodrigues,
                            so3_log, vee)
from msqi.multiscale import multiscale_fit
from msqi.pointset import Domain, PointSet, halton_tile
from msqi.quasi_interp import QuasiInterpolant

SQUARE = Domain(-1, 1, -1, 1)


def test_base_function_nearest(rng):
    X = halton_tile(SQUARE, 0.3)
    vals = rodrigues(rng.normal(size=(len(X), 3)) * 0.5)
    fld = ManifoldField(SO3, X, vals)
    assert np.array_equal(base_function(fld, X.sites[5]), vals[5])
    B = BaseFunction.from_samples(fld)
    q = rng.uniform(-1, 1, (300, 2))
    d = ((q[:, None] - X.sites[None]) ** 2).sum(-1)
    assert np.array_equal(B(q), vals[np.argmin(d, axis=1)])
    one = ManifoldField(SO3, PointSet([[0.0, 0.0]], SQUARE), vals[:1])
    assert np.array_equal(BaseFunction.from_samples(one)(q), np.broadcast_to(vals[0], (300, 3, 3)))


def test_quasi_interp_constant_samples(rng):
    X = halton_tile(SQUARE, 0.3)
    p = rodrigues(np.array([0.3, -0.2, 0.9]))
    fld = ManifoldField(SO3, X, np.broadcast_to(p, (len(X), 3, 3)))
    out = ManifoldQuasiInterpolant(fld, 0.9)(rng.uniform(-0.5, 0.5, (50, 2)))
    assert np.abs(out - p).max() <= 1e-13


def test_quasi_interp_euclidean_matches_shepard(rng):
    X = halton_tile(SQUARE, 0.2)
    V = rng.normal(size=(len(X), 3))
    pts = rng.uniform(-0.5, 0.5, (300, 2))
    a = ManifoldQuasiInterpolant(ManifoldField(Euclidean(3), X, V), 0.6)(pts)
    b = QuasiInterpolant(X, V, 0.6).evaluate_many(pts)
    assert np.abs(a - b).max() <= 1e-14


def test_quasi_interp_two_sample_geodesic(rng):
    sites = PointSet([[-0.2, 0.0], [0.3, 0.0]], SQUARE)
    p = rodrigues(rng.normal(size=(2, 3)) * 0.6)
    fld = ManifoldField(SO3, sites, p)
    for x in ([0.0, 0.1], [-0.1, -0.2], [0.25, 0.0]):
        w = QuasiInterpolant(sites, np.zeros(2), 1.0).weights(x).a
        Y = manifold_quasi_interp(fld, x, 1.0)
        expect = p[0] @ rodrigues(w[1] * vee(so3_log(np.eye(3), p[0].T @ p[1])))
        assert SO3.dist(Y, expect) <= 1e-8


def test_quasi_interp_empty_neighborhood():
    fld = ManifoldField(SO3, PointSet([[0.9, 0.9]], SQUARE), np.eye(3)[None])
    with pytest.raises(EmptyNeighborhood):
        manifold_quasi_interp(fld, [0.0, 0.0], 0.2)
    assert np.isnan(ManifoldQuasiInterpolant(fld, 0.2)([[0.0, 0.0]])).all()


@pytest.mark.parametrize("constant_base", [True, False])
def test_euclidean_reduction(small_levels, rng, constant_base):
    fn = lambda p: np.column_stack([tf.wave_f(p), tf.wave_g(p), tf.gaussian_bump(p)])  # noqa: E731
    E = Euclidean(3)
    base = BaseFunction.constant_at(E, np.zeros(3)) if constant_base else None
    model = manifold_multiscale_fit(fn, small_levels, E, base=base)
    pts = rng.uniform(-0.6, 0.6, (1000, 2))
    got = model(pts)
    for c in range(3):
        scalar = multiscale_fit(lambda p, c=c: fn(p)[:, c], small_levels)
        assert np.abs(got[:, c] - scalar(pts)).max() <= 1e-12


def test_constant_field_fixed_point(small_levels, rng):
    p = rodrigues(np.array([0.4, 0.1, -0.7]))
    model = manifold_multiscale_fit(lambda x: np.broadcast_to(p, (len(x), 3, 3)), small_levels, SO3)
    for lvl in model.levels[1:]:
        assert np.abs(lvl.data).max() <= 1e-12
    cum = model.evaluate_levels(rng.uniform(-0.5, 0.5, (100, 2)))
    assert np.abs(cum - p).max() <= 1e-12


def test_stored_residuals_reconstruct_samples(small_levels):
    model = manifold_multiscale_fit(tf.rotation_field, small_levels, SO3)
    for j in range(1, len(model.levels)):
        lvl = model.levels[j]
        partial = type(model)(model.manifold, model.base, model.levels[:j], model.cfg)
        prev = partial(lvl.sites.sites)
        back = SO3.exp(prev, SO3.transport(lvl.base_at_sites, prev, lvl.data))
        assert SO3.dist(back, tf.rotation_field(lvl.sites.sites)).max() <= 1e-10


def test_outputs_stay_on_manifold(small_levels, rng):
    pts = rng.uniform(-0.6, 0.6, (200, 2))
    for M, fn in ((SO3, tf.rotation_field), (SPD, tf.spd_field)):
        out = manifold_multiscale_fit(fn, small_levels, M)(pts)
        for Y in out:
            M.check_point(Y)


def test_spd_diagonal_field_matches_log_coordinates(small_levels, rng):
    logs = lambda p: np.column_stack([tf.wave_f(p), 0.5 * tf.wave_g(p), 0.2 * tf.gaussian_bump(p)])  # noqa: E731
    F = lambda p: np.einsum("ni,ij->nij", np.exp(logs(p)), np.eye(3))  # noqa: E731
    model = manifold_multiscale_fit(F, small_levels, SPD)
    pts = rng.uniform(-0.6, 0.6, (300, 2))
    got = model(pts)
    scalar = multiscale_fit(logs, small_levels)(pts)
    expect = np.einsum("ni,ij->nij", np.exp(scalar), np.eye(3))
    assert np.abs(got - expect).max() <= 1e-8


def test_manifold_linf_error_examples(small_levels):
    model = manifold_multiscale_fit(tf.rotation_field, small_levels, SO3)
    R = Domain(-0.4, 0.4, -0.4, 0.4)
    assert manifold_linf_error(model, model, R, SO3).linf == 0.0
    turn = rodrigues(np.array([0.3, 0.0, 0.0]))
    ef = manifold_linf_error(model, lambda p: model(p) @ turn, R, SO3)
    assert ef.linf == pytest.approx(0.3, abs=1e-12)
    assert np.allclose(ef.values, 0.3, atol=1e-12)


def test_cut_locus_names_level_and_site():
    D = Domain(0, 1, 0, 1)
    X1 = PointSet([[0.5, 0.5]], D)
    X2 = PointSet([[0.5, 0.5], [0.6, 0.5]], D)
    half_turn = rodrigues(np.array([0.0, 0.0, np.pi]))
    from msqi.pointset import levels_from_sites
    L = levels_from_sites([X1.sites, X2.sites], D, [0.5, 0.25], 0.5, 2.0)
    samples = [ManifoldField(SO3, X1, np.eye(3)[None]),
               ManifoldField(SO3, X2, np.stack([np.eye(3), half_turn]))]
    with pytest.raises(CutLocus, match=r"level 2, site \(0\.6, 0\.5\)"):
        manifold_multiscale_fit(None, L, SO3, samples=samples)


def test_evaluate_outside_coverage_is_missing(small_levels):
    model = manifold_multiscale_fit(tf.rotation_field, small_levels, SO3)
    with pytest.raises(MissingValues):
        model.evaluate([5.0, 5.0])
    assert np.isnan(model([[5.0, 5.0]])).all()


def test_field_csv_layout(tmp_path, small_levels):
    fld = sample_field(SO3, tf.rotation_field, small_levels.levels[0])
    fld.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,y," + ",".join(f"m{i}{j}" for i in range(3) for j in range(3))
    row = [float(v) for v in lines[1].split(",")]
    assert np.allclose(np.reshape(row[2:], (3, 3)), fld.values[0], atol=1e-9)
    assert len(lines[1].split(",")[2].split(".")[1]) == 9
