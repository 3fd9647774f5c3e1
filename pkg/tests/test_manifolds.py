import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, logm
from scipy.spatial.transform import Rotation

from msqi.errors import ConfigError, CutLocus, NonConvergence
from msqi.manifolds import (SO3_MANIFOLD as SO3, SPD3_MANIFOLD as SPD, Euclidean, KarcherConfig,
                            euler_xyz, hat, karcher_mean, karcher_mean_spd, rodrigues, so3_dist,
                            so3_exp, so3_log, so3_transport, spd_dist, spd_exp, spd_log,
                            spd_transport, vee)


def series_expm(A, terms=30):
    out, term = np.eye(3), np.eye(3)
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out


def random_rotations(rng, n, max_angle=np.pi):
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    return rodrigues(axis * rng.uniform(0, max_angle, (n, 1)))


def random_spd(rng, n, cond=20.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, 3, 3)))
    w = np.exp(rng.uniform(0, np.log(cond), (n, 3)))
    return (Q * w[:, None, :]) @ np.swapaxes(Q, -1, -2)


Rz = lambda t: np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1]])  # noqa: E731


# -- SO(3) -----------------------------------------------------------------------

def test_so3_exp_examples(rng):
    p = random_rotations(rng, 1)[0]
    assert np.array_equal(so3_exp(p, np.zeros((3, 3))), p)
    R = so3_exp(np.eye(3), hat([0, 0, np.pi / 2]))
    assert np.allclose(R[0], [0, -1, 0], atol=1e-15)
    assert np.allclose(R, Rz(np.pi / 2), atol=1e-15)


def test_rodrigues_matches_series(rng):
    for _ in range(200):
        w = rng.normal(size=3)
        w *= rng.uniform(0, 3.1) / np.linalg.norm(w)
        assert np.abs(rodrigues(w) - series_expm(hat(w))).max() <= 1e-12


def test_rodrigues_small_angles():
    for t in (1e-3, 1e-5, 1e-9, 0.0):
        w = np.array([t, -2 * t, 0.5 * t])
        assert np.abs(rodrigues(w) - expm(hat(w))).max() <= 1e-15


def test_so3_exp_rejects_non_skew():
    with pytest.raises(ConfigError):
        so3_exp(np.eye(3), np.eye(3))


def test_so3_log_examples(rng):
    p = random_rotations(rng, 1)[0]
    assert np.abs(so3_log(p, p)).max() <= 1e-15
    v = so3_log(np.eye(3), Rz(0.7))
    assert vee(v) == pytest.approx([0, 0, 0.7], abs=1e-12)
    assert so3_dist(np.eye(3), Rz(np.pi / 2)) == pytest.approx(np.pi / 2, abs=1e-14)


def test_so3_roundtrip_thousand_pairs(rng):
    p = random_rotations(rng, 1000)
    body = rng.normal(size=(1000, 3))
    body *= rng.uniform(0, 3.0, (1000, 1)) / np.linalg.norm(body, axis=1, keepdims=True)
    q = p @ rodrigues(body)
    back = SO3.exp(p, SO3.log(p, q))
    assert SO3.dist(back, q).max() <= 1e-10
    # distance equals the Frobenius tangent norm over sqrt(2)
    assert np.allclose(SO3.dist(p, q), np.linalg.norm(body, axis=1), atol=1e-10)


def test_so3_log_against_scipy_logm(rng):
    for R in random_rotations(rng, 20, 3.0):
        assert np.abs(so3_log(np.eye(3), R) - logm(R).real).max() <= 1e-9


def test_so3_cut_locus():
    with pytest.raises(CutLocus):
        so3_log(np.eye(3), Rz(np.pi))
    with pytest.raises(CutLocus):
        so3_log(np.eye(3), Rz(np.pi - 1e-7))
    so3_log(np.eye(3), Rz(np.pi - 1e-4))


def test_so3_transport(rng):
    p, q = random_rotations(rng, 2)
    v = p @ hat(rng.normal(size=3))
    assert np.allclose(so3_transport(p, p, v), v, atol=1e-15)
    t = so3_transport(p, q, v)
    assert np.linalg.norm(t) == pytest.approx(np.linalg.norm(v), abs=1e-12)
    assert np.abs(so3_transport(q, p, t) - v).max() <= 1e-12
    SO3.check_tangent(q, t)


def test_euler_examples(rng):
    assert np.array_equal(euler_xyz(0, 0, 0), np.eye(3))
    assert np.allclose(euler_xyz(np.pi / 2, 0, 0) @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    a, b, c = rng.uniform(-3, 3, (3, 50))
    R = euler_xyz(a, b, c)
    for k in range(50):
        SO3.check_point(R[k])
        ref = Rotation.from_euler("XYZ", [a[k], b[k], c[k]]).as_matrix()
        assert np.abs(R[k] - ref).max() <= 1e-14


def test_project_repairs_small_drift_only(rng):
    R = random_rotations(rng, 1)[0]
    fixed = SO3.project(R + 1e-10)
    assert np.abs(fixed.T @ fixed - np.eye(3)).max() <= 1e-14
    with pytest.raises(Exception):
        SO3.project(R + 1e-6)


# -- SPD ---------------------------------------------------------------------------

def test_spd_examples(rng):
    X = random_spd(rng, 1)[0]
    assert np.abs(spd_log(X, X)).max() <= 1e-12
    assert spd_dist(X, X) <= 1e-12
    assert spd_dist(np.eye(3), np.e * np.eye(3)) == pytest.approx(np.sqrt(3), abs=1e-14)


def test_spd_commuting_diagonals(rng):
    for _ in range(20):
        a, b = np.exp(rng.normal(size=(2, 3)))
        expect = np.linalg.norm(np.log(b) - np.log(a))
        assert spd_dist(np.diag(a), np.diag(b)) == pytest.approx(expect, abs=1e-12)


def test_spd_rejects_non_spd():
    with pytest.raises(ConfigError):
        spd_dist(np.eye(3), np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ConfigError):
        spd_exp(np.eye(3), np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0.0]]))


def test_spd_roundtrip_and_affine_invariance(rng):
    X, Y = random_spd(rng, 1000), random_spd(rng, 1000)
    assert SPD.dist(SPD.exp(X, SPD.log(X, Y)), Y).max() <= 1e-10
    A = rng.normal(size=(1000, 3, 3)) + 3 * np.eye(3)
    At = np.swapaxes(A, -1, -2)
    assert np.allclose(SPD.dist(A @ X @ At, A @ Y @ At), SPD.dist(X, Y), atol=1e-8)


def test_spd_transport(rng):
    X, Y = random_spd(rng, 2)
    v = rng.normal(size=(3, 3))
    v = v + v.T
    assert np.allclose(spd_transport(X, X, v), v, atol=1e-12)
    c = 2.5
    assert np.allclose(spd_transport(np.eye(3), c * np.eye(3), v), c * v, atol=1e-12)
    for _ in range(50):
        X, Y = random_spd(rng, 2)
        assert SPD.norm(Y, SPD.transport(X, Y, v)) == pytest.approx(SPD.norm(X, v), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_distance_axioms(seed):
    rng = np.random.default_rng(seed)
    for M, sample in ((SO3, lambda n: random_rotations(rng, n, 1.0)), (SPD, lambda n: random_spd(rng, n))):
        a, b, c = sample(3)
        assert M.dist(a, b) == pytest.approx(M.dist(b, a), abs=1e-10)
        assert M.dist(a, c) <= M.dist(a, b) + M.dist(b, c) + 1e-8


# -- Karcher means -----------------------------------------------------------------

def test_single_point_mean(rng):
    p = random_rotations(rng, 1)
    assert np.allclose(karcher_mean(SO3, p, [1.0]), p[0], atol=1e-15)


def test_so3_two_point_geodesic(rng):
    for _ in range(20):
        p = random_rotations(rng, 2, 1.5)
        a = rng.uniform(0.05, 0.95)
        Y = karcher_mean(SO3, p, [a, 1 - a])
        expect = p[0] @ rodrigues((1 - a) * vee(so3_log(np.eye(3), p[0].T @ p[1])))
        assert SO3.dist(Y, expect) <= 1e-8


def test_euclidean_mean_is_arithmetic(rng):
    E = Euclidean(3)
    P = rng.normal(size=(5, 3))
    w = rng.dirichlet(np.ones(5))
    assert np.allclose(karcher_mean(E, P, w), w @ P, atol=1e-15)


def test_spd_diagonal_geometric_mean(rng):
    for _ in range(20):
        D = np.exp(rng.normal(size=(4, 3)))
        w = rng.dirichlet(np.ones(4))
        Y = karcher_mean_spd(np.array([np.diag(d) for d in D]), w)
        assert np.abs(Y - np.diag(np.exp(w @ np.log(D)))).max() <= 1e-8


def test_spd_equal_points(rng):
    X = random_spd(rng, 1)[0]
    Y = karcher_mean_spd(np.array([X, X, X]), [0.2, 0.3, 0.5])
    assert np.abs(Y - X).max() <= 1e-12


def test_first_order_residual(rng):
    cfg = KarcherConfig()
    for _ in range(10):
        P = random_rotations(rng, 5, 1.0)
        w = rng.dirichlet(np.ones(5))
        Y = karcher_mean(SO3, P, w, cfg)
        assert SO3.karcher_residual(Y, P, w) <= 10 * cfg.tol
        S = random_spd(rng, 5)
        Z = karcher_mean_spd(S, w, cfg)
        assert SPD.karcher_residual(Z, S, w) <= 10 * cfg.tol


def test_spd_solvers_agree(rng):
    for _ in range(10):
        S = random_spd(rng, 3, cond=5.0)
        w = rng.dirichlet(np.ones(3))
        a = karcher_mean_spd(S, w)
        b = karcher_mean(SPD, S, w, init=(w[:, None, None] * S).sum(0))
        assert np.abs(a - b).max() <= 1e-8


def test_so3_batched_solver_matches_generic(rng):
    P = random_rotations(rng, 4 * 6, 1.0).reshape(4, 6, 3, 3)
    w = rng.dirichlet(np.ones(6), size=4)
    batch = SO3.karcher_batch(P, w, P[:, 0].copy(), KarcherConfig())
    for m in range(4):
        assert SO3.dist(batch[m], karcher_mean(SO3, P[m], w[m])) <= 1e-9


def test_nonconvergence_reports_residual(rng):
    P = random_rotations(rng, 5, 2.0)
    with pytest.raises(NonConvergence) as ei:
        karcher_mean(SO3, P, np.full(5, 0.2), KarcherConfig(tol=1e-10, max_iter=1))
    assert ei.value.residual > 0


def test_weights_must_be_normalized(rng):
    with pytest.raises(ConfigError):
        karcher_mean(SO3, random_rotations(rng, 2), [0.5, 0.6])
    with pytest.raises(ConfigError):
        KarcherConfig(tol=0.0)
