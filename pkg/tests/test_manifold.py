from __future__ import annotations

import numpy as np
import pytest

from cqd.manifold import (
    RankDeficiencyError,
    StiefelPoint,
    TuckerPoint,
    TuckerTangent,
    qr_retraction,
    riemannian_grad_tucker,
    stiefel_step,
    tangent_norm_sq,
    tangent_project_stiefel,
    tangent_to_ambient,
    tucker_from_tensor,
    tucker_retract,
    tucker_to_tensor,
    zero_tangent,
)
from cqd.tensor_core import multi_mode_product


def random_stiefel(rng, n, p) -> StiefelPoint:
    return qr_retraction(rng.standard_normal((n, p)))


def random_tucker_point(rng, shape=(5, 6, 7), ranks=(2, 3, 2)) -> TuckerPoint:
    factors = tuple(random_stiefel(rng, shape[m], ranks[m]) for m in range(3))
    return TuckerPoint(core=rng.standard_normal(ranks), factors=factors)


def random_tangent(rng, p: TuckerPoint) -> TuckerTangent:
    dirs = []
    for mode in range(3):
        u = p.factors[mode].u
        w = rng.standard_normal(u.shape)
        dirs.append(w - u @ (u.T @ w))
    return TuckerTangent(core_dir=rng.standard_normal(p.ranks), factor_dirs=tuple(dirs))


# ---------------------------------------------------------------------------
# Stiefel primitives
# ---------------------------------------------------------------------------


def test_stiefel_point_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        StiefelPoint(np.ones((4, 2)))


def test_tangent_projection_of_point_is_zero():
    rng = np.random.default_rng(0)
    u = random_stiefel(rng, 6, 3)
    assert np.linalg.norm(tangent_project_stiefel(u, u.u)) <= 1e-10


def test_tangent_projection_fixes_tangent_vectors():
    rng = np.random.default_rng(1)
    u = random_stiefel(rng, 6, 3)
    xi = tangent_project_stiefel(u, rng.standard_normal((6, 3)))
    again = tangent_project_stiefel(u, xi)
    assert np.max(np.abs(again - xi)) <= 1e-12


def test_tangent_projection_tangency_residual():
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = random_stiefel(rng, 7, 3)
        xi = tangent_project_stiefel(u, rng.standard_normal((7, 3)))
        assert np.linalg.norm(u.u.T @ xi + xi.T @ u.u) <= 1e-10


def test_tangent_projection_shape_mismatch():
    rng = np.random.default_rng(3)
    u = random_stiefel(rng, 6, 3)
    with pytest.raises(ValueError):
        tangent_project_stiefel(u, np.zeros((6, 2)))


def test_qr_retraction_identity_on_orthonormal():
    rng = np.random.default_rng(4)
    u = random_stiefel(rng, 6, 3)
    assert np.max(np.abs(qr_retraction(u.u).u - u.u)) <= 1e-12


def test_qr_retraction_absorbs_positive_scale():
    rng = np.random.default_rng(5)
    u = random_stiefel(rng, 6, 3)
    assert np.max(np.abs(qr_retraction(3.0 * u.u).u - u.u)) <= 1e-12


def test_qr_retraction_preserves_span():
    rng = np.random.default_rng(6)
    for _ in range(10):
        y = rng.standard_normal((8, 3))
        q = qr_retraction(y).u
        assert np.max(np.abs(q.T @ q - np.eye(3))) <= 1e-10
        p_q = q @ q.T
        p_y = y @ np.linalg.pinv(y)
        assert np.max(np.abs(p_q - p_y)) <= 1e-9


def test_qr_retraction_rank_deficient():
    y = np.zeros((5, 2))
    y[:, 0] = 1.0
    with pytest.raises(RankDeficiencyError):
        qr_retraction(y)


def test_qr_retraction_deterministic():
    rng = np.random.default_rng(7)
    y = rng.standard_normal((6, 4))
    q1 = qr_retraction(y).u
    q2 = qr_retraction(y.copy()).u
    assert q1.tobytes() == q2.tobytes()


def test_stiefel_step_zero_gradient():
    rng = np.random.default_rng(8)
    u = random_stiefel(rng, 6, 3)
    moved = stiefel_step(u, np.zeros((6, 3)), 0.5)
    assert np.max(np.abs(moved.u - u.u)) <= 1e-12


def test_stiefel_step_is_first_order_in_eta():
    rng = np.random.default_rng(9)
    u = random_stiefel(rng, 6, 3)
    g = rng.standard_normal((6, 3))
    norms = {}
    for eta in (1e-3, 1e-4):
        norms[eta] = np.linalg.norm(stiefel_step(u, g, eta).u - u.u)
    ratio = norms[1e-3] / norms[1e-4]
    assert 8.0 <= ratio <= 12.0  # O(eta) scaling


def test_stiefel_step_descends_rayleigh_objective():
    rng = np.random.default_rng(10)
    a = rng.standard_normal((6, 6))
    a = a @ a.T + 6 * np.eye(6)  # SPD
    u = random_stiefel(rng, 6, 2)

    def f(m):
        return -np.trace(m.T @ a @ m)

    grad = -2 * a @ u.u
    moved = stiefel_step(u, grad, 1e-3)
    assert f(moved.u) <= f(u.u)


# ---------------------------------------------------------------------------
# Fixed multilinear-rank geometry
# ---------------------------------------------------------------------------


def test_tucker_point_validates_factor_ranks():
    rng = np.random.default_rng(11)
    factors = tuple(random_stiefel(rng, 5, 2) for _ in range(3))
    with pytest.raises(ValueError):
        TuckerPoint(core=rng.standard_normal((2, 2, 3)), factors=factors)


def test_riemannian_grad_zero_input():
    rng = np.random.default_rng(12)
    p = random_tucker_point(rng)
    t = riemannian_grad_tucker(p, np.zeros(p.shape))
    assert np.all(t.core_dir == 0.0)
    assert all(np.all(d == 0.0) for d in t.factor_dirs)
    assert tangent_norm_sq(p, t) == 0.0


def test_riemannian_grad_fixes_embedded_tangents():
    rng = np.random.default_rng(13)
    p = random_tucker_point(rng)
    t = random_tangent(rng, p)
    ambient = tangent_to_ambient(p, t)
    back = riemannian_grad_tucker(p, ambient)
    assert np.linalg.norm(tangent_to_ambient(p, back) - ambient) <= 1e-9


def test_riemannian_grad_gauge_orthogonality():
    rng = np.random.default_rng(14)
    p = random_tucker_point(rng)
    t = riemannian_grad_tucker(p, rng.standard_normal(p.shape))
    for mode in range(3):
        assert np.max(np.abs(p.factors[mode].u.T @ t.factor_dirs[mode])) <= 1e-10


def test_riemannian_grad_shape_mismatch():
    rng = np.random.default_rng(15)
    p = random_tucker_point(rng)
    with pytest.raises(ValueError):
        riemannian_grad_tucker(p, np.zeros((2, 2, 2)))


def test_tangent_norm_matches_ambient_embedding():
    rng = np.random.default_rng(16)
    p = random_tucker_point(rng)
    t = random_tangent(rng, p)
    ambient = tangent_to_ambient(p, t)
    assert tangent_norm_sq(p, t) == pytest.approx(float(np.sum(ambient**2)), rel=1e-10)


def test_projection_shrinks_norm():
    rng = np.random.default_rng(17)
    p = random_tucker_point(rng)
    z = rng.standard_normal(p.shape)
    t = riemannian_grad_tucker(p, z)
    assert tangent_norm_sq(p, t) <= np.sum(z**2) * (1 + 1e-12)


def test_tucker_retract_zero_direction():
    rng = np.random.default_rng(18)
    p = random_tucker_point(rng)
    moved = tucker_retract(p, zero_tangent(p), 0.7)
    assert np.linalg.norm(tucker_to_tensor(moved) - tucker_to_tensor(p)) <= 1e-10


def test_tucker_retract_first_order_slope():
    rng = np.random.default_rng(19)
    p = random_tucker_point(rng)
    t = random_tangent(rng, p)
    x = tucker_to_tensor(p)
    emb = tangent_to_ambient(p, t)
    errs = {}
    for eta in (1e-3, 2e-3):
        moved = tucker_to_tensor(tucker_retract(p, t, eta))
        errs[eta] = np.linalg.norm(moved - x - eta * emb)
    # Richardson-style slope: halving eta should shrink the remainder ~4x.
    ratio = errs[2e-3] / errs[1e-3]
    assert 2.5 <= ratio <= 5.5


def test_tucker_retract_descends_toward_matching_rank_target():
    rng = np.random.default_rng(20)
    p = random_tucker_point(rng, shape=(5, 5, 5), ranks=(2, 2, 2))
    target = tucker_to_tensor(random_tucker_point(rng, shape=(5, 5, 5), ranks=(2, 2, 2)))
    dists = [np.linalg.norm(tucker_to_tensor(p) - target)]
    for _ in range(60):
        grad = riemannian_grad_tucker(p, tucker_to_tensor(p) - target)
        p = tucker_retract(p, grad.scaled(-1.0), 0.2)
        dists.append(np.linalg.norm(tucker_to_tensor(p) - target))
    diffs = np.diff(dists)
    assert np.all(diffs <= 1e-12)
    assert dists[-1] < dists[0]


def test_tucker_retract_rank_collapse_raises():
    rng = np.random.default_rng(21)
    p = random_tucker_point(rng)
    x = tucker_to_tensor(p)
    # X itself is tangent at X (core direction = core), so a unit step along
    # -X lands exactly on the zero tensor.
    toward_zero = riemannian_grad_tucker(p, x)
    with pytest.raises(RankDeficiencyError):
        tucker_retract(p, toward_zero.scaled(-1.0), 1.0)


def test_tucker_from_tensor_recovers_exact_rank():
    rng = np.random.default_rng(22)
    p = random_tucker_point(rng)
    x = tucker_to_tensor(p)
    q = tucker_from_tensor(x, p.ranks)
    assert np.linalg.norm(tucker_to_tensor(q) - x) <= 1e-10
    with pytest.raises(RankDeficiencyError):
        tucker_from_tensor(x, (3, 4, 3))  # exact rank (2,3,2) cannot support more
    with pytest.raises(ValueError):
        tucker_from_tensor(x, (0, 2, 2))


# ---------------------------------------------------------------------------
# Retraction axioms (both retractions)
# ---------------------------------------------------------------------------


def test_retraction_axioms_stiefel():
    rng = np.random.default_rng(23)
    h = 1e-5
    for _ in range(10):
        u = random_stiefel(rng, 6, 3)
        assert np.max(np.abs(qr_retraction(u.u + 0.0).u - u.u)) <= 1e-12
        xi = tangent_project_stiefel(u, rng.standard_normal((6, 3)))
        plus = qr_retraction(u.u + h * xi).u
        minus = qr_retraction(u.u - h * xi).u
        fd = (plus - minus) / (2 * h)
        assert np.max(np.abs(fd - xi)) <= 1e-6


def test_retraction_axioms_tucker():
    rng = np.random.default_rng(24)
    h = 1e-5
    for _ in range(10):
        p = random_tucker_point(rng)
        x = tucker_to_tensor(p)
        same = tucker_retract(p, zero_tangent(p), 1.0)
        assert np.linalg.norm(tucker_to_tensor(same) - x) <= 1e-12 * max(
            1.0, np.linalg.norm(x)
        )
        t = random_tangent(rng, p)
        emb = tangent_to_ambient(p, t)
        plus = tucker_to_tensor(tucker_retract(p, t, h))
        minus = tucker_to_tensor(tucker_retract(p, t.scaled(-1.0), h))
        fd = (plus - minus) / (2 * h)
        assert np.max(np.abs(fd - emb)) <= 1e-6 * max(1.0, np.max(np.abs(emb)))
