import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _sim import HP, fit_domain
from mdlina.errors import DimensionMismatch, SingularDesign
from mdlina.evaluation import (
    cross_validate,
    fold_indices,
    matched_effect_error,
    skeleton_metrics,
    vif,
    vif_flags,
)
from mdlina.lina import fit_structure
from mdlina.synth import GenConfig, simulate


def _adj(edges, q=3):
    B = np.zeros((q, q))
    for i, j in edges:
        B[j - 1, i - 1] = 0.8
    return B


def test_perfect_recovery():
    B = _adj([(1, 2), (2, 3)])
    m = skeleton_metrics(B, B)
    assert (m.recall, m.precision, m.f1) == (1.0, 1.0, 1.0)


def test_half_overlap():
    m = skeleton_metrics(_adj([(1, 2), (1, 3)]), _adj([(1, 2), (2, 3)]))
    assert (m.tp, m.fp, m.fn) == (1, 1, 1)
    assert (m.recall, m.precision, m.f1) == (0.5, 0.5, 0.5)


def test_empty_estimate():
    m = skeleton_metrics(np.zeros((3, 3)), _adj([(1, 2)]))
    assert (m.recall, m.precision, m.f1) == (0.0, 0.0, 0.0)


def test_skeleton_ignores_direction_unless_asked():
    assert skeleton_metrics(_adj([(2, 1)]), _adj([(1, 2)])).f1 == 1.0
    assert skeleton_metrics(_adj([(2, 1)]), _adj([(1, 2)]), directed=True).f1 == 0.0


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        skeleton_metrics(np.zeros((2, 2)), np.zeros((3, 3)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.floats(0.0, 1.0))
def test_f1_identity(seed, q, eps):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, (q, q)) * (rng.random((q, q)) < 0.4)
    b = rng.uniform(-1, 1, (q, q)) * (rng.random((q, q)) < 0.4)
    m = skeleton_metrics(a, b, eps)
    denom = m.recall + m.precision
    assert m.f1 == (2 * m.recall * m.precision / denom if denom else 0.0)
    assert 0 <= m.f1 <= 1


def test_matched_error_identity():
    rng = np.random.default_rng(0)
    G, B = rng.standard_normal((6, 3)), _adj([(1, 2), (2, 3)])
    perm, signs, err = matched_effect_error(B, G, B, G)
    assert err == 0.0
    np.testing.assert_array_equal(perm, [0, 1, 2])
    np.testing.assert_array_equal(signs, [1, 1, 1])


def test_matched_error_recovers_inverse_transform():
    rng = np.random.default_rng(1)
    G_true = rng.standard_normal((6, 3))
    B_true = _adj([(1, 2), (2, 3), (1, 3)]) * rng.uniform(0.5, 1.5, (3, 3))
    order = np.array([2, 0, 1])
    sign = np.array([1.0, -1.0, 1.0])
    G_est = G_true[:, order] * sign
    B_est = B_true[np.ix_(order, order)] * np.outer(sign, sign)
    perm, signs, err = matched_effect_error(B_est, G_est, B_true, G_true)
    assert err == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_array_equal(G_est[:, perm] * signs, G_true)


def test_matched_error_invariant_to_joint_relabeling():
    rng = np.random.default_rng(2)
    G_est, G_true = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    B_est, B_true = rng.uniform(-1, 1, (4, 4)), rng.uniform(-1, 1, (4, 4))
    order, sign = rng.permutation(4), np.array([1.0, -1.0, -1.0, 1.0])
    base = matched_effect_error(B_est, G_est, B_true, G_true)[2]
    moved = matched_effect_error(B_est, G_est, B_true[np.ix_(order, order)] * np.outer(sign, sign),
                                 G_true[:, order] * sign)[2]
    assert moved == pytest.approx(base, abs=1e-12)


def test_matched_error_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        matched_effect_error(np.zeros((2, 2)), np.zeros((4, 2)), np.zeros((3, 3)), np.zeros((6, 3)))


@pytest.mark.slow
def test_matched_error_on_simulations():
    ok = 0
    for s in range(20):
        gt = simulate(GenConfig(q=2, n=2000), seed=s)
        d, m = fit_domain(gt)
        sm = fit_structure(m, d.data, HP)
        ok += matched_effect_error(sm.pruned_B, m.loadings, gt.B_true, gt.G_eff)[2] <= 0.15
    assert ok >= 16


def test_vif_orthogonal():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((200, 4))
    X = np.linalg.qr(Z - Z.mean(axis=0))[0].T  # centred, mutually orthogonal rows
    np.testing.assert_allclose(vif(X), 1.0, atol=1e-8)


def test_vif_two_variables_exact_correlation():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((2, 500))
    a -= a.mean()
    b -= b.mean()
    b -= (a @ b) / (a @ a) * a
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    X = np.vstack([a, 0.9 * a + np.sqrt(1 - 0.81) * b])
    np.testing.assert_allclose(vif(X), 1 / (1 - 0.81), rtol=1e-10)
    assert not vif_flags(vif(X)).any()


def test_vif_singular_cases():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 100))
    with pytest.raises(SingularDesign):
        vif(np.vstack([x, x[:1]]))
    with pytest.raises(SingularDesign):
        vif(rng.standard_normal((5, 4)))
    with pytest.raises(SingularDesign), np.errstate(invalid="ignore"):
        vif(np.vstack([x, np.ones((1, 100))]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_vif_at_least_one(seed, p):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p, p)) @ rng.standard_normal((p, 50))
    try:
        v = vif(X)
    except SingularDesign:
        return
    assert np.all(v >= 1 - 1e-10)
    assert v.shape == (p,)


def test_folds_partition():
    folds = fold_indices(103, 10, seed=7)
    assert len(folds) == 10
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(103))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1
    for a, b in zip(folds, fold_indices(103, 10, seed=7)):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        fold_indices(5, 10)


def _cv_data(seed=0, n=300):
    gt = simulate(GenConfig(q=2, n=n), seed=seed)
    return gt.X, gt.clusters


def test_cv_single_cell():
    X, cl = _cv_data()
    rep = cross_validate(X, cl, [(0.1, 0.3)], k=3, hp=HP)
    assert rep.best_cell == (0.1, 0.3)
    assert np.isfinite(rep.mean_validation_negloglik[0])
    assert len(rep.fold_values[0]) == 3


def test_cv_deterministic_and_argmin():
    X, cl = _cv_data(1)
    grid = [(0.01, 0.1), (0.1, 0.3), (1.0, 0.6)]
    a = cross_validate(X, cl, grid, k=3, hp=HP)
    b = cross_validate(X, cl, grid, k=3, hp=HP)
    assert a.mean_validation_negloglik == b.mean_validation_negloglik
    i = int(np.argmin(a.mean_validation_negloglik))
    assert a.best_cell == grid[i]


def test_cv_tie_break_prefers_smaller_lambda_then_eps():
    X, cl = _cv_data(2)
    # thresholds above every fitted effect prune all cells to the empty graph, an exact tie
    grid = [(1.0, 6.0), (0.1, 6.0), (0.1, 5.0), (1.0, 5.0)]
    rep = cross_validate(X, cl, grid, k=3, hp=HP)
    assert len(set(rep.mean_validation_negloglik)) == 1
    assert rep.best_cell == (0.1, 5.0)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="q = 2 fits prune identically across the grid; ties resolve to the smallest eps")
def test_cv_selects_moderate_eps():
    grid = [(0.1, e) for e in (0.05, 0.1, 0.2, 0.3, 0.4, 0.6)]
    hits = 0
    for s in range(20):
        gt = simulate(GenConfig(q=2, n=1000), seed=s)
        best = cross_validate(gt.X, gt.clusters, grid, k=10, hp=HP.with_(seed=s)).best_cell
        hits += 0.1 <= best[1] <= 0.4
    assert hits >= 14
