import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from progsup.theory import (CurveConfig, PolyTerm, ReasoningMode, MultiModeFunction, RegressionData, bound_sweep,
                            bound_thm41, bound_thm42, check_bound, chi2_moment, empirical_rkhs_norm,
                            eval_function, eval_mixture, fit_mode_classifier, gamma_constant, gen_multimode,
                            gram_infty, init_two_layer, khatri_rao, kron_power, mc_gamma_constant,
                            mc_gram_infty, mode_posteriors, rkhs_norm_info, sample_complexity_curve,
                            sample_task, separated_directions, term_complexity, train_overparam_mlp,
                            unit_rows, verify_identity_chain)


def single(gamma, terms):
    return MultiModeFunction([[ReasoningMode(np.asarray(gamma, float), tuple(terms))]])


# ---------------------------------------------------------------- constants


def test_gamma_constant_values():
    assert gamma_constant(1) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert gamma_constant(2) == pytest.approx(math.sqrt(math.pi / 2), abs=1e-12)
    assert 22.5 <= gamma_constant(512) <= 22.7
    for m in (3, 10, 40):
        assert gamma_constant(m) == pytest.approx(math.sqrt(2) * gamma_fn(m / 2 + 0.5) / gamma_fn(m / 2), rel=1e-12)


def test_gamma_constant_monte_carlo():
    for m in (1, 8, 128):
        est, se = mc_gamma_constant(m, 100_000, seed=m)
        assert abs(est - gamma_constant(m)) < 0.01 * gamma_constant(m)
        assert se > 0


def test_chi2_moments():
    for m in range(1, 65):
        assert chi2_moment(m, 1) == pytest.approx(m, rel=1e-9)
        assert chi2_moment(m, 2) == pytest.approx(m * (m + 2), rel=1e-9)
    assert chi2_moment(5, 0) == 1.0
    # half moment is the squared norm's square root, i.e. the gamma constant
    assert chi2_moment(7, 0.5) == pytest.approx(gamma_constant(7), rel=1e-12)
    with pytest.raises(ValueError):
        chi2_moment(2, -1)


def test_kronecker_norm_and_khatri_rao_columns():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(3), rng.standard_normal(4)
    assert np.linalg.norm(np.kron(a, b)) ** 2 == pytest.approx(np.dot(a, a) * np.dot(b, b), rel=1e-12)
    A, B = rng.standard_normal((3, 5)), rng.standard_normal((4, 5))
    K = khatri_rao(A, B)
    for j in range(5):
        np.testing.assert_allclose(K[:, j], np.kron(A[:, j], B[:, j]))
    np.testing.assert_allclose(kron_power(a, 3), np.kron(a, np.kron(a, a)))


def test_identity_chain_on_random_instances():
    for seed in range(20):
        errs = verify_identity_chain(seed)
        assert max(errs.values()) < 1e-10


# ---------------------------------------------------------------- kernel


def test_gram_hand_values():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, math.sqrt(3) / 2]])
    H = gram_infty(X)
    np.testing.assert_allclose(np.diag(H), 0.5)
    assert H[0, 1] == pytest.approx(0.0, abs=1e-15)
    # 60 degrees: 0.5 * (pi - pi/3) / (2 pi) = 1/6
    assert H[0, 2] == pytest.approx(1 / 6, abs=1e-14)
    with pytest.raises(ValueError):
        gram_infty(np.array([[2.0, 0.0]]))


def test_gram_matches_monte_carlo():
    for seed in range(3):
        X = unit_rows(np.random.default_rng(seed).standard_normal((8, 4)))
        mean, se = mc_gram_infty(X, 200_000, seed=seed)
        assert np.all(np.abs(mean - gram_infty(X)) <= 3 * se + 1e-12)


def test_rkhs_norm_single_point():
    x = np.array([[0.6, 0.8]])
    assert empirical_rkhs_norm(x, np.array([3.0])) == pytest.approx(3.0 * math.sqrt(2), rel=1e-12)


def test_rkhs_norm_regularizes_duplicates():
    X = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    info = rkhs_norm_info(X, np.array([1.0, 1.0, 0.5]))
    assert info.regularized and np.isfinite(info.value)


# ---------------------------------------------------------------- functions and bounds


def test_term_complexity_by_hand():
    assert term_complexity(0.5, 1.2, 2) == pytest.approx(1.44)
    assert term_complexity(-0.5, 1.2, 2, gamma_norm=2.0, pi_factor=True) == pytest.approx(2.88 * math.pi)


def test_bound_formulas():
    b = bound_thm41([[(1.0, 1.0, 1)], [(0.5, 2.0, 2)]], m=2, eps=0.1, delta=0.05)
    assert b.numerator == pytest.approx(4.0 + math.log(40))
    assert b.value == pytest.approx(b.numerator / 0.05 ** 2)
    f = single([1.0, 0.0], [PolyTerm(1.0, np.array([1.0, 0.0]), 1)])
    assert bound_thm42(f, 0.1, 0.05).numerator == pytest.approx(math.pi + math.log(20))
    with pytest.raises(ValueError):
        bound_thm41([[(1.0, 1.0, 1)]], m=1, eps=0.0, delta=0.1)


def test_gated_square_is_x1_squared():
    f = single([1.0, 0.0], [PolyTerm(1.0, np.array([1.0, 0.0]), 1)])
    X = np.random.default_rng(0).standard_normal((10, 2))
    np.testing.assert_allclose(eval_function(f, X)[:, 0], X[:, 0] ** 2)


def test_mixture_with_logit_gates_equals_flat_sum():
    f = gen_multimode(3, 6, 2, 3, 2)
    X = unit_rows(np.random.default_rng(1).standard_normal((50, 6)))
    assert np.max(np.abs(eval_mixture(f, X) - eval_function(f, X))) < 1e-12
    post = mode_posteriors(f, X, temperature=5.0)
    np.testing.assert_allclose(post.sum(axis=1), 1.0)


def test_separated_directions():
    g = separated_directions(np.random.default_rng(0), 4, 8)
    cos = g @ g.T
    assert np.all(cos[~np.eye(4, dtype=bool)] <= 0.5 + 1e-12)
    with pytest.raises(ValueError):
        separated_directions(np.random.default_rng(0), 5, 1, max_tries=100)


def test_bound_sweep_holds():
    reports = bound_sweep(30, seed=1)
    assert all(r.holds for r in reports)


def test_linear_terms_hold_in_low_dimension():
    # degree-one terms give an even gated product, inside the kernel's span
    for s in range(20):
        rng = np.random.default_rng(s)
        f = gen_multimode(s, 2, 1, 1, 2, p_set=(1,))
        assert check_bound(f, unit_rows(rng.standard_normal((64, 2))), 0).holds


# ---------------------------------------------------------------- networks and curves


def test_symmetric_init_starts_at_zero():
    net = init_two_layer(5, 2, 64, seed=0)
    X = np.random.default_rng(0).standard_normal((7, 5))
    np.testing.assert_allclose(net(X), 0.0, atol=1e-12)
    assert np.all(np.abs(net.A) == 1 / 8)
    with pytest.raises(ValueError):
        init_two_layer(5, 2, 63, seed=0)


def test_wide_network_memorizes():
    rng = np.random.default_rng(0)
    X = unit_rows(rng.standard_normal((10, 6)))
    Y = rng.standard_normal((10, 1))
    res = train_overparam_mlp(RegressionData(X, Y, X, Y), width=2048, lr=2.0, iters=2000)
    assert not res.diverged
    assert res.train_error < 1e-3
    assert res.losses[-1] < res.losses[0]


def test_linear_target_generalizes():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(4)
    X, Xt = unit_rows(rng.standard_normal((200, 4))), unit_rows(rng.standard_normal((500, 4)))
    res = train_overparam_mlp(RegressionData(X, X @ w, Xt, Xt @ w), width=1024, lr=2.0, iters=1000)
    assert res.test_error < 0.05 * np.var(Xt @ w)


def test_divergence_is_reported():
    X = unit_rows(np.random.default_rng(0).standard_normal((8, 3)))
    res = train_overparam_mlp(RegressionData(X, np.ones(8), X, np.ones(8)), width=64, lr=500.0, iters=50)
    assert res.diverged and math.isinf(res.test_error)


def test_mode_classifier_separates_clusters():
    cfg = CurveConfig()
    f = gen_multimode(0, cfg.d, cfg.m, cfg.R, cfg.J, split=cfg.d_q)
    rng = np.random.default_rng(0)
    X, _, lab = sample_task(f, 2000, rng, cfg.d_q, cfg.cluster_noise, cfg.temperature)
    Xt, _, lt = sample_task(f, 2000, rng, cfg.d_q, cfg.cluster_noise, cfg.temperature)
    clf = fit_mode_classifier(X[:, :cfg.d_q], lab, cfg.R)
    assert np.mean(clf.predict(Xt[:, :cfg.d_q]) == lt) >= 0.99


def test_single_mode_decomposition_equals_joint():
    cfg = CurveConfig(R=1, d=8, m=2, d_q=4, width=64, iters=50, n_test=200)
    j = sample_complexity_curve(cfg, "joint", [32], [0])
    d = sample_complexity_curve(cfg, "decomposed", [32], [0])
    assert j[0].test_error == d[0].test_error
    assert d[0].mode_accuracy == 1.0
