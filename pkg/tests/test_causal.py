import numpy as np
import pytest

from pnn.causal import (
    DirectModel,
    PropensityModel,
    clip_probabilities,
    cross_fit_scores,
    dr_scores,
    elastic_net,
    fit_direct,
    fit_direct_model,
    fit_nuisances,
    fit_propensity,
    policy_value,
    select_outcome_family,
    stratified_folds,
)
from pnn.core import CounterfactualScores, Dataset
from pnn.synthetic import SimSpec, adapted_binarize, binarize_deciles, simulate


def ds(X, t, y, T=None):
    return Dataset.from_arrays(np.asarray(X, dtype=float).reshape(len(t), -1), t, y, T)


def test_balanced_propensity_is_uniform():
    X = np.array([-1.0, 1.0, -1.0, 1.0, -2.0, 2.0, -2.0, 2.0])
    t = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    m = fit_propensity(ds(X, t, np.zeros(8)))
    assert np.allclose(m.coefficients, 0.0, atol=1e-8)
    assert np.allclose(m.predict_proba(X[:, None]), 0.5)


def test_three_treatments_probabilities_sum_to_one():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 2))
    t = rng.integers(0, 3, 300)
    m = fit_propensity(ds(X, t, np.zeros(300)), l2_lambda=0.01)
    assert m.coefficients.shape == (2, 3)
    raw = m.raw_proba(X)
    assert np.allclose(raw.sum(axis=1), 1.0, atol=1e-12)
    P = m.predict_proba(X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert P.min() > 0


def test_propensity_on_design_one():
    vals = []
    for seed in range(5):
        s = simulate(SimSpec(1, 500, 0.9, seed, shared_noise=True))
        B = adapted_binarize(binarize_deciles(s.dataset.features))
        B = B[:, [j for j in range(B.shape[1]) if j % 10]]  # first column of a block is constant
        m = fit_propensity(ds(B, s.dataset.treatments, s.dataset.outcomes), l2_lambda=1e-4)
        P = m.predict_proba(B)
        vals.append(P[np.arange(500), s.correct_treatment].mean())
    assert abs(np.mean(vals) - 0.9) <= 0.1


def test_missing_treatment_and_singular_hessian():
    with pytest.raises(ValueError):
        fit_propensity(ds([0.0, 1.0], [0, 0], [0, 0], T=2))
    # duplicated column: the unpenalised Hessian is singular
    X = np.array([[-2.0, -2.0], [-1.0, -1.0], [1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])
    with pytest.raises(ValueError, match="l2_lambda"):
        fit_propensity(ds(X, [0, 1, 0, 1, 1], np.zeros(5)))
    m = fit_propensity(ds(X, [0, 1, 0, 1, 1], np.zeros(5)), l2_lambda=0.1)
    assert np.all(np.isfinite(m.coefficients))


def test_direct_exact_line():
    x = np.arange(6.0)
    coef = fit_direct(ds(x, np.zeros(6, dtype=int), 2 * x + 1, T=1), 0)
    assert np.allclose(coef, [2.0, 1.0], atol=1e-6)


def test_direct_heavy_lasso_gives_mean():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    coef = fit_direct(ds(X, np.zeros(50, dtype=int), y, T=1), 0, l1_lambda=100.0)
    assert np.allclose(coef[:-1], 0.0)
    assert coef[-1] == pytest.approx(y.mean())


def test_direct_matches_normal_equations():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 4))
    X[:, 1] += 0.5 * X[:, 0]
    y = X @ np.array([1.0, -2.0, 0.5, 0.0]) + 3.0 + rng.normal(size=80)
    coef = elastic_net(X, y)
    A = np.hstack([X, np.ones((80, 1))])
    ref = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.allclose(coef, ref, atol=1e-6)


def test_direct_design_one_ols():
    s = simulate(SimSpec(1, 500, 0.5, 4, shared_noise=True))
    d = s.dataset
    coef = fit_direct(d, 1)
    m = d.treatments == 1
    A = np.hstack([d.features[m], np.ones((m.sum(), 1))])
    # regressing the generator's conditional mean on the same rows
    mean1 = s.eta[m] + 0.5 * s.kappa[m]
    ref = np.linalg.lstsq(A, mean1, rcond=None)[0]
    assert np.allclose(coef, ref, atol=0.1)
    assert np.allclose(coef, [0.75, 1.0, 0.0], atol=0.1)


def test_direct_too_few_samples():
    with pytest.raises(ValueError):
        fit_direct(ds([0.0, 1.0, 2.0], [0, 0, 1], [1, 2, 3]), 1)


def test_dr_score_arithmetic():
    sc = dr_scores([1], [3.0], [[7.0, 2.0]], [[0.5, 0.5]])
    assert sc.psi_hat[0, 0] == 7.0
    assert sc.psi_hat[0, 1] == pytest.approx(4.0)


def test_dr_mean_with_oracle_nuisances():
    s = simulate(SimSpec(1, 2000, 0.7, 11, shared_noise=True))
    d = s.dataset
    mu = np.column_stack([s.eta - 0.5 * s.kappa, s.eta + 0.5 * s.kappa])
    pc = np.where(s.correct_treatment == 1, 0.7, 0.3)
    P = np.column_stack([1 - pc, pc])
    sc = dr_scores(d.treatments, d.outcomes, mu, P)
    truth = s.potential_outcomes.mean(axis=0)
    se = sc.psi_hat.std(axis=0, ddof=1) / np.sqrt(d.n)
    assert np.all(np.abs(sc.psi_hat.mean(axis=0) - truth) <= 3 * se)


def test_policy_value_examples():
    d = ds([0.0, 1.0], [0, 1], [1.0, 2.0])
    sc = CounterfactualScores(np.array([[0.5, 0.1], [0.2, 0.4]]), np.full((2, 2), 0.5), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert policy_value([0, 1], d, sc, "ipw") == pytest.approx(3.0)
    assert policy_value([1, 0], d, sc, "ipw") == 0.0
    assert policy_value([0, 0], d, sc, "dm") == pytest.approx(0.35)
    assert policy_value([1, 1], d, sc, "dr") == pytest.approx(3.0)
    with pytest.raises(ValueError):
        policy_value([0, 2], d, sc, "dr")
    with pytest.raises(ValueError):
        policy_value([0], d, sc, "dr")


def test_clip_widening_changes_only_weighted_terms():
    P = np.array([[0.001, 0.999], [0.5, 0.5]])
    narrow, wide = clip_probabilities(P, (0.01, 0.99)), clip_probabilities(P, (0.001, 0.999))
    mu = np.array([[1.0, 2.0], [3.0, 4.0]])
    a = dr_scores([0, 1], [5.0, 5.0], mu, narrow)
    b = dr_scores([0, 1], [5.0, 5.0], mu, wide)
    assert np.array_equal(a.mu_hat, b.mu_hat)
    assert not np.allclose(a.psi_hat, b.psi_hat)
    assert np.allclose(narrow.sum(axis=1), 1.0)


def test_stratified_folds_partition():
    t = np.array([0] * 23 + [1] * 17)
    f = stratified_folds(t, 5, seed=3)
    assert set(f) == set(range(5))
    for k in range(5):
        assert abs((t[f == k] == 0).sum() - 23 / 5) < 1
    assert np.array_equal(f, stratified_folds(t, 5, seed=3))


def test_nuisance_selection_and_cross_fit():
    s = simulate(SimSpec(1, 300, 0.5, 2))
    fam, l1, rmse = select_outcome_family(s.dataset)
    assert fam in ("ols", "lasso") and set(rmse) == {"ols", "lasso"}
    nm = fit_nuisances(s.dataset, outcome_family="auto")
    assert nm.outcome_family == fam
    sc = cross_fit_scores(s.dataset, k_folds=3)
    assert sc.psi_hat.shape == (300, 2)
    with pytest.raises(ValueError):
        fit_nuisances(s.dataset, outcome_family="forest")


def test_double_robustness_small():
    # each nuisance wrong in turn, the other right: bias stays within noise
    rng = np.random.default_rng(5)
    for corrupt in ("mu", "p"):
        means = []
        for rep in range(20):
            s = simulate(SimSpec(1, 2000, 0.8, 100 + rep, shared_noise=True))
            d = s.dataset
            mu = np.column_stack([s.eta - 0.5 * s.kappa, s.eta + 0.5 * s.kappa])
            pc = np.where(s.correct_treatment == 1, 0.8, 0.2)
            P = np.column_stack([1 - pc, pc])
            if corrupt == "mu":
                mu = mu + 1.0 + rng.normal(size=mu.shape)
            else:
                P = np.full_like(P, 0.5)
            means.append(dr_scores(d.treatments, d.outcomes, mu, P).psi_hat.mean(axis=0))
        means = np.array(means)
        se = means.std(axis=0, ddof=1) / np.sqrt(len(means))
        assert np.all(np.abs(means.mean(axis=0)) <= 3 * se + 1e-12)
