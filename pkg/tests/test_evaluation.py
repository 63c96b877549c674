import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnn.causal import dr_scores, fit_nuisances
from pnn.core import Architecture, NetworkWeights, PolicyModel
from pnn.evaluation import (
    RESULT_COLUMNS,
    CellResult,
    cells_to_rows,
    confidence_interval,
    evaluate_policy_value,
    oosp,
    paired_t_test,
    tune_lambda,
    write_results,
)
from pnn.synthetic import SimSpec, simulate
from pnn.training import TrainResult


def constant_policy(F, t):
    arch = Architecture(F, 1, 1, 2)
    out = np.zeros(2)
    out[t] = 1.0
    return PolicyModel(arch, NetworkWeights(np.zeros((F, 1)), (), np.zeros((1, 2)), (np.zeros(1), out)), 0.0, 0.0)


def test_oosp_examples():
    s = simulate(SimSpec(1, 10, 0.5, 0))
    assert oosp(s.correct_treatment, s) == 100.0
    wrong = s.correct_treatment.copy()
    wrong[0] = 1 - wrong[0]
    assert oosp(wrong, s) == 90.0


def test_always_treat_on_design_two():
    s = simulate(SimSpec(2, 10000, 0.5, 1_000_000))
    assert oosp(constant_policy(10, 1), s) == pytest.approx(85.05, abs=1.5)


def test_policy_value_examples():
    s = simulate(SimSpec(1, 400, 0.5, 3))
    d = s.dataset
    nm = fit_nuisances(d)
    sc = nm.scores(d)
    v = evaluate_policy_value(d.treatments, d, "dr", scores=sc)
    assert v == pytest.approx(sc.psi_hat[np.arange(d.n), d.treatments].mean())
    assert evaluate_policy_value(constant_policy(2, 0), d, "dm", nuisances=nm) == pytest.approx(sc.mu_hat[:, 0].mean())
    with pytest.raises(ValueError):
        evaluate_policy_value(d.treatments, d, "dr")


def test_oracle_policy_beats_constant_with_oracle_nuisances():
    s = simulate(SimSpec(1, 5000, 0.5, 8, shared_noise=True))
    d = s.dataset
    mu = np.column_stack([s.eta - 0.5 * s.kappa, s.eta + 0.5 * s.kappa])
    sc = dr_scores(d.treatments, d.outcomes, mu, np.full((d.n, 2), 0.5))
    assert evaluate_policy_value(s.correct_treatment, d, "dr", scores=sc) >= evaluate_policy_value(np.zeros(d.n, int), d, "dr", scores=sc)


def test_t_test_degenerate_cases():
    a = np.array([1.0, 2.0, 3.0])
    assert paired_t_test(a, a) == (0.0, 1.0)
    m, p = paired_t_test(a + 1, a)
    assert m == 1.0 and p == 0.0
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [2.0])


def test_t_test_against_scipy():
    from scipy.stats import ttest_rel

    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert paired_t_test(a, b)[1] == pytest.approx(ttest_rel(a, b).pvalue, rel=1e-9)


def test_t_test_against_permutation_oracle():
    rng = np.random.default_rng(0)
    signs = np.array(list(itertools.product([-1, 1], repeat=10)), dtype=float)
    diffs = []
    for _ in range(1000):
        a, b = rng.normal(size=10), rng.normal(size=10)
        d = a - b
        exact = np.mean(np.abs(signs @ d) >= abs(d.sum()) - 1e-12)
        diffs.append(abs(paired_t_test(a, b)[1] - exact))
    diffs = np.array(diffs)
    assert diffs.mean() <= 0.05
    assert np.mean(diffs <= 0.05) >= 0.95


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=12))
def test_t_test_antisymmetric(pairs):
    a, b = np.array(pairs).T
    m1, p1 = paired_t_test(a, b)
    m2, p2 = paired_t_test(b, a)
    assert m1 == pytest.approx(-m2, abs=1e-12)
    assert p1 == pytest.approx(p2, abs=1e-12)


def test_confidence_interval_examples():
    lo, hi = confidence_interval([1.0, 2.0, 3.0], 0.95)
    assert lo == pytest.approx(2 - 4.3027 / math.sqrt(3), abs=1e-3)
    assert hi == pytest.approx(2 + 4.3027 / math.sqrt(3), abs=1e-3)
    assert confidence_interval([5.0, 5.0, 5.0]) == (5.0, 5.0)
    v = np.random.default_rng(1).normal(size=20)
    lo95, hi95 = confidence_interval(v, 0.95)
    lo90, hi90 = confidence_interval(v, 0.90)
    assert lo95 <= lo90 <= hi90 <= hi95
    with pytest.raises(ValueError):
        confidence_interval([1.0])


class FakeTrainer:
    """Returns a constant policy chosen by lambda, recording calls."""

    def __init__(self, choice):
        self.choice = choice
        self.calls = []

    def __call__(self, train_set, lam, cfg, **kw):
        self.calls.append((lam, train_set.n, cfg.time_limit_s))
        return TrainResult(constant_policy(train_set.n_features, self.choice(lam)), None, None, 0.0)


def test_tune_single_lambda_and_ties():
    s = simulate(SimSpec(1, 60, 0.5, 0))
    fake = FakeTrainer(lambda lam: 1)
    best, means, cells = tune_lambda(s.dataset, grid=[0.0], k_folds=3, correct_treatment=s.correct_treatment, trainer=fake)
    assert best == 0.0 and set(means) == {0.0}
    best, means, _ = tune_lambda(s.dataset, grid=[1.0, 0.1], k_folds=3, correct_treatment=s.correct_treatment, trainer=fake)
    assert best == 0.1 and means[1.0] == means[0.1]


def test_tune_picks_better_lambda_and_budget():
    s = simulate(SimSpec(1, 60, 0.5, 0))
    better = int(np.mean(s.correct_treatment) >= 0.5)
    fake = FakeTrainer(lambda lam: better if lam == 10.0 else 1 - better)
    best, means, cells = tune_lambda(
        s.dataset, grid=[0.0, 10.0], k_folds=4, correct_treatment=s.correct_treatment, trainer=fake, total_budget_s=80.0
    )
    assert best == 10.0
    assert all(c[2] == pytest.approx(10.0) for c in fake.calls)
    assert sorted({c.fold for c in cells}) == [0, 1, 2, 3]
    assert sum(c[1] for c in fake.calls if c[0] == 0.0) == 3 * 60


def test_tune_without_truth_uses_dr_and_validates():
    s = simulate(SimSpec(1, 60, 0.5, 0))
    _, _, cells = tune_lambda(s.dataset, grid=[0.0], k_folds=2, trainer=FakeTrainer(lambda lam: 0))
    assert {c.metric for c in cells} == {"dr_value"}
    with pytest.raises(ValueError):
        tune_lambda(s.dataset, grid=[], trainer=FakeTrainer(lambda lam: 0))
    with pytest.raises(ValueError):
        tune_lambda(s.dataset, grid=[0.0], k_folds=1, trainer=FakeTrainer(lambda lam: 0))


def test_tune_skips_fold_missing_treatment():
    s = simulate(SimSpec(1, 40, 0.5, 0))
    d = s.dataset
    # a single treated row lands in one fold only
    keep = np.concatenate([np.flatnonzero(d.treatments == 0), np.flatnonzero(d.treatments == 1)[:1]])
    sub = d.subset(keep)
    with pytest.warns(RuntimeWarning, match="skipped"):
        _, _, cells = tune_lambda(sub, grid=[0.0], k_folds=3, correct_treatment=s.correct_treatment[keep], trainer=FakeTrainer(lambda lam: 0))
    assert len({c.fold for c in cells}) == 2


def test_results_csv(tmp_path):
    p = tmp_path / "r.csv"
    cells = [CellResult(0.1, 0, "oosp", 90.0, 0.0, 1.5), CellResult(0.1, 1, "oosp", 80.0, 0.1, 2.5)]
    write_results(p, cells_to_rows(cells))
    write_results(p, cells_to_rows(cells[:1], model="other"))
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert len(lines) == 4 and lines[3].startswith("other,0.1,0,oosp,90.0")
