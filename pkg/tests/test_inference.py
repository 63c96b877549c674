import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnn.core import Architecture, CounterfactualScores, NetworkWeights
from pnn.formulation import LossSpec, build_pnn
from pnn.inference import extract_weights, forward, predict, prescribe, resolve_boundary, softmax
from pnn.mip import SolveResult, SolverConfig, Status, solve


def one_unit(alpha=1.0, beta=0.0):
    return NetworkWeights(np.array([[alpha]]), (), np.array([[1.0, -1.0]]), (np.array([beta]), np.array([0.0, 0.0])))


@pytest.mark.parametrize("x,h", [(0.0, 1.0), (-0.5, 0.0), (0.5, 1.0)])
def test_step_activation(x, h):
    hidden, _ = forward(one_unit(), np.array([x]))
    assert hidden[0][0] == h


def test_all_zero_weights():
    arch = Architecture(3, 2, 4, 3)
    hidden, out = forward(NetworkWeights.zeros(arch), np.array([0.3, -2.0, 7.0]))
    assert all(np.all(h == 1.0) for h in hidden)
    assert np.all(out == 0.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(one_unit(), np.array([1.0, 2.0]))


def test_batch_matches_rows():
    rng = np.random.default_rng(0)
    arch = Architecture(2, 2, 3, 2)
    w = NetworkWeights(
        rng.uniform(-1, 1, (2, 3)), (rng.uniform(-1, 1, (3, 3)),), rng.uniform(-1, 1, (3, 2)),
        (rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2)),
    )
    X = rng.normal(size=(6, 2))
    _, batch = forward(w, X)
    for i in range(6):
        assert np.array_equal(forward(w, X[i])[1], batch[i])
    assert np.array_equal(prescribe(w, X), np.array([prescribe(w, x) for x in X]))


def _fixed_output(scores):
    s = np.asarray(scores, dtype=float)
    return NetworkWeights(np.zeros((1, 1)), (), np.zeros((1, len(s))), (np.zeros(1), s), beta_bounds=(-2000, 2000))


def test_prescribe_argmax_and_ties():
    assert prescribe(_fixed_output([0.3, -0.2]), np.array([0.0])) == 0
    assert prescribe(_fixed_output([-0.3, 0.2]), np.array([0.0])) == 1
    assert prescribe(_fixed_output([0.5, 0.5]), np.array([0.0])) == 0


def test_predict_softmax():
    c, p = predict(_fixed_output([0.0, 0.0]), np.array([0.0]))
    assert c == 0 and np.allclose(p, [0.5, 0.5])
    c, p = predict(_fixed_output([np.log(3.0), 0.0]), np.array([0.0]))
    assert np.allclose(p, [0.75, 0.25])
    big = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(big)) and big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=5), st.floats(-100, 100))
def test_shift_invariance(scores, c):
    s = np.array(scores)
    assert np.argmax(s) == np.argmax(s + c) or np.isclose(np.sort(s)[-1], np.sort(s)[-2])
    assert np.allclose(softmax(s), softmax(s + c), atol=1e-12)


def test_forward_is_pure():
    w = one_unit(0.7, -0.1)
    x = np.array([0.2])
    a = forward(w, x)
    b = forward(w, x)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[0][0], b[0][0])


def _solved(n=3):
    X = np.array([[1.0], [-1.0], [0.4]])[:n]
    psi = np.eye(2)[[1, 0, 1]][:n]
    P = np.full((n, 2), 0.5)
    arch = Architecture(1, 1, 1, 2)
    f = build_pnn(X, arch, LossSpec("dr", scores=CounterfactualScores(psi, P, psi)), feature_bounds=[[-2, 2]])
    return f, arch, solve(f.model, SolverConfig(rel_gap_tol=0, abs_gap_tol=1e-9))


def test_extract_round_trip_with_fixed_weights():
    X = np.array([[1.0], [-1.0]])
    arch = Architecture(1, 1, 1, 2)
    psi = np.eye(2)[[1, 0]]
    f = build_pnn(X, arch, LossSpec("dr", scores=CounterfactualScores(psi, np.full((2, 2), 0.5), psi)), feature_bounds=[[-2, 2]])
    target = {"alpha_0_0_0": 0.75, "beta_0_0": -0.125, "alpha_0_0_1": -1.0, "alpha_0_1_1": 1.0, "beta_0_1": 0.5, "beta_1_1": 0.0}
    for k, v in target.items():
        f.model.add_constraint([(1.0, f.model.var(k))], "E", v, f"fix_{k}")
    r = solve(f.model)
    w = extract_weights(f.model, r, arch)
    assert w.input_alpha[0, 0] == pytest.approx(0.75)
    assert w.biases[0][0] == pytest.approx(-0.125)
    assert np.allclose(w.output_alpha, [[-1.0, 1.0]])
    assert np.allclose(w.biases[1], [0.5, 0.0])


def test_extract_requires_incumbent_and_clamps():
    f, arch, r = _solved()
    empty = SolveResult(Status.INFEASIBLE, None, np.nan, np.nan, np.inf, 0, 0.0, r.names)
    with pytest.raises(ValueError):
        extract_weights(f.model, empty, arch)
    x = r.incumbent.copy()
    x[f.model.var("alpha_0_0_0").id] = 1.0 + 1e-7
    w = extract_weights(f.model, SolveResult(r.status, x, r.objective, r.best_bound, r.gap, 0, 0.0, r.names), arch)
    assert w.input_alpha[0, 0] == 1.0
    x[f.model.var("alpha_0_0_0").id] = 1.01
    with pytest.raises(ValueError):
        extract_weights(f.model, SolveResult(r.status, x, r.objective, r.best_bound, r.gap, 0, 0.0, r.names), arch)


def test_solver_forward_consistency_after_boundary_shift():
    f, arch, r = _solved()
    w = resolve_boundary(extract_weights(f.model, r, arch), f.bigm.epsilon)
    t = prescribe(w, f.X)
    one_hot = np.array([[r.value(f"h_{i}_{k}_1") for k in range(2)] for i in range(3)])
    assert np.array_equal(t, one_hot.argmax(axis=1))
    hidden, _ = forward(w, f.X)
    assert np.array_equal(hidden[0][:, 0], [r.value(f"h_{i}_0_0") for i in range(3)])
