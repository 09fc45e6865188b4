import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchid.config import DataConfig
from switchid.errors import EmptyClass, NonFinite, RankDeficient
from switchid.experiments import training_set
from switchid.pendulum import C1, C2, PendulumParams, Trajectory, step
from switchid.sysid import (
    CandidateLibrary,
    CoefficientMatrix,
    DataMatrices,
    SwitchedModel,
    cv_errors,
    evaluate_library,
    fit_switched_model,
    lasso_certificate,
    rmse,
    partition_data,
    select_alpha,
    simulate_identified,
    sparse_fit,
)
from switchid.tree import constant_tree, fit_tree

LIB = CandidateLibrary.default()
P = PendulumParams()


@pytest.fixture(scope="module")
def noisy_runs():
    d = replace(DataConfig(), n_dropdown=4, n_torque=4, n_steps=600)
    return training_set(P, d)


@pytest.fixture(scope="module")
def clean_runs():
    d = replace(DataConfig(), n_dropdown=4, n_torque=4, n_steps=600, noise_std=(0.0, 0.0, 0.0))
    return training_set(P, d)


def truth_labels(trajs):
    return np.concatenate([t.classes for t in trajs])


def synthetic(n=400, seed=0, noise=0.0, lib=LIB):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 3))
    U = rng.uniform(-1, 1, size=(n, 1))
    xi = rng.normal(size=(3, lib.n_terms))
    Xn = lib.evaluate(X, U) @ xi.T + noise * rng.normal(size=(n, 3))
    return DataMatrices(X, Xn, U, C2), xi


# library

def test_library_at_zero():
    expected = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0]
    assert evaluate_library(LIB, (0.0, 0.0, 0.0), 0.0).tolist() == expected
    assert LIB.n_terms == 16


def test_library_quarter_turn_blocks():
    v = evaluate_library(LIB, (math.pi / 2, 0.0, 0.0), 0.0)
    np.testing.assert_allclose(v[6:9], (1, 0, 0), atol=1e-16)
    np.testing.assert_allclose(v[9:12], (0, 1, 1), atol=1e-16)
    assert v[12:15].tolist() == [1, 0, 0]


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.floats(-1e3, 1e3))
def test_library_matches_scalar_evaluation(x, u):
    def sgn(v):
        return (v > 0) - (v < 0)
    ref = list(x) + [v * v for v in x] + [math.sin(v) for v in x] + [math.cos(v) for v in x]
    ref += [sgn(v) for v in x] + [u]
    np.testing.assert_array_equal(evaluate_library(LIB, x, u), ref)


def test_library_with_constant_and_jacobian():
    lib = CandidateLibrary.default(include_constant=True)
    assert lib.n_terms == 17 and evaluate_library(lib, (1, 2, 3), 4)[-1] == 1.0
    # away from 0 the sign terms are flat, matching the zero derivative
    x = np.array([[0.3, -1.2, 2.0]])
    J = LIB.state_jacobian(x)[0]
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (LIB.evaluate(x + e, [0.0]) - LIB.evaluate(x - e, [0.0]))[0] / (2 * h)
        np.testing.assert_allclose(J[:, i], fd, atol=1e-7)


# partitioning

def test_partition_requires_both_classes():
    tr = Trajectory(np.zeros((5, 3)), np.zeros(4), 0.005)
    with pytest.raises(EmptyClass):
        partition_data([tr], [C1] * 4)


def test_partition_alternating_keeps_order():
    states = np.arange(15.0).reshape(5, 3)
    tr = Trajectory(states, np.arange(4.0), 0.005)
    d1, d2 = partition_data([tr], [C1, C2, C1, C2])
    assert d1.X.tolist() == [states[0].tolist(), states[2].tolist()]
    assert d2.X_next.tolist() == [states[2].tolist(), states[4].tolist()]
    assert d2.U.ravel().tolist() == [1.0, 3.0]


def test_partition_counts_match_simulator(clean_runs):
    lab = truth_labels(clean_runs)
    d1, d2 = partition_data(clean_runs, lab)
    assert len(d1) == sum(int(np.sum(t.classes == C1)) for t in clean_runs)
    assert len(d2) == sum(int(np.sum(t.classes == C2)) for t in clean_runs)


# fitting

def test_zero_alpha_recovers_generator():
    dm, xi = synthetic()
    cm = sparse_fit(dm, LIB, 0.0)
    assert np.abs(cm.xi - xi).max() <= 1e-8


def test_zero_alpha_matches_least_squares():
    dm, _ = synthetic(noise=0.1)
    Psi = LIB.evaluate(dm.X, dm.U)
    ls = np.linalg.lstsq(Psi, dm.X_next, rcond=None)[0].T
    cm = sparse_fit(dm, LIB, 0.0)
    assert np.abs(cm.xi - ls).max() <= 1e-8 * np.abs(ls).max()


def test_zero_alpha_rank_deficient():
    dm, _ = synthetic()
    X = dm.X.copy()
    X[:, 1] = X[:, 0]
    dup = DataMatrices(X, dm.X_next, dm.U, C2)
    with pytest.raises(RankDeficient):
        sparse_fit(dup, CandidateLibrary.linear(), 0.0)


def test_huge_alpha_gives_centre():
    dm, _ = synthetic(noise=0.1)
    assert np.all(sparse_fit(dm, LIB, 1e12, center="zero").xi == 0)
    np.testing.assert_array_equal(sparse_fit(dm, LIB, 1e12).xi, LIB.identity_map())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_scalar_soft_threshold(seed, frac):
    rng = np.random.default_rng(seed)
    n = 50
    u = rng.normal(size=(n, 1))
    y = 0.7 * u[:, 0] + 0.1 * rng.normal(size=n)
    lib = CandidateLibrary((("u", None),))
    s = math.sqrt(np.mean(u[:, 0] ** 2))
    z = u[:, 0] / s
    beta_ls = z @ y / (z @ z)
    alpha = frac * abs(z @ y)
    dm = DataMatrices(np.zeros((n, 3)), np.column_stack([y, y, y]), u, C2)
    cm = sparse_fit(dm, lib, alpha, center="zero")
    expected = np.sign(beta_ls) * max(abs(beta_ls) - alpha / (2 * (z @ z)), 0.0) / s
    np.testing.assert_allclose(cm.xi[:, 0], expected, rtol=1e-10, atol=1e-14)


def test_sparsity_non_increasing_in_alpha(noisy_runs):
    d1, d2 = partition_data(noisy_runs, truth_labels(noisy_runs))
    for dm in (d1, d2):
        counts = []
        for g in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1):
            cm = sparse_fit(dm, LIB, g * len(dm))
            counts.append(np.count_nonzero(cm.xi - LIB.identity_map()))
        assert all(a >= b for a, b in zip(counts, counts[1:])), counts


@settings(max_examples=20, deadline=None)
@given(st.floats(-7, 0), st.sampled_from(["identity", "zero"]))
def test_optimality_certificate(log_g, center):
    dm, _ = synthetic(noise=0.05, seed=3)
    cm = sparse_fit(dm, LIB, 10 ** log_g * len(dm), center=center)
    assert cm.converged
    assert lasso_certificate(dm, LIB, cm) <= 1e-6


def test_per_row_alpha_rows_are_independent():
    dm, _ = synthetic(noise=0.05, seed=4)
    n = len(dm)
    mixed = sparse_fit(dm, LIB, [1e-4 * n, 1e-2 * n, 0.0])
    for r, g in enumerate((1e-4 * n, 1e-2 * n, 0.0)):
        np.testing.assert_allclose(mixed.xi[r], sparse_fit(dm, LIB, g).xi[r], atol=1e-12)


def test_few_samples_warn():
    dm, _ = synthetic(n=10)
    with pytest.warns(RuntimeWarning):
        sparse_fit(dm, LIB, 1.0)


def test_sticking_rows_on_clean_data(clean_runs):
    d1, _ = partition_data(clean_runs, truth_labels(clean_runs))
    for g in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
        cm = sparse_fit(d1, LIB, g * len(d1))
        row = cm.xi[2]
        assert row[2] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.delete(row, 2) == 0)
        pred = LIB.evaluate(d1.X, d1.U) @ row
        assert np.abs(pred - d1.X_next[:, 2]).max() <= 1e-10


def test_cv_and_alpha_selection(noisy_runs):
    d1, _ = partition_data(noisy_runs, truth_labels(noisy_runs))
    e = cv_errors(d1, LIB, 1e-4 * len(d1))
    assert e.shape == (5, 3) and np.all(e >= 0)
    a_min, scores = select_alpha(d1, LIB, rule="min")
    a_se, _ = select_alpha(d1, LIB, rule="one-se")
    assert len(scores) == 6
    # one-standard-error picks at least as much regularisation as the minimum
    assert np.all(a_se >= a_min)
    with pytest.raises(ValueError):
        select_alpha(d1, LIB, rule="best")


# switched model

def identity_model(lib=LIB):
    cm = CoefficientMatrix(lib.identity_map(), C1, 0.0)
    return SwitchedModel(lib, cm, replace(cm, cls=C2), constant_tree(C2), 0.005)


def test_zero_coefficients_give_zero_states():
    cm = CoefficientMatrix(np.zeros((3, 16)), C1, 0.0)
    m = SwitchedModel(LIB, cm, replace(cm, cls=C2), constant_tree(C1), 0.005)
    X, _ = simulate_identified(m, (1.0, 2.0, 3.0), np.zeros(5))
    assert np.all(X[1:] == 0)


def test_identity_coefficients_hold_state():
    X, cls = simulate_identified(identity_model(), (1.0, 2.0, 3.0), np.ones(20))
    assert np.all(X == [1.0, 2.0, 3.0]) and np.all(cls == C2)


def test_rollout_divergence_raises():
    xi = LIB.identity_map() * 1e200
    cm = CoefficientMatrix(xi, C1, 0.0)
    m = SwitchedModel(LIB, cm, replace(cm, cls=C2), constant_tree(C2), 0.005)
    with pytest.raises(NonFinite), np.errstate(over="ignore", invalid="ignore"):
        simulate_identified(m, (1.0, 1.0, 1.0), np.zeros(5))


def test_equal_alphas_symmetric_plumbing(noisy_runs):
    lab = truth_labels(noisy_runs)
    tree = constant_tree(C2)
    a = fit_switched_model(noisy_runs, lab, tree, alpha_c1=5.0, alpha_c2=5.0)
    b = fit_switched_model(noisy_runs, lab, tree, alpha_c2=5.0, alpha_c1=5.0)
    np.testing.assert_array_equal(a.xi_c1.xi, b.xi_c1.xi)
    np.testing.assert_array_equal(a.xi_c2.xi, b.xi_c2.xi)


def test_truth_labelled_model_reaches_noise_floor_on_sticking_data(noisy_runs):
    lab = truth_labels(noisy_runs)
    X = np.vstack([t.split_features() for t in noisy_runs])
    m = fit_switched_model(noisy_runs, lab, fit_tree(X, lab))
    held = training_set(P, replace(DataConfig(), n_dropdown=2, n_torque=2, n_steps=600, seed=123))
    F = np.vstack([t.split_features() for t in held])
    Xn = np.vstack([t.x_next for t in held])
    c = truth_labels(held)
    sel = c == C1
    err = rmse(m.predict(F[sel, :3], F[sel, 3], c[sel]), Xn[sel])
    # the exact plant applied to the same noisy states sets the floor
    exact = np.array([step(P, f[:3], f[3], held[0].dt)[0] for f in F[sel]])
    floor = rmse(exact, Xn[sel])
    assert np.all(err <= 1.05 * floor), (err, floor)


def test_model_roundtrip(noisy_runs):
    lab = truth_labels(noisy_runs)
    m = fit_switched_model(noisy_runs, lab, constant_tree(C2), alpha_c1=1.0, alpha_c2=1.0)
    back = SwitchedModel.from_dict(m.to_dict())
    X = np.vstack([t.x for t in noisy_runs])
    U = np.concatenate([t.inputs for t in noisy_runs])
    np.testing.assert_array_equal(back.predict(X, U), m.predict(X, U))
