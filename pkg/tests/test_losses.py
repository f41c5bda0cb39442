import math

import numpy as np
import pytest

from anomix.errors import ContractViolationError, InvalidParameterError
from anomix.interpolation import AugmentedBatch, augment_batch
from anomix.losses import (
    LossState,
    TripletBatch,
    ablation_loss,
    dynamic_weight,
    feature_regularizer,
    feature_regularizer_graph,
    plain_regression_loss,
    scoring_loss,
    scoring_loss_graph,
    smooth_l1,
    triplet_hinge,
    update_epoch_averages,
)
from anomix.scorer import ScorerGraph, build_scorer, score_batch
from tests.conftest import identity_representation_scorer, tanh_line_scorer


# -- smooth l1 ----------------------------------------------------------------


def test_smooth_l1_closed_forms():
    assert smooth_l1(1.0, 1.0) == 0.0
    assert smooth_l1(0.9, 0.4) == pytest.approx(0.125, abs=1e-12)
    assert smooth_l1(2.0, 0.0) == pytest.approx(1.5, abs=1e-12)
    assert smooth_l1(-2.0, 0.0) == pytest.approx(1.5, abs=1e-12)


def test_smooth_l1_branch_boundary_and_beta():
    # |d| = beta lands on the linear branch; both branches agree there
    assert smooth_l1(1.0, 0.0, beta=1.0) == pytest.approx(0.5, abs=1e-12)
    assert smooth_l1(0.5, 0.0, beta=2.0) == pytest.approx(0.0625, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        smooth_l1(1.0, 0.0, beta=0.0)


# -- scoring loss --------------------------------------------------------------


def _solve_source_offsets():
    """Two pre-activations with mean atanh(0.2) whose tanhs average 0.1."""
    total = 2.0 * math.atanh(0.2)

    def f(u):
        return math.tanh(u) + math.tanh(total - u) - 0.2

    lo, hi = -40.0, math.atanh(0.2)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    u1 = 0.5 * (lo + hi)
    return u1, total - u1


def test_scoring_loss_worked_example():
    # scorer computes tanh(x); sources chosen so the mixed score is 0.2,
    # the target 0.4, and the interpolated source score 0.1
    params = tanh_line_scorer()
    u1, u2 = _solve_source_offsets()
    source_x = np.array([[u1], [u2]])
    mixed_x = np.array([[0.5 * u1 + 0.5 * u2]])
    batch = AugmentedBatch(mixed_x, np.array([0.4]), np.array([[0, 1]]),
                           np.array([[0.5, 0.5]]))
    loss = scoring_loss(params, batch, source_x)
    assert loss == pytest.approx(0.025, abs=1e-10)
    assert ablation_loss("no_consistency", params, augmented=batch, source_x=source_x) == \
        pytest.approx(0.02, abs=1e-10)
    # discretized target snaps 0.4 up to +1
    expected_discrete = smooth_l1(0.2, 1.0) + smooth_l1(0.2, 0.1)
    assert ablation_loss("discrete_targets", params, augmented=batch, source_x=source_x) == \
        pytest.approx(expected_discrete, abs=1e-9)


def test_scoring_loss_perfect_fit_is_zero():
    params = identity_representation_scorer(2)  # scores everything to 0
    x = np.array([[0.1, 0.2], [0.6, 0.1]])
    batch = AugmentedBatch(np.array([[0.35, 0.15]]), np.array([0.0]),
                           np.array([[0, 1]]), np.array([[0.5, 0.5]]))
    assert scoring_loss(params, batch, x) == 0.0


def test_scoring_loss_permutation_invariance(rng):
    params = build_scorer(3, 6, seed=0)
    x = rng.uniform(0, 1, size=(8, 3))
    y = np.array([1.0] * 4 + [-1.0] * 4)
    batch = augment_batch(x, y, 2, 0.5, 12, rng)
    perm = rng.permutation(12)
    shuffled = AugmentedBatch(batch.x[perm], batch.y[perm],
                              batch.sources[perm], batch.lambdas[perm])
    assert scoring_loss(params, batch, x) == pytest.approx(
        scoring_loss(params, shuffled, x), abs=1e-12)


def test_consistency_term_vanishes_for_constant_scorer(rng):
    # constant scoring functions commute with convex combinations
    params = identity_representation_scorer(3)
    x = rng.uniform(0, 1, size=(6, 3))
    y = np.array([1.0] * 3 + [-1.0] * 3)
    batch = augment_batch(x, y, 2, 0.5, 9, rng)
    with_consistency = scoring_loss(params, batch, x, consistency=True)
    without = scoring_loss(params, batch, x, consistency=False)
    assert with_consistency == without


def test_scoring_loss_rejects_dangling_sources(rng):
    params = build_scorer(2, 4, seed=0)
    batch = AugmentedBatch(np.array([[0.5, 0.5]]), np.array([0.0]),
                           np.array([[0, 7]]), np.array([[0.5, 0.5]]))
    with pytest.raises(ContractViolationError):
        scoring_loss(params, batch, np.array([[0.0, 0.0], [1.0, 1.0]]))


def test_scoring_loss_graph_matches_plain_value(rng):
    params = build_scorer(3, 6, seed=5)
    x = rng.uniform(0, 1, size=(6, 3))
    y = np.array([1.0] * 3 + [-1.0] * 3)
    batch = augment_batch(x, y, 2, 0.5, 8, rng)
    graph_value = float(scoring_loss_graph(ScorerGraph(params), batch, x).value)
    assert graph_value == scoring_loss(params, batch, x)


# -- feature regularizer --------------------------------------------------------


def test_feature_regularizer_margin_satisfied():
    params = identity_representation_scorer(2)
    triplets = TripletBatch(anomalies=[[1.5, 0.0]], unlabeled=[[0.2, 0.0]],
                            anchors=[[0.0, 0.0]], margin=1.0)
    assert feature_regularizer(params, triplets) == 0.0


def test_feature_regularizer_equal_distances_leave_margin():
    params = identity_representation_scorer(2)
    triplets = TripletBatch(anomalies=[[0.5, 0.0]], unlabeled=[[0.5, 0.0]],
                            anchors=[[0.0, 0.0]], margin=1.0)
    assert feature_regularizer(params, triplets) == pytest.approx(1.0, abs=1e-12)


def test_feature_regularizer_saturates_for_isolated_anomalies():
    params = identity_representation_scorer(2)
    triplets = TripletBatch(anomalies=[[9.0, 0.0], [0.0, 8.0]],
                            unlabeled=[[0.3, 0.0], [0.0, 0.2]],
                            anchors=[[0.0, 0.0], [0.0, 0.0]], margin=1.0)
    assert feature_regularizer(params, triplets) == 0.0


def test_triplet_hinge_rigid_motion_invariance(rng):
    pos = rng.normal(size=(5, 2))
    neg = rng.normal(size=(5, 2))
    anchor = rng.normal(size=(5, 2))
    base = triplet_hinge(pos, neg, anchor, 1.0)
    theta = 0.77
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    shift = np.array([3.0, -2.0])
    moved = triplet_hinge(pos @ rot.T + shift, neg @ rot.T + shift,
                          anchor @ rot.T + shift, 1.0)
    assert moved == pytest.approx(base, abs=1e-12)


def test_feature_regularizer_graph_matches_plain(rng):
    params = build_scorer(3, 6, seed=9)
    xa = rng.uniform(0, 1, size=(4, 3))
    xu = rng.uniform(0, 1, size=(4, 3))
    xq = rng.uniform(0, 1, size=(4, 3))
    plain = feature_regularizer(params, TripletBatch(xa, xu, xq, margin=1.0))
    graph = float(feature_regularizer_graph(ScorerGraph(params), xa, xu, xq, 1.0).value)
    assert graph == plain


def test_triplet_batch_validation():
    with pytest.raises(ContractViolationError):
        TripletBatch(anomalies=np.ones((2, 2)), unlabeled=np.ones((3, 2)),
                     anchors=np.ones((2, 2)))
    with pytest.raises(InvalidParameterError):
        TripletBatch(anomalies=np.ones((2, 2)), unlabeled=np.ones((2, 2)),
                     anchors=np.ones((2, 2)), margin=0.0)


# -- dynamic weighting ----------------------------------------------------------


def test_dynamic_weight_symmetry_and_worked_example():
    state = LossState()
    assert dynamic_weight(3.0, 3.0, state) == pytest.approx(0.5, abs=1e-15)
    w = dynamic_weight(2.0, 1.0, LossState(l_bar=1.0, l_prime_bar=1.0, temperature=2.0))
    expected = math.e / (math.e + math.exp(0.5))
    assert w == pytest.approx(expected, abs=1e-12)
    assert w == pytest.approx(0.62246, abs=5e-6)


def test_dynamic_weight_scale_identity():
    a = dynamic_weight(2.0, 1.0, LossState(l_bar=1.0, l_prime_bar=1.0, temperature=2.0))
    b = dynamic_weight(6.0, 3.0, LossState(l_bar=1.0, l_prime_bar=1.0, temperature=6.0))
    assert a == pytest.approx(b, abs=1e-12)


def test_dynamic_weight_monotone_in_scoring_loss():
    state = LossState(l_bar=0.7, l_prime_bar=1.3, temperature=2.0)
    values = [dynamic_weight(l, 1.0, state) for l in (0.1, 0.5, 1.0, 2.0, 5.0)]
    assert all(0.0 < v < 1.0 for v in values)
    assert all(a < b for a, b in zip(values, values[1:]))


def test_dynamic_weight_overflow_guard():
    state = LossState(l_bar=1e-6, l_prime_bar=1.0, temperature=1.0)
    w = dynamic_weight(5.0, 1.0, state)  # raw exponent would be 5e6
    assert w == 1.0  # saturates without overflow


def test_dynamic_weight_validation():
    with pytest.raises(InvalidParameterError):
        dynamic_weight(1.0, 1.0, LossState(l_bar=0.0))
    with pytest.raises(InvalidParameterError):
        dynamic_weight(1.0, 1.0, LossState(temperature=0.0))


def test_update_epoch_averages():
    state = LossState()
    assert state.l_bar == 1.0 and state.l_prime_bar == 1.0  # pre-first-epoch init
    updated = update_epoch_averages(state, [4.0, 4.0, 4.0], [1.0, 2.0, 3.0])
    assert updated.l_bar == 4.0
    assert updated.l_prime_bar == 2.0
    assert state.l_bar == 1.0  # original untouched
    with pytest.raises(ContractViolationError):
        update_epoch_averages(state, [], [1.0])


# -- ablation dispatch ----------------------------------------------------------


def test_ablation_plain_regression_value(rng):
    params = build_scorer(2, 4, seed=1)
    x = rng.uniform(0, 1, size=(6, 2))
    y = np.array([1.0, 1.0, 1.0, -1.0, -1.0, -1.0])
    expected = float(np.mean(smooth_l1(score_batch(params, x), y)))
    assert ablation_loss("plain_regression", params, raw_x=x, raw_y=y) == expected
    assert plain_regression_loss(params, x, y) == expected


def test_ablation_full_equals_scoring_loss(rng):
    params = build_scorer(2, 4, seed=1)
    x = rng.uniform(0, 1, size=(6, 2))
    y = np.array([1.0] * 3 + [-1.0] * 3)
    batch = augment_batch(x, y, 2, 0.5, 6, rng)
    assert ablation_loss("full", params, augmented=batch, source_x=x) == \
        scoring_loss(params, batch, x)
    # no_regularizer shares the scoring-side loss; dropping the feature
    # term is the trainer's job
    assert ablation_loss("no_regularizer", params, augmented=batch, source_x=x) == \
        scoring_loss(params, batch, x)


def test_ablation_discrete_maps_balanced_mix_to_negative(rng):
    params = tanh_line_scorer()
    batch = AugmentedBatch(np.array([[0.0]]), np.array([0.0]),
                           np.array([[0, 1]]), np.array([[0.5, 0.5]]))
    x = np.array([[0.0], [0.0]])
    # sign(0) -> -1: the loss targets -1, not +1
    expected = smooth_l1(0.0, -1.0) + smooth_l1(0.0, 0.0)
    assert ablation_loss("discrete_targets", params, augmented=batch, source_x=x) == \
        pytest.approx(expected, abs=1e-12)


def test_ablation_unknown_mode():
    params = identity_representation_scorer(2)
    with pytest.raises(InvalidParameterError):
        ablation_loss("bogus", params)
