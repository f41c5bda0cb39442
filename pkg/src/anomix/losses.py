"""Training objectives and their balancing.

Three pieces: a regression loss pushing mixed-sample scores onto their
graded targets (with a consistency term tying each mixed score to the
weighted sum of its sources' scores), a triplet hinge on the intermediate
representation that repels labeled anomalies from unlabeled anchors, and
a softmax weight over epoch-normalized losses that balances the two. The
weight is held constant during gradient computation. Every loss reduces
over its batch by the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .errors import ContractViolationError, InvalidParameterError
from .interpolation import AugmentedBatch
from .nn import Var
from .scorer import ScorerGraph, ScorerParams, represent_batch, score_batch

ABLATION_MODES = (
    "full",
    "discrete_targets",
    "plain_regression",
    "no_consistency",
    "no_regularizer",
)


@dataclass
class LossState:
    """Running per-epoch loss averages and the current balancing weight.

    Both averages start at 1 and are replaced after every epoch by that
    epoch's per-batch means; `w` is refreshed every batch.
    """

    l_bar: float = 1.0
    l_prime_bar: float = 1.0
    temperature: float = 2.0
    w: float = 0.5


@dataclass
class TripletBatch:
    """Row-aligned (anomaly, unlabeled, anchor) triplets."""

    anomalies: np.ndarray
    unlabeled: np.ndarray
    anchors: np.ndarray
    margin: float = 1.0

    def __post_init__(self):
        self.anomalies = np.asarray(self.anomalies, dtype=np.float64)
        self.unlabeled = np.asarray(self.unlabeled, dtype=np.float64)
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        shape = self.anomalies.shape
        if len(shape) != 2 or shape[0] < 1:
            raise ContractViolationError("triplet blocks must be non-empty (b, d) matrices")
        if self.unlabeled.shape != shape or self.anchors.shape != shape:
            raise ContractViolationError("triplet blocks must share one shape")
        if not self.margin > 0:
            raise InvalidParameterError("margin must be positive")


def smooth_l1(pred, target, beta: float = 1.0):
    """0.5 d^2 / beta for |d| < beta, |d| - beta/2 beyond; d = pred - target."""
    if not beta > 0:
        raise InvalidParameterError("beta must be positive")
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    out = np.where(np.abs(d) < beta, 0.5 * d * d / beta, np.abs(d) - 0.5 * beta)
    return float(out) if out.ndim == 0 else out


def _check_augmented(batch: AugmentedBatch, n_sources: int) -> None:
    if len(batch) < 1:
        raise ContractViolationError("augmented batch is empty")
    if batch.sources.min() < 0 or batch.sources.max() >= n_sources:
        raise ContractViolationError("augmented sample references a row outside the source batch")


def _interpolated(scores: np.ndarray, batch: AugmentedBatch) -> np.ndarray:
    return (scores[batch.sources] * batch.lambdas).sum(axis=1)


def scoring_loss(params: ScorerParams, augmented: AugmentedBatch, source_x,
                 beta: float = 1.0, *, discrete_targets: bool = False,
                 consistency: bool = True) -> float:
    """Mean regression loss of mixed-sample scores against their targets.

    With `consistency`, each mixed score is additionally pulled toward
    the weighted sum of its source rows' scores; both passes use the same
    live parameters. `discrete_targets` snaps targets to sign(y), mapping
    an exactly balanced mix (y = 0) to -1.
    """
    source_x = np.asarray(source_x, dtype=np.float64)
    _check_augmented(augmented, len(source_x))
    s_mixed = score_batch(params, augmented.x)
    targets = np.where(augmented.y > 0, 1.0, -1.0) if discrete_targets else augmented.y
    per_sample = smooth_l1(s_mixed, targets, beta)
    if consistency:
        s_sources = score_batch(params, source_x)
        per_sample = per_sample + smooth_l1(s_mixed, _interpolated(s_sources, augmented), beta)
    return float(np.mean(per_sample))


def plain_regression_loss(params: ScorerParams, x, y, beta: float = 1.0) -> float:
    """Regression of raw-batch scores straight onto the +/-1 labels."""
    scores = score_batch(params, x)
    return float(np.mean(smooth_l1(scores, np.asarray(y, dtype=np.float64), beta)))


def triplet_hinge(rep_anomaly, rep_unlabeled, rep_anchor, margin: float) -> float:
    """Mean of max(d(unlabeled, anchor) - d(anomaly, anchor) + margin, 0).

    Pure geometry on representation rows; invariant under any rigid
    motion applied jointly to all three blocks.
    """
    rep_anomaly = np.asarray(rep_anomaly, dtype=np.float64)
    rep_unlabeled = np.asarray(rep_unlabeled, dtype=np.float64)
    rep_anchor = np.asarray(rep_anchor, dtype=np.float64)
    d_neg = np.linalg.norm(rep_unlabeled - rep_anchor, axis=1)
    d_pos = np.linalg.norm(rep_anomaly - rep_anchor, axis=1)
    return float(np.mean(np.maximum(d_neg - d_pos + margin, 0.0)))


def feature_regularizer(params: ScorerParams, triplets: TripletBatch) -> float:
    """Triplet hinge evaluated on the representations of raw inputs.

    Only the representation stage is involved; the scoring head never
    sees this term.
    """
    return triplet_hinge(
        represent_batch(params, triplets.anomalies),
        represent_batch(params, triplets.unlabeled),
        represent_batch(params, triplets.anchors),
        triplets.margin,
    )


def dynamic_weight(loss_scoring: float, loss_feature: float, state: LossState) -> float:
    """Softmax weight for the scoring loss given last-epoch averages.

    w = exp(L / (T Lbar)) / (exp(L / (T Lbar)) + exp(L' / (T L'bar))),
    guarded against overflow by subtracting the larger exponent. Callers
    treat w as a constant when computing gradients.
    """
    if not (state.l_bar > 0.0 and state.l_prime_bar > 0.0):
        raise InvalidParameterError("epoch loss averages must be positive")
    if not state.temperature > 0.0:
        raise InvalidParameterError("temperature must be positive")
    a = loss_scoring / (state.temperature * state.l_bar)
    b = loss_feature / (state.temperature * state.l_prime_bar)
    top = max(a, b)
    ea = math.exp(a - top)
    eb = math.exp(b - top)
    return ea / (ea + eb)


def update_epoch_averages(state: LossState, scoring_losses, feature_losses) -> LossState:
    """New state with both averages replaced by this epoch's means."""
    if len(scoring_losses) == 0 or len(feature_losses) == 0:
        raise ContractViolationError("epoch loss lists must be non-empty")
    return replace(
        state,
        l_bar=float(np.mean(scoring_losses)),
        l_prime_bar=float(np.mean(feature_losses)),
    )


def ablation_loss(mode: str, params: ScorerParams, *, augmented: AugmentedBatch | None = None,
                  source_x=None, raw_x=None, raw_y=None, beta: float = 1.0) -> float:
    """Scoring-side loss under one of the training modes.

    full: graded targets plus consistency; discrete_targets: targets
    snapped to sign(y); no_consistency: graded targets only;
    plain_regression: raw batch against +/-1, no mixing; no_regularizer:
    same loss as full (the representation term is dropped by the trainer,
    not here).
    """
    if mode not in ABLATION_MODES:
        raise InvalidParameterError(f"unknown mode {mode!r}; expected one of {ABLATION_MODES}")
    if mode == "plain_regression":
        if raw_x is None or raw_y is None:
            raise ContractViolationError("plain_regression needs the raw batch and labels")
        return plain_regression_loss(params, raw_x, raw_y, beta)
    if augmented is None or source_x is None:
        raise ContractViolationError(f"{mode} needs an augmented batch and its source rows")
    if mode == "discrete_targets":
        return scoring_loss(params, augmented, source_x, beta, discrete_targets=True)
    if mode == "no_consistency":
        return scoring_loss(params, augmented, source_x, beta, consistency=False)
    return scoring_loss(params, augmented, source_x, beta)


# ---------------------------------------------------------------------------
# Tape-recorded versions used by the training loop
# ---------------------------------------------------------------------------


def scoring_loss_graph(graph: ScorerGraph, augmented: AugmentedBatch, source_x,
                       beta: float = 1.0, *, discrete_targets: bool = False,
                       consistency: bool = True) -> Var:
    source_x = np.asarray(source_x, dtype=np.float64)
    _check_augmented(augmented, len(source_x))
    s_mixed = graph.score(augmented.x)
    targets = np.where(augmented.y > 0, 1.0, -1.0) if discrete_targets else augmented.y
    per_sample = nn.v_smooth_l1(s_mixed - targets, beta)
    if consistency:
        s_sources = graph.score(source_x)
        interp = nn.v_weighted_gather(s_sources, augmented.sources, augmented.lambdas)
        per_sample = per_sample + nn.v_smooth_l1(s_mixed - interp, beta)
    return nn.v_mean(per_sample)


def plain_regression_graph(graph: ScorerGraph, x, y, beta: float = 1.0) -> Var:
    scores = graph.score(x)
    return nn.v_mean(nn.v_smooth_l1(scores - np.asarray(y, dtype=np.float64), beta))


def feature_regularizer_graph(graph: ScorerGraph, x_anomaly, x_unlabeled, x_anchor,
                              margin: float) -> Var:
    z_anomaly = graph.represent(x_anomaly)
    z_unlabeled = graph.represent(x_unlabeled)
    z_anchor = graph.represent(x_anchor)
    d_neg = nn.v_row_distance(z_unlabeled, z_anchor)
    d_pos = nn.v_row_distance(z_anomaly, z_anchor)
    return nn.v_mean(nn.v_hinge(d_neg - d_pos + margin))
