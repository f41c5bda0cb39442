import numpy as np
import pytest

from anomix.nn import DenseLayer
from anomix.scorer import ScorerParams


def identity_representation_scorer(d: int) -> ScorerParams:
    """Scorer whose representation is the identity for nonnegative inputs.

    The score head is all-zero, so scores are tanh(0) = 0 everywhere.
    """
    eye = np.eye(d)
    h2 = max(d // 2, 1)
    return ScorerParams(
        rep_hidden=DenseLayer(eye.copy(), np.zeros(d)),
        rep_out=DenseLayer(eye.copy(), np.zeros(d)),
        score_hidden=DenseLayer(np.zeros((h2, d)), np.zeros(h2)),
        score_out=DenseLayer(np.zeros((1, h2)), np.zeros(1)),
        d_in=d, rep_dim=d, h1=d, h2=h2,
    )


def tanh_line_scorer(gain: float = 1.0, shift: float = 10.0) -> ScorerParams:
    """1-d scorer computing tanh(gain * x) for inputs above -shift.

    The shift keeps every hidden pre-activation positive so the LeakyReLU
    stages are exact identities on the range of interest.
    """
    return ScorerParams(
        rep_hidden=DenseLayer(np.array([[1.0]]), np.array([shift])),
        rep_out=DenseLayer(np.array([[1.0]]), np.array([0.0])),
        score_hidden=DenseLayer(np.array([[1.0]]), np.array([0.0])),
        score_out=DenseLayer(np.array([[gain]]), np.array([-gain * shift])),
        d_in=1, rep_dim=1, h1=1, h2=1,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
