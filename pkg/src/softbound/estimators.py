"""scikit-learn style wrappers so the pipeline pieces compose with sklearn tooling.

All of these are stateless: ``fit`` only validates hyper-parameters and
freezes them into a config object. Samples are tuples because each video
carries several matrices of different shapes.
"""

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fusion import FusionConfig, enhance
from .losses import ToyHeadParams, boundary_loss, toy_boundary_head
from .perturbation import NoiseSpec, perturb_dataset
from .supervision import SupervisionConfig, generate_supervision


class QueryGuidedFusion(TransformerMixin, BaseEstimator):
    """Enhance frame features with start/query/end token features.

    Parameters
    ----------
    a : float
        Weight of the global (concatenated-token) branch.
    b : float
        Weight of the summed local branches.
    attn_scale : float or None
        Attention logit scale; None means ``1/sqrt(D)``.
    projections : Projections or None
        Optional fixed query/key/value projections.
    """

    def __init__(self, a=1.0, b=1.0, attn_scale=None, projections=None):
        self.a = a
        self.b = b
        self.attn_scale = attn_scale
        self.projections = projections

    def fit(self, X=None, y=None):
        self.config_ = FusionConfig(self.a, self.b, self.attn_scale)
        return self

    def transform(self, X):
        """X: iterable of ``(F_v, QueryFeatures)``; returns a list of ``T x D`` arrays."""
        check_is_fitted(self, "config_")
        return [enhance(F_v, q.start, q.original, q.end, self.config_, self.projections) for F_v, q in X]


class BoundaryProbabilityModel(TransformerMixin, BaseEstimator):
    """Turn annotated records into soft per-frame supervision targets."""

    def __init__(self, tau=0.8, strategy="paper", gauss_sigma=1.0):
        self.tau = tau
        self.strategy = strategy
        self.gauss_sigma = gauss_sigma

    def fit(self, X=None, y=None):
        self.config_ = SupervisionConfig(self.tau, self.strategy, self.gauss_sigma)
        return self

    def transform(self, X):
        """X: iterable of ``(VideoRecord, F_v, QueryFeatures)``."""
        check_is_fitted(self, "config_")
        return [generate_supervision(rec, F_v, q, self.config_) for rec, F_v, q in X]


class AnnotationPerturber(TransformerMixin, BaseEstimator):
    def __init__(self, kind="none", sigma=0.1, lo=-0.5, hi=0.5, seed=0):
        self.kind = kind
        self.sigma = sigma
        self.lo = lo
        self.hi = hi
        self.seed = seed

    def fit(self, X=None, y=None):
        self.spec_ = NoiseSpec(self.kind, self.sigma, self.lo, self.hi, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        return perturb_dataset(X, self.spec_)


class ToyBoundaryHead(BaseEstimator):
    """Fixed logistic head over frame/query cosine similarity."""

    def __init__(self, gamma=1.0, beta=0.0):
        self.gamma = gamma
        self.beta = beta

    def fit(self, X=None, y=None):
        self.params_ = ToyHeadParams(float(self.gamma), float(self.beta))
        return self

    def predict_proba(self, X):
        """X: iterable of ``(F_v_prime, F_q_prime)``; one probability vector per sample."""
        check_is_fitted(self, "params_")
        return [toy_boundary_head(F_v, F_q, self.params_) for F_v, F_q in X]

    def score(self, X, y):
        """Negative mean boundary loss (higher is better, sklearn convention)."""
        preds = self.predict_proba(X)
        return -sum(boundary_loss(p, q) for p, q in zip(y, preds)) / max(len(preds), 1)
