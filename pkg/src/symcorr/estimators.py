"""scikit-learn style wrappers around the correlation, pruning and segmentation code."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .correlation import (
    AffineMap,
    ScProjector,
    SupportPack,
    contribution_index,
    multi_head_sc,
    sc_project,
)
from .exceptions import ContractError, ShapeError
from .pruning import PruneConfig, greedy_select, multilayer_terms
from .segmenter.metrics import miou
from .segmenter.model import ForwardConfig, forward_episode
from .segmenter.training import SGDConfig, train_toy
from .segmenter.types import Episode, SegmenterParams
from .validation import check_tokens


def _supports(X) -> list:
    """A single (n, d) array is one support; a list of arrays is a pool."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_tokens(X, "support")]
    items = [check_tokens(x, f"support {i}") for i, x in enumerate(X)]
    if not items:
        raise ContractError("need at least one support")
    return items


def _seed(random_state) -> np.random.Generator:
    return np.random.default_rng(check_random_state(random_state).randint(2**31 - 1))


class SymmetricCorrelation(TransformerMixin, BaseEstimator):
    """Symmetric attention of query tokens over a fitted support pool.

    ``fit`` draws the per-head projectors (``init="unit_bias"`` gives a random
    magnitude branch and a zero-weight / unit-bias direction branch,
    ``init="random"`` randomises both) and stores the supports.
    ``transform`` returns the query-by-support attention matrix.
    """

    def __init__(self, n_heads=1, scale_mode="sqrt_d", init="unit_bias", gain=1.0, random_state=None):
        self.n_heads = n_heads
        self.scale_mode = scale_mode
        self.init = init
        self.gain = gain
        self.random_state = random_state

    def fit(self, X, y=None):
        items = _supports(X)
        d = items[0].shape[1]
        if d % self.n_heads:
            raise ShapeError(f"feature dim {d} not divisible by n_heads={self.n_heads}")
        if self.init not in ("unit_bias", "random"):
            raise ContractError(f"init must be 'unit_bias' or 'random', got {self.init!r}")
        rng = _seed(self.random_state)
        dh = d // self.n_heads
        if self.init == "unit_bias":
            self.projectors_ = [ScProjector.from_query_map(AffineMap.random(dh, rng, self.gain))
                                for _ in range(self.n_heads)]
        else:
            self.projectors_ = [ScProjector.random(dh, rng, self.gain) for _ in range(self.n_heads)]
        self.pack_ = SupportPack.from_tokens(items)
        self.n_features_in_ = d
        return self

    def _check_query(self, X):
        check_is_fitted(self, "projectors_")
        X = check_tokens(X, "query")
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        return X

    def attention(self, X):
        X = self._check_query(X)
        return multi_head_sc(self.pack_, X, self.projectors_, self.scale_mode)

    def transform(self, X):
        return np.asarray(self.attention(X).values)

    def contribution(self, X) -> np.ndarray:
        """Contribution index of each fitted support for query tokens ``X``."""
        return np.asarray(contribution_index(self.attention(X)).per_support_delta)

    def project(self, X) -> np.ndarray:
        """Projected tokens, heads concatenated."""
        X = self._check_query(X)
        dh = X.shape[1] // self.n_heads
        return np.hstack([sc_project(p, X[:, h * dh:(h + 1) * dh]) for h, p in enumerate(self.projectors_)])


class SupportPruner(BaseEstimator):
    """Keep the ``n_keep`` supports whose projected mean token best matches the query.

    ``fit(pool, query)`` takes a pool (list of (n_i, d) arrays, or a list of
    per-support layer stacks when ``projectors`` has several layers) and the
    query tokens. Pools no larger than ``threshold`` are kept whole.
    """

    def __init__(self, n_keep=30, threshold=30, projectors=None, gain=1.0, random_state=None):
        self.n_keep = n_keep
        self.threshold = threshold
        self.projectors = projectors
        self.gain = gain
        self.random_state = random_state

    def fit(self, pool, query):
        stacked = isinstance(query, (list, tuple))
        query_layers = [check_tokens(q, "query") for q in (query if stacked else [query])]
        if stacked:
            pools = [[check_tokens(s[l], f"support {i}") for i, s in enumerate(pool)]
                     for l in range(len(query_layers))]
        else:
            pools = [_supports(pool)]
        n = len(pools[0])
        if n == 0:
            raise ContractError("the pool is empty")
        if self.projectors is None:
            rng = _seed(self.random_state)
            projectors = [[ScProjector.from_query_map(AffineMap.random(q.shape[1], rng, self.gain))]
                          for q in query_layers]
        else:
            projectors = [p if isinstance(p, (list, tuple)) else [p] for p in self.projectors]
        self.projectors_ = projectors
        self.scores_ = multilayer_terms(pools, query_layers, projectors)
        config = PruneConfig(True, self.threshold, self.n_keep)
        if config.active(n):
            result = greedy_select(self.scores_, min(self.n_keep, n))
            self.support_ = np.array(sorted(result.selected_ids), dtype=int)
            self.evaluations_ = result.evaluations
        else:
            self.support_ = np.arange(n)
            self.evaluations_ = 0
        self.n_supports_in_ = n
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "support_")
        if indices:
            return self.support_.copy()
        mask = np.zeros(self.n_supports_in_, dtype=bool)
        mask[self.support_] = True
        return mask

    def transform(self, pool) -> list:
        check_is_fitted(self, "support_")
        if len(pool) != self.n_supports_in_:
            raise ShapeError(f"pool has {len(pool)} supports, fitted with {self.n_supports_in_}")
        return [pool[i] for i in self.support_]

    def fit_transform(self, pool, query) -> list:
        return self.fit(pool, query).transform(pool)


class FewShotSegmenter(BaseEstimator):
    """Multi-layer symmetric-correlation segmenter trained with momentum SGD.

    ``X`` is a list of :class:`~symcorr.segmenter.types.Episode`; the query
    truth masks inside the episodes are the targets, so ``y`` is ignored.
    """

    def __init__(self, hidden=16, n_heads=1, learning_rate=1e-4, momentum=0.9, weight_decay=1e-4,
                 steps=200, refiner_scale=0.1, scale_mode="sqrt_d", prune_threshold=30,
                 prune_keep=30, random_state=None):
        self.hidden = hidden
        self.n_heads = n_heads
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.steps = steps
        self.refiner_scale = refiner_scale
        self.scale_mode = scale_mode
        self.prune_threshold = prune_threshold
        self.prune_keep = prune_keep
        self.random_state = random_state

    def _config(self) -> ForwardConfig:
        return ForwardConfig("symmetric", self.scale_mode, "tokens",
                             PruneConfig(True, self.prune_threshold, self.prune_keep))

    @staticmethod
    def _episodes(X) -> list:
        X = [X] if isinstance(X, Episode) else list(X)
        if not X:
            raise ContractError("need at least one episode")
        for i, e in enumerate(X):
            if not isinstance(e, Episode):
                raise ContractError(f"item {i} is {type(e).__name__}, expected Episode")
        return X

    def fit(self, X, y=None):
        episodes = self._episodes(X)
        params = SegmenterParams.unit_bias_init(episodes[0].dims, self.hidden, self.n_heads,
                                                _seed(self.random_state), refiner_scale=self.refiner_scale)
        hyper = SGDConfig(self.learning_rate, self.momentum, self.weight_decay, self.steps)
        result = train_toy(episodes, params, hyper, self._config())
        self.params_ = result.params
        self.loss_curve_ = list(result.loss_trace)
        self.n_layers_ = episodes[0].n_layers
        return self

    def _forward(self, X):
        check_is_fitted(self, "params_")
        return [forward_episode(e, self.params_, self._config()) for e in self._episodes(X)]

    def predict_proba(self, X) -> list:
        return [out.mask.probs for out in self._forward(X)]

    def predict(self, X) -> list:
        return [out.mask.binary for out in self._forward(X)]

    def score(self, X, y=None) -> float:
        """Class-averaged IoU of the predicted masks against the episodes' truth."""
        episodes = self._episodes(X)
        preds = self.predict(episodes)
        return miou(preds, [e.query_truth for e in episodes], [e.category for e in episodes])

