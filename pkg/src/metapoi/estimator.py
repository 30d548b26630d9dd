"""Scikit-learn style estimator wrapping the full pipeline.

``NextPoiRecommender.fit`` consumes dense-id check-in records, builds the
heterogeneous hypergraph, and meta-trains the model; ``adapt`` performs
the per-user cold-start update and ``predict``/``predict_ranking`` rank
candidate POIs for trajectory prefixes.  Hyperparameters follow sklearn
conventions (stored verbatim in ``__init__``, validated in ``fit``), so
the estimator composes with ``get_params``/``set_params``/``clone``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset_io import Dataset
from .evaluate import ranking_from_scores
from .hypergraph import NodeSpace, build_operators
from .metalearn import MetaConfig, cold_start_eval_adapt, train
from .model import ModelConfig, ModelParams, init_params, predict_scores, task_loss
from .records import CheckinRecord, DataError, Vocab, validate_records
from .sessions import Instance, MetaTask, SplitStats, build_meta_tasks, split_sessions


class NextPoiRecommender(BaseEstimator):
    """Next-POI recommender: hypergraph propagation + adaptive meta-learning."""

    def __init__(
        self,
        dim: int = 64,
        layers: int = 1,
        delta_km: float = 1.0,
        support_fraction: float = 0.8,
        alpha0: float = 0.1,
        beta_ent: float = 1.0,
        beta_outer: float = 1e-3,
        inner_steps: int = 1,
        meta_batch: int = 8,
        epochs: int = 30,
        clip_norm: float = 5.0,
        residual: bool = True,
        leaky_slope: float = 0.01,
        local_time: bool = False,
        drop_relation: str | None = None,
        fixed_rate: bool = False,
        threads: int = 1,
        seed: int = 7,
    ):
        self.dim = dim
        self.layers = layers
        self.delta_km = delta_km
        self.support_fraction = support_fraction
        self.alpha0 = alpha0
        self.beta_ent = beta_ent
        self.beta_outer = beta_outer
        self.inner_steps = inner_steps
        self.meta_batch = meta_batch
        self.epochs = epochs
        self.clip_norm = clip_norm
        self.residual = residual
        self.leaky_slope = leaky_slope
        self.local_time = local_time
        self.drop_relation = drop_relation
        self.fixed_rate = fixed_rate
        self.threads = threads
        self.seed = seed

    def _meta_config(self) -> MetaConfig:
        return MetaConfig(
            alpha0=self.alpha0,
            beta_ent=self.beta_ent,
            beta_outer=self.beta_outer,
            inner_steps=self.inner_steps,
            meta_batch=self.meta_batch,
            epochs=self.epochs,
            seed=self.seed,
            clip_norm=self.clip_norm,
            fixed_rate=self.fixed_rate,
            threads=self.threads,
        )

    def fit(self, X, y=None, *, vocab: Vocab | None = None, graph_records=None):
        """Meta-train on check-in records.

        `X` may be a Dataset or a list of CheckinRecord (then `vocab` is
        required).  `graph_records` optionally restricts which check-ins
        shape the hypergraph; defaults to all of `X`.
        """
        if isinstance(X, Dataset):
            records, vocab = X.records, X.vocab
        else:
            records = list(X)
            if vocab is None:
                raise DataError("fit() needs a vocab when given bare records")
        validate_records(records, vocab)
        graph_records = list(graph_records) if graph_records is not None else records
        validate_records(graph_records, vocab)

        stats = SplitStats()
        trajectories = split_sessions(records, local_time=self.local_time, stats=stats)
        tasks = build_meta_tasks(trajectories, self.support_fraction, stats=stats)
        if not tasks:
            raise DataError("no usable meta-task; every user was too short")

        nodes = NodeSpace.from_vocab(vocab)
        ops = build_operators(graph_records, vocab, self.delta_km, nodes, drop=self.drop_relation)
        params = init_params(
            nodes,
            ModelConfig(
                dim=self.dim,
                layers=self.layers,
                residual=self.residual,
                leaky_slope=self.leaky_slope,
                seed=self.seed,
            ),
        )
        meta_cfg = self._meta_config()
        loss_fn = lambda p, inst: task_loss(p, ops, inst)
        if meta_cfg.epochs > 0:
            params, log = train(params, tasks, meta_cfg, loss_fn)
        else:
            log = []

        self.vocab_ = vocab
        self.node_space_ = nodes
        self.operators_ = ops
        self.params_ = params
        self.tasks_ = tasks
        self.split_stats_ = stats
        self.train_log_ = log
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit() before using the recommender")

    def adapt(self, task: MetaTask) -> tuple[ModelParams, dict]:
        """Cold-start adaptation on a held-out user's support set."""
        self._check_fitted()
        ops = self.operators_
        return cold_start_eval_adapt(
            self.params_, task, self._meta_config(), lambda p, inst: task_loss(p, ops, inst)
        )

    def predict_scores(self, prefixes, params: ModelParams | None = None) -> np.ndarray:
        """Score matrix (n_prefixes x n_pois) for trajectory prefixes."""
        self._check_fitted()
        instances = [_as_instance(p) for p in prefixes]
        return predict_scores(params or self.params_, self.operators_, instances)

    def predict_ranking(self, prefix, k: int = 10, params: ModelParams | None = None) -> np.ndarray:
        """Top-k POI ids for one prefix, best first."""
        scores = self.predict_scores([prefix], params=params)[0]
        return ranking_from_scores(scores, k)

    def predict(self, prefixes, params: ModelParams | None = None) -> np.ndarray:
        """Top-1 POI id per prefix."""
        scores = self.predict_scores(prefixes, params=params)
        return np.array([int(ranking_from_scores(s, 1)[0]) for s in scores])


def _as_instance(prefix) -> Instance:
    if isinstance(prefix, Instance):
        return prefix
    checkins = tuple(prefix)
    if not checkins:
        raise DataError("cannot rank an empty prefix")
    for r in checkins:
        if not isinstance(r, CheckinRecord):
            raise DataError(f"prefixes must contain CheckinRecord, got {type(r).__name__}")
    return Instance(prefix=checkins, target=checkins[-1])
