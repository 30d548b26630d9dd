"""The sklearn-facing wrapper: params plumbing, fit/predict surface, and
cold-start adaptation."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from metapoi import NextPoiRecommender
from metapoi.dataset_io import Dataset
from metapoi.records import DataError
from metapoi.sessions import build_meta_tasks, split_sessions
from metapoi.synthetic import SynthConfig, generate_synthetic


@pytest.fixture(scope="module")
def fitted():
    vocab, records = generate_synthetic(
        SynthConfig(
            n_users=16, n_pois=24, n_categories=6, routine_category_count=2,
            explorer_category_count=5, days_per_user=4, checkins_per_day=4, seed=6,
        )
    )
    ds = Dataset(vocab=vocab, records=records)
    est = NextPoiRecommender(dim=8, epochs=2, beta_outer=0.05, seed=1).fit(ds)
    return est, ds


class TestSklearnSurface:
    def test_get_params_round_trip(self):
        est = NextPoiRecommender(dim=12, epochs=4, alpha0=0.2)
        params = est.get_params()
        assert params["dim"] == 12 and params["alpha0"] == 0.2
        rebuilt = NextPoiRecommender(**params)
        assert rebuilt.get_params() == params

    def test_set_params_chains(self):
        est = NextPoiRecommender().set_params(dim=6, epochs=1)
        assert est.dim == 6 and est.epochs == 1

    def test_clone_preserves_hyperparameters(self):
        est = NextPoiRecommender(dim=10, delta_km=2.5)
        copy = clone(est)
        assert copy.dim == 10 and copy.delta_km == 2.5

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            NextPoiRecommender().predict_scores([])


class TestFitPredict:
    def test_fit_sets_state(self, fitted):
        est, ds = fitted
        assert est.params_ is not None
        assert set(est.operators_) == {"temporal", "spatial", "preference"}
        assert len(est.train_log_) == 2

    def test_predict_scores_shape(self, fitted):
        est, ds = fitted
        prefixes = [ds.records[:2], ds.records[2:4]]
        scores = est.predict_scores(prefixes)
        assert scores.shape == (2, ds.vocab.poi_count)

    def test_predict_ranking_is_top_k(self, fitted):
        est, ds = fitted
        ranking = est.predict_ranking(ds.records[:3], k=5)
        assert len(ranking) == 5
        scores = est.predict_scores([ds.records[:3]])[0]
        assert scores[ranking[0]] == scores.max()

    def test_predict_top1_consistent_with_ranking(self, fitted):
        est, ds = fitted
        prefix = ds.records[:2]
        top1 = est.predict([prefix])[0]
        assert top1 == est.predict_ranking(prefix, k=1)[0]

    def test_empty_prefix_rejected(self, fitted):
        est, _ = fitted
        with pytest.raises(DataError):
            est.predict_scores([[]])

    def test_bare_records_need_vocab(self, fitted):
        _, ds = fitted
        with pytest.raises(DataError):
            NextPoiRecommender(epochs=0).fit(ds.records)

    def test_fit_epochs_zero_keeps_seeded_init(self, fitted):
        _, ds = fitted
        a = NextPoiRecommender(dim=8, epochs=0, seed=3).fit(ds)
        b = NextPoiRecommender(dim=8, epochs=0, seed=3).fit(ds)
        assert a.params_.allclose(b.params_)


class TestAdaptation:
    def test_adapt_returns_new_params(self, fitted):
        est, ds = fitted
        tasks = build_meta_tasks(split_sessions(ds.records), 0.8)
        theta, info = est.adapt(tasks[0])
        assert info["zero_shot"] is False
        assert theta is not est.params_
        # master stays fixed
        before = est.params_["w_att"].value.copy()
        np.testing.assert_array_equal(est.params_["w_att"].value, before)

    def test_drop_relation_hyperparameter(self, fitted):
        _, ds = fitted
        est = NextPoiRecommender(dim=8, epochs=0, drop_relation="spatial", seed=1).fit(ds)
        assert est.operators_["spatial"] is None
