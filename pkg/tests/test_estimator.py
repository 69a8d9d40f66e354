import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import GridSearchCV
from sklearn.pipeline import Pipeline

from airtnn import dataset as ds
from airtnn.estimator import AirTNNClassifier
from airtnn.seeding import rng_from
from airtnn.topology import lift_to_complex, sbm_generate


@pytest.fixture(scope="module")
def toy():
    cc = lift_to_complex(sbm_generate(12, 3, 0.9, 0.1, rng_from(0)))
    rng = rng_from(1)
    n1 = cc.n_edges
    x = rng.standard_normal((80, n1)) * 0.1
    y = rng.integers(0, 2, 80)
    x[y == 0, 0] += 3.0
    x[y == 1, 1] += 3.0
    return cc, x, y


def fast_clf(cc, **kw):
    defaults = dict(cell_complex=cc, arch="tnn", ideal_channel=True, hidden=8,
                    readout_hidden=8, epochs=8, lr=0.001, random_state=0)
    defaults.update(kw)
    return AirTNNClassifier(**defaults)


class TestSklearnContract:
    def test_fit_returns_self_and_sets_attributes(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc)
        assert clf.fit(x, y) is clf
        assert hasattr(clf, "params_")
        assert np.array_equal(clf.classes_, [0, 1])
        assert clf.n_features_in_ == cc.n_edges

    def test_predict_before_fit_raises(self, toy):
        cc, x, _ = toy
        with pytest.raises(NotFittedError):
            fast_clf(cc).predict(x)

    def test_get_set_params_round_trip(self, toy):
        cc, _, _ = toy
        clf = fast_clf(cc, taps=3, delta=1.5)
        params = clf.get_params()
        assert params["taps"] == 3
        assert params["delta"] == 1.5
        clf.set_params(taps=1)
        assert clf.taps == 1

    def test_clone_and_refit_is_deterministic(self, toy):
        cc, x, y = toy
        a = fast_clf(cc).fit(x, y)
        b = clone(a).fit(x, y)
        assert np.array_equal(a.predict(x), b.predict(x))
        for la, lb in zip(a.params_.leaves(), b.params_.leaves()):
            assert np.array_equal(la, lb)

    def test_predict_proba_rows_sum_to_one(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc).fit(x, y)
        proba = clf.predict_proba(x[:10])
        assert proba.shape == (10, 2)
        assert np.allclose(proba.sum(axis=1), 1.0)

    def test_labels_do_not_need_to_be_contiguous(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc).fit(x, np.where(y == 0, 5, 9))
        preds = clf.predict(x[:20])
        assert set(np.unique(preds)) <= {5, 9}

    def test_wrong_width_rejected(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc)
        with pytest.raises(ValueError):
            clf.fit(x[:, :-1], y)

    def test_missing_complex_rejected(self, toy):
        _, x, y = toy
        with pytest.raises(ValueError):
            AirTNNClassifier().fit(x, y)

    def test_pipeline_and_grid_search_compose(self, toy):
        cc, x, y = toy
        pipe = Pipeline([("clf", fast_clf(cc, epochs=3))])
        grid = GridSearchCV(pipe, {"clf__lr": [0.001, 0.003]}, cv=2, n_jobs=1)
        grid.fit(x, y)
        assert set(grid.best_params_) == {"clf__lr"}


class TestChannelScoring:
    def test_separable_task_high_score(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc, epochs=20).fit(x, y)
        assert clf.score(x, y) >= 0.9

    def test_score_channel_returns_spread(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc, arch="airtnn", ideal_channel=False, delta=1.0,
                       snr_db=10.0, epochs=6, eval_realizations=4).fit(x, y)
        res = clf.score_channel(x, y)
        assert res.per_realization.shape == (4,)
        assert 0.0 <= res.accuracy <= 1.0

    def test_score_channel_rejects_unknown_labels(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc).fit(x, y)
        with pytest.raises(ValueError):
            clf.score_channel(x, np.full_like(y, 7))

    def test_air_predictions_are_deterministic(self, toy):
        cc, x, y = toy
        clf = fast_clf(cc, arch="airgnn", ideal_channel=False, delta=1.0,
                       snr_db=10.0, epochs=4).fit(x, y)
        assert np.array_equal(clf.predict(x[:15]), clf.predict(x[:15]))
