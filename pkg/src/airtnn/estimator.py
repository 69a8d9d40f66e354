"""scikit-learn estimator facade over the core model.

AirTNNClassifier wraps dataset-shaped edge signals (one row per sample, one
column per edge) in the usual fit/predict API so the model composes with
pipelines, grid search and friends. The wrapped architecture family covers all
four variants via `arch`; channel and optimizer settings are constructor
hyperparameters.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import nn, seeding
from .channel import ChannelConfig, IDEAL_CHANNEL
from .seeding import rng_from
from .topology import CellComplex2


class AirTNNClassifier(ClassifierMixin, BaseEstimator):
    """Edge-signal classifier trained over a (possibly noisy) wireless channel.

    Parameters
    ----------
    cell_complex : CellComplex2
        The fixed complex whose edges index the input columns.
    arch : str, default="airtnn"
        One of "airtnn", "airgnn", "tnn", "gnn". The *gnn variants use only
        the lower neighborhood; the air variants sample fading and noise at
        every training step.
    n_layers, taps, hidden, readout_hidden : int
        Architecture sizes; `taps` is the number of communication rounds per
        branch (P), so each branch carries taps + 1 filter weights.
    nonlinearity : str, default="relu"
    pooling : str, default="flatten"
        Readout input: "flatten" (per-edge features), "mean" or "max".
    delta : float, default=1.0
        Rayleigh scale of the fading gains.
    snr_db : float, default=20.0
        Per-round SNR; math.inf disables noise.
    ideal_channel : bool, default=False
        Force ideal communication regardless of delta/snr_db.
    snr_reference : str, default="empirical"
        Reference power convention for the noise variance.
    lr, beta1, beta2, eps, batch_size, epochs
        ADAM optimizer settings.
    eval_realizations : int, default=20
        Channel draws averaged by score_channel().
    random_state : int, default=0
        Master seed; fits are bit-reproducible.

    Attributes
    ----------
    classes_ : ndarray
        Sorted class labels seen in fit.
    params_ : ModelParams
        Trained weights.
    loss_history_ : list of (epoch, split, loss, accuracy)
    """

    def __init__(
        self,
        cell_complex: CellComplex2 | None = None,
        arch: str = "airtnn",
        n_layers: int = 2,
        taps: int = 2,
        hidden: int = 32,
        readout_hidden: int = 32,
        nonlinearity: str = "relu",
        pooling: str = "flatten",
        delta: float = 1.0,
        snr_db: float = 20.0,
        ideal_channel: bool = False,
        snr_reference: str = "empirical",
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        batch_size: int = 32,
        epochs: int = 30,
        eval_realizations: int = 20,
        random_state: int = 0,
    ):
        self.cell_complex = cell_complex
        self.arch = arch
        self.n_layers = n_layers
        self.taps = taps
        self.hidden = hidden
        self.readout_hidden = readout_hidden
        self.nonlinearity = nonlinearity
        self.pooling = pooling
        self.delta = delta
        self.snr_db = snr_db
        self.ideal_channel = ideal_channel
        self.snr_reference = snr_reference
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.eval_realizations = eval_realizations
        self.random_state = random_state

    def _channel(self) -> ChannelConfig:
        if self.ideal_channel:
            return IDEAL_CHANNEL
        return ChannelConfig(fading_scale=self.delta, snr_db=self.snr_db,
                             snr_reference=self.snr_reference)

    def _spec(self, n_classes: int) -> nn.ModelSpec:
        return nn.ModelSpec(
            arch=self.arch, n_layers=self.n_layers, taps=self.taps,
            in_features=1, hidden=self.hidden, readout_hidden=self.readout_hidden,
            n_classes=n_classes, nonlinearity=self.nonlinearity, pooling=self.pooling,
        )

    def _check_signals(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        n1 = self.ctx_.n_cells
        if X.shape[1] != n1:
            raise ValueError(f"X has {X.shape[1]} columns, complex has {n1} edges")
        return X

    def fit(self, X, y):
        """Train on edge signals X (n_samples, n_edges) and labels y."""
        if self.cell_complex is None:
            raise ValueError("cell_complex is required to fit")
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes")
        self.ctx_ = nn.ShiftContext.from_complex(self.cell_complex)
        X = self._check_signals(X)
        self.n_features_in_ = X.shape[1]

        spec = self._spec(self.classes_.shape[0])
        cfg = nn.TrainConfig(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            batch_size=self.batch_size, epochs=self.epochs,
            channel=self._channel(), seed=self.random_state,
        )
        result = nn.train(spec, self.ctx_, X, y_idx, cfg)
        self.spec_ = spec
        self.params_ = result.params
        self.loss_history_ = result.history
        return self

    def decision_function(self, X):
        """Class scores under the estimator's channel (one seeded draw)."""
        check_is_fitted(self, "params_")
        X = self._check_signals(X)
        cfg = self._channel()
        rng = None
        if not cfg.ideal:
            rng = rng_from(self.random_state, seeding.EVAL, 0)
        return nn.model_forward(self.params_, self.spec_, self.ctx_,
                                nn.prepare_inputs(X, self.ctx_.n_cells), cfg, rng)

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=-1)]

    def score_channel(self, X, y, n_realizations: int | None = None,
                      channel: ChannelConfig | None = None) -> nn.EvalResult:
        """Monte-Carlo accuracy over independent channel draws.

        Defaults to the estimator's own channel and eval_realizations; pass a
        different config to test e.g. an ideally trained model under fading.
        """
        check_is_fitted(self, "params_")
        X = self._check_signals(X)
        y = np.asarray(y)
        if not np.all(np.isin(y, self.classes_)):
            raise ValueError("y contains labels not seen in fit")
        y_idx = np.searchsorted(self.classes_, y)
        cfg = channel if channel is not None else self._channel()
        n = n_realizations if n_realizations is not None else self.eval_realizations
        return nn.evaluate(self.spec_, self.ctx_, self.params_, X, y_idx, cfg,
                           n_realizations=n, seed=self.random_state)
