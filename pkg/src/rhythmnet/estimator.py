"""Scikit-learn style estimator facade over the functional training API.

`RhythmNetClassifier` takes lists of `EcgRecord` (labels live in the record
annotations), trains with a patient-disjoint validation split, and predicts
one rhythm label per output position. Hyperparameters follow sklearn
conventions (stored verbatim, fitted state on trailing-underscore
attributes), so `get_params`, `set_params`, and `clone` compose with the
wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import CLASS_NAMES, EcgRecord, annotations_to_grid
from .errors import InvalidInputError
from .metrics import sequence_scores
from .network import (NetworkConfig, build, predict_proba_record,
                      predict_record)
from .rng import derive
from .training import TrainConfig, fit, split_by_patient


def validate_records(X) -> list[EcgRecord]:
    """Input validation helper: X must be a non-empty list of EcgRecord."""
    if not isinstance(X, (list, tuple)) or not X:
        raise InvalidInputError("X must be a non-empty list of EcgRecord")
    for i, rec in enumerate(X):
        if not isinstance(rec, EcgRecord):
            raise InvalidInputError(
                f"X[{i}] is {type(rec).__name__}, expected EcgRecord")
        rec.validate()
    return list(X)


class RhythmNetClassifier(BaseEstimator):
    """Residual convolutional network for ECG rhythm sequence labeling."""

    def __init__(self, residual_blocks=16, convs_per_block=2, filter_len=16,
                 base_filters=64, widen_every=4, subsample_every=2,
                 dropout_rate=0.2, batch_size=32, max_epochs=50,
                 plateau_patience=3, lr=0.001, lr_factor=10.0, min_lr=1e-6,
                 val_fraction=0.1, seed=0, checkpoint_dir=None):
        self.residual_blocks = residual_blocks
        self.convs_per_block = convs_per_block
        self.filter_len = filter_len
        self.base_filters = base_filters
        self.widen_every = widen_every
        self.subsample_every = subsample_every
        self.dropout_rate = dropout_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.plateau_patience = plateau_patience
        self.lr = lr
        self.lr_factor = lr_factor
        self.min_lr = min_lr
        self.val_fraction = val_fraction
        self.seed = seed
        self.checkpoint_dir = checkpoint_dir

    def _network_config(self) -> NetworkConfig:
        return NetworkConfig(
            residual_blocks=self.residual_blocks,
            convs_per_block=self.convs_per_block,
            filter_len=self.filter_len,
            base_filters=self.base_filters,
            widen_every=self.widen_every,
            subsample_every=self.subsample_every,
            dropout_rate=self.dropout_rate,
        )

    def fit(self, X, y=None):
        """Train on annotated records; y is ignored (labels come from the
        record annotations). Validation is split off by patient."""
        records = validate_records(X)
        config = self._network_config()
        if self.val_fraction > 0:
            train_records, val_records = split_by_patient(
                records, val_fraction=self.val_fraction, seed=self.seed)
        else:
            train_records = val_records = records
        params, _ = build(config, derive(self.seed, "build"))
        train_cfg = TrainConfig(
            batch_size=self.batch_size, max_epochs=self.max_epochs,
            plateau_patience=self.plateau_patience, lr_factor=self.lr_factor,
            min_lr=self.min_lr, seed=self.seed,
            checkpoint_dir=self.checkpoint_dir)
        best, history = fit(train_cfg, config, params, train_records,
                            val_records, init_lr=self.lr)
        self.config_ = best.config
        self.params_ = best.parameters
        self.classes_ = np.array(CLASS_NAMES)
        self.history_ = history
        self.best_val_loss_ = best.best_val_loss
        self.n_epochs_ = len(history)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this RhythmNetClassifier is not fitted; call fit first")

    def predict(self, X) -> list[np.ndarray]:
        """One label-name array per record (one entry per output position)."""
        self._check_fitted()
        records = validate_records(X)
        return [self.classes_[predict_record(self.params_, self.config_,
                                             rec.samples)]
                for rec in records]

    def predict_grids(self, X) -> list[np.ndarray]:
        """Like predict, but integer class indices."""
        self._check_fitted()
        return [predict_record(self.params_, self.config_, rec.samples)
                for rec in validate_records(X)]

    def predict_proba(self, X) -> list[np.ndarray]:
        """Per-record (positions, classes) probability arrays."""
        self._check_fitted()
        return [predict_proba_record(self.params_, self.config_, rec.samples)
                for rec in validate_records(X)]

    def score(self, X, y=None) -> float:
        """Class-frequency weighted sequence F1 against the annotations."""
        self._check_fitted()
        records = validate_records(X)
        preds = self.predict_grids(records)
        truths = [annotations_to_grid(r, stride=self.config_.output_stride)
                  for r in records]
        _, aggregate = sequence_scores(preds, truths)
        return aggregate.f1
