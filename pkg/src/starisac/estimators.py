"""Estimator-style wrappers around the split optimizer and the tracking filter."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_rows, check_unit_interval, check_vector
from .optimizer import AverageBudget, SensingModel, optimize_split, split_grid
from .tracking import (
    PcrbProxy,
    ProcessNoise,
    StateEstimate,
    TargetState,
    ekf_update,
    measurement_noise,
    predict_state,
)


class SplitOptimizer(BaseEstimator):
    """Grid-searched (rho, lambda) for rows of [c_r, c_t, p_a1].

    ``predict`` returns an (n, 2) array of (rho, lambda); the objectives of the
    last call are kept in ``objective_``.
    """

    def __init__(self, grid_resolution=0.01, hpbw_effective=(0.11075, 0.11075), slot_symbols=100.0,
                 kappa_theta=1.0, kappa_phi=1.0, bound_factor=0.5, fuse_prior=True):
        self.grid_resolution = grid_resolution
        self.hpbw_effective = hpbw_effective
        self.slot_symbols = slot_symbols
        self.kappa_theta = kappa_theta
        self.kappa_phi = kappa_phi
        self.bound_factor = bound_factor
        self.fuse_prior = fuse_prior

    def fit(self, X=None, y=None):
        split_grid(self.grid_resolution)
        self.model_ = SensingModel(
            hpbw_effective=tuple(check_vector(self.hpbw_effective, "hpbw_effective", 2)),
            proxy=PcrbProxy(check_positive(self.kappa_theta, "kappa_theta"),
                            check_positive(self.kappa_phi, "kappa_phi")),
            slot_symbols=check_positive(self.slot_symbols, "slot_symbols"),
            bound_factor=check_positive(self.bound_factor, "bound_factor"),
            fuse_prior=bool(self.fuse_prior),
        )
        self.n_features_in_ = 3
        if X is not None:
            self._rows(X)
        return self

    def _rows(self, X):
        X = check_rows(X, 3)
        check_unit_interval(X[:, 2], "p_a1")
        return X

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = self._rows(X)
        out = np.empty((len(X), 2))
        self.objective_ = np.empty(len(X))
        for i, (c_r, c_t, p1) in enumerate(X):
            d = optimize_split(AverageBudget(c_r, c_t, p1), self.grid_resolution, self.model_)
            out[i] = (d.rho, d.lam)
            self.objective_[i] = d.objective
        return out


class BeamTracker(TransformerMixin, BaseEstimator):
    """EKF over a sequence of (theta, phi, d, v) measurements.

    Each measurement carries the PCRB-proxy covariance kappa / (i_isac snr).
    ``fit`` filters a sequence and stores ``states_`` and ``covariances_``;
    ``transform`` filters a new sequence with the same settings and
    ``predict`` returns the one-slot-ahead predictions.
    """

    def __init__(self, delta_t=0.01, process_noise=(2e-3, 2e-3, 0.05, 0.5), prior_std=(0.05, 0.05, 5.0, 5.0),
                 kappa=(1.0, 1.0, 1.0, 1.0), snr=1e4, i_isac=1):
        self.delta_t = delta_t
        self.process_noise = process_noise
        self.prior_std = prior_std
        self.kappa = kappa
        self.snr = snr
        self.i_isac = i_isac

    def _check_params(self):
        check_positive(self.delta_t, "delta_t")
        check_vector(self.process_noise, "process_noise", 4)
        prior = check_vector(self.prior_std, "prior_std", 4)
        kappa = check_vector(self.kappa, "kappa", 4)
        self._proxy = PcrbProxy(*kappa)
        self._noise = ProcessNoise(*check_vector(self.process_noise, "process_noise", 4))
        return prior

    def _filter(self, X):
        prior = self._check_params()
        X = check_rows(X, 4)
        if np.any(X[:, 2] <= 0):
            raise ValueError("distances must be positive")
        R = measurement_noise(self._proxy, self.i_isac, check_positive(self.snr, "snr"))
        est = ekf_update(StateEstimate(TargetState.from_array(X[0]), np.diag(prior ** 2)),
                         TargetState.from_array(X[0]), R)
        states, covs, preds = [est.mean.as_array()], [est.covariance], []
        for z in X[1:]:
            pred = predict_state(est, self.delta_t, self._noise)
            preds.append(pred.mean.as_array())
            est = ekf_update(pred, TargetState.from_array(z), R)
            states.append(est.mean.as_array())
            covs.append(est.covariance)
        preds.append(predict_state(est, self.delta_t, self._noise).mean.as_array())
        return np.array(states), np.array(covs), np.array(preds)

    def fit(self, X, y=None):
        self.states_, self.covariances_, self.predictions_ = self._filter(X)
        self.n_features_in_ = 4
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "states_")
        return self._filter(X)[0]

    def predict(self, X) -> np.ndarray:
        """Predicted state for the slot after each measurement."""
        check_is_fitted(self, "states_")
        return self._filter(X)[2]
