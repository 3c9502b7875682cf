"""Exact Gaussian-process regressor with grid-searched hyperparameters.

Squared-exponential kernel with one length scale shared across standardized
features plus a white-noise term. Hyperparameters are picked from a finite
log-spaced grid by maximizing the exact log marginal likelihood.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_features
from .exceptions import InvalidInputError, NotFittedError, NumericalError

DEFAULT_SIGNAL_VARIANCES = tuple(np.logspace(-1, 1, 5))
DEFAULT_LENGTH_SCALES = tuple(np.logspace(-1, 1.5, 11))
DEFAULT_NOISE_VARIANCES = tuple(np.logspace(-6, 0, 7))
JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def _sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _cholesky_with_jitter(K):
    for jitter in JITTERS:
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True, check_finite=True)
        except LinAlgError:
            continue
        return L, jitter
    raise NumericalError("kernel matrix is not positive definite even with jitter 1e-4")


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """GP regression surrogate for solver figures of merit.

    Parameters
    ----------
    signal_variances, length_scales, noise_variances : sequence of float, optional
        Candidate hyperparameter values, in standardized units. The full
        Cartesian product is searched.

    Attributes
    ----------
    signal_variance_, length_scale_, noise_variance_ : float
        Selected hyperparameters.
    log_marginal_likelihood_value_ : float
        LML at the selected hyperparameters.
    lml_grid_ : ndarray of shape (n_signal, n_length, n_noise)
        LML for every grid point (``-inf`` where factorization failed).
    """

    def __init__(self, signal_variances=None, length_scales=None, noise_variances=None):
        self.signal_variances = signal_variances
        self.length_scales = length_scales
        self.noise_variances = noise_variances

    def _grid(self):
        sf = DEFAULT_SIGNAL_VARIANCES if self.signal_variances is None else self.signal_variances
        ls = DEFAULT_LENGTH_SCALES if self.length_scales is None else self.length_scales
        sn = DEFAULT_NOISE_VARIANCES if self.noise_variances is None else self.noise_variances
        grid = [np.atleast_1d(np.asarray(g, dtype=float)) for g in (sf, ls, sn)]
        for name, g in zip(("signal_variances", "length_scales", "noise_variances"), grid):
            if g.size == 0 or np.any(~np.isfinite(g)) or np.any(g <= 0):
                raise InvalidInputError(f"{name} must be a non-empty list of positive numbers")
        return grid

    def _standardize_inputs(self, X):
        return (X - self.x_mean_) / self.x_scale_

    def _set_training_data(self, X, y):
        self.X_train_ = X
        self.y_train_ = y
        self.n_features_in_ = X.shape[1]
        self.x_mean_ = X.mean(axis=0)
        x_scale = X.std(axis=0)
        self.x_scale_ = np.where(x_scale > 0, x_scale, 1.0)
        self.y_mean_ = float(y.mean())
        y_std = float(y.std())
        self.degenerate_ = bool(np.ptp(y) == 0.0)
        self.y_scale_ = 1.0 if self.degenerate_ or y_std == 0.0 else y_std
        self._Z = self._standardize_inputs(X)
        self._t = (y - self.y_mean_) / self.y_scale_
        self._D = _sq_dists(self._Z, self._Z)

    def _lml(self, sf2, ell, sn2):
        K = sf2 * np.exp(-0.5 * self._D / ell**2) + sn2 * np.eye(len(self._t))
        L, jitter = _cholesky_with_jitter(K)
        alpha = cho_solve((L, True), self._t)
        lml = (
            -0.5 * float(self._t @ alpha)
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * len(self._t) * math.log(2 * math.pi)
        )
        return lml, L, alpha, jitter

    def _install(self, sf2, ell, sn2):
        lml, L, alpha, jitter = self._lml(sf2, ell, sn2)
        self.signal_variance_ = float(sf2)
        self.length_scale_ = float(ell)
        self.noise_variance_ = float(sn2)
        self.log_marginal_likelihood_value_ = lml
        self.L_ = L
        self.alpha_ = alpha
        self.jitter_ = jitter

    def fit(self, X, y):
        X = check_features(X)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise InvalidInputError("X and y have inconsistent lengths")
        if X.shape[0] < 2:
            raise InvalidInputError("at least 2 training points are required")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("targets must be finite")
        sf_grid, ls_grid, sn_grid = self._grid()
        self._set_training_data(X, y)
        lml_grid = np.full((sf_grid.size, ls_grid.size, sn_grid.size), -np.inf)
        for (i, sf2), (j, ell), (k, sn2) in itertools.product(
            enumerate(sf_grid), enumerate(ls_grid), enumerate(sn_grid)
        ):
            try:
                lml_grid[i, j, k] = self._lml(sf2, ell, sn2)[0]
            except NumericalError:
                continue
        if not np.any(np.isfinite(lml_grid)):
            raise NumericalError("kernel matrix singular for every hyperparameter setting")
        i, j, k = np.unravel_index(int(np.argmax(lml_grid)), lml_grid.shape)
        self.lml_grid_ = lml_grid
        self._install(sf_grid[i], ls_grid[j], sn_grid[k])
        return self

    def _check_fitted(self):
        if not hasattr(self, "alpha_"):
            raise NotFittedError("GaussianProcessSurrogate is not fitted yet")

    def log_marginal_likelihood(self, signal_variance=None, length_scale=None, noise_variance=None):
        """LML of the training data at given hyperparameters (default: the selected ones)."""
        self._check_fitted()
        sf2 = self.signal_variance_ if signal_variance is None else signal_variance
        ell = self.length_scale_ if length_scale is None else length_scale
        sn2 = self.noise_variance_ if noise_variance is None else noise_variance
        return self._lml(sf2, ell, sn2)[0]

    def prior_std(self):
        """Predictive sd far from all data, in target units."""
        self._check_fitted()
        if self.degenerate_:
            return math.sqrt(self.noise_variance_)
        return math.sqrt(self.signal_variance_ + self.noise_variance_) * self.y_scale_

    def predict(self, X, return_std=False):
        """Posterior mean (and predictive sd including noise) in target units."""
        self._check_fitted()
        X = check_features(X, self.n_features_in_)
        Zs = self._standardize_inputs(X)
        Ks = self.signal_variance_ * np.exp(-0.5 * _sq_dists(Zs, self._Z) / self.length_scale_**2)
        if self.degenerate_:
            mu = np.full(X.shape[0], self.y_mean_)
            if return_std:
                return mu, np.full(X.shape[0], math.sqrt(self.noise_variance_))
            return mu
        mu = Ks @ self.alpha_ * self.y_scale_ + self.y_mean_
        if not return_std:
            return mu
        v = solve_triangular(self.L_, Ks.T, lower=True)
        var = self.signal_variance_ + self.noise_variance_ - np.sum(v * v, axis=0)
        return mu, np.sqrt(np.maximum(var, 0.0)) * self.y_scale_

    def to_dict(self):
        """JSON-ready state; the factorization is recomputed on load."""
        self._check_fitted()
        sf, ls, sn = self._grid()
        return {
            "kind": "gaussian_process_se",
            "hyperparameters": {
                "signal_variance": self.signal_variance_,
                "length_scale": self.length_scale_,
                "noise_variance": self.noise_variance_,
            },
            "grid": {
                "signal_variances": sf.tolist(),
                "length_scales": ls.tolist(),
                "noise_variances": sn.tolist(),
            },
            "standardization": {
                "x_mean": self.x_mean_.tolist(),
                "x_scale": self.x_scale_.tolist(),
                "y_mean": self.y_mean_,
                "y_scale": self.y_scale_,
                "degenerate": self.degenerate_,
            },
            "X": self.X_train_.tolist(),
            "y": self.y_train_.tolist(),
            "log_marginal_likelihood": self.log_marginal_likelihood_value_,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            grid = data["grid"]
            hp = data["hyperparameters"]
            model = cls(grid["signal_variances"], grid["length_scales"], grid["noise_variances"])
            X = np.asarray(data["X"], dtype=float)
            y = np.asarray(data["y"], dtype=float)
            model._set_training_data(X, y)
            model._install(hp["signal_variance"], hp["length_scale"], hp["noise_variance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed surrogate model: {exc}") from None
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}: malformed JSON: {exc.msg}") from None
        return cls.from_dict(data)
