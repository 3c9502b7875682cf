"""Solver quality: candidate-solver merit scored against a trusted-solver surrogate.

A GP surrogate learns the trusted solver's figure of merit (mean discounted
return) across task configurations. A candidate's merit on a new task is
turned into a z-score against the surrogate's prediction and squashed onto
``[low, high]``, with the midpoint meaning parity with the trusted solver.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_finite_real, check_scale
from .delivery import FEATURE_NAMES, FeatureVector, build_mdp, features
from .exceptions import InvalidInputError, NumericalError
from .mdp import _thread_count, sample_return_distribution, trusted_solve
from .surrogate import DEFAULT_NOISE_VARIANCES, GaussianProcessSurrogate


@dataclass(frozen=True)
class FigureOfMerit:
    mean_return: float
    sd_return: float
    n_samples: int

    def __post_init__(self):
        if not (math.isfinite(self.mean_return) and math.isfinite(self.sd_return)):
            raise InvalidInputError("figure of merit must be finite")
        if self.sd_return < 0:
            raise InvalidInputError("sd_return must be >= 0")

    @classmethod
    def from_samples(cls, samples):
        r = np.asarray(samples.returns, dtype=float)
        sd = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
        return cls(float(np.mean(r)), sd, int(r.size))

    def to_dict(self):
        return {"mean_return": self.mean_return, "sd_return": self.sd_return, "n_samples": self.n_samples}


@dataclass(frozen=True)
class TrainingRecord:
    features: FeatureVector
    merit: FigureOfMerit
    solver_label: str
    seed: int


def derive_seed(master_seed, index):
    """Per-item seed for item ``index`` of a batch run under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(0x5EED, int(index)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _trusted_record(config, seed, n_rollouts, tolerance, max_iterations, horizon):
    mdp = build_mdp(config)
    res = trusted_solve(mdp, tolerance, max_iterations)
    if not res.converged:
        return None, res
    samples = sample_return_distribution(
        mdp, res.policy, mdp.initial_state, n_rollouts, horizon, seed, n_jobs=1
    )
    rec = TrainingRecord(features(config), FigureOfMerit.from_samples(samples), res.solver_label, seed)
    return rec, res


def generate_training_data(
    configs,
    n_rollouts=500,
    master_seed=0,
    tolerance=1e-8,
    max_iterations=100_000,
    horizon=None,
    n_jobs=None,
):
    """Trusted-solver figures of merit for each configuration, in input order.

    Config ``i`` is rolled out with :func:`derive_seed` ``(master_seed, i)``.
    Configurations whose trusted solve fails to converge are dropped with a
    warning.
    """
    configs = list(configs)
    if not configs:
        raise InvalidInputError("configs must be non-empty")
    n_jobs = _thread_count() if n_jobs is None else max(1, int(n_jobs))

    def job(i):
        return _trusted_record(
            configs[i], derive_seed(master_seed, i), n_rollouts, tolerance, max_iterations, horizon
        )

    if n_jobs == 1:
        results = [job(i) for i in range(len(configs))]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(job, range(len(configs))))
    records = []
    for i, (rec, res) in enumerate(results):
        if rec is None:
            warnings.warn(
                f"trusted solve for config {i} did not converge "
                f"(residual {res.residual:.3g} after {res.iterations} iterations); excluded",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        records.append(rec)
    return records


def records_to_arrays(records):
    records = list(records)
    if not records:
        raise InvalidInputError("no training records")
    d = len(records[0].features.values)
    if any(len(r.features.values) != d for r in records):
        raise InvalidInputError("training records have inconsistent feature dimensions")
    X = np.array([r.features.values for r in records], dtype=float)
    y = np.array([r.merit.mean_return for r in records], dtype=float)
    return X, y


def fit_surrogate(records, hyper_grid=None):
    """Fit a :class:`GaussianProcessSurrogate` on trusted-solver records.

    ``hyper_grid`` may hold ``signal_variances``, ``length_scales`` and
    ``noise_variances`` lists; missing keys use the defaults. Without an
    explicit noise grid, candidates below the pooled Monte Carlo variance of
    the targets are dropped and that floor is added, so a few noisy targets
    cannot be interpolated exactly.
    """
    X, y = records_to_arrays(records)
    if len(y) < 2:
        raise InvalidInputError("at least 2 training records are required")
    hyper_grid = dict(hyper_grid or {})
    unknown = set(hyper_grid) - {"signal_variances", "length_scales", "noise_variances"}
    if unknown:
        raise InvalidInputError(f"unknown hyper_grid keys: {sorted(unknown)}")
    if "noise_variances" not in hyper_grid:
        floor = mc_noise_floor(records)
        if floor > 0:
            hyper_grid["noise_variances"] = [floor] + [v for v in DEFAULT_NOISE_VARIANCES if v > floor]
    return GaussianProcessSurrogate(**hyper_grid).fit(X, y)


def mc_noise_floor(records):
    """Mean squared standard error of the targets, in standardized units (0 if undefined)."""
    _, y = records_to_arrays(records)
    var_y = float(np.var(y))
    se2 = [r.merit.sd_return**2 / r.merit.n_samples for r in records if r.merit.n_samples > 0]
    if not se2 or var_y <= 0:
        return 0.0
    return min(float(np.mean(se2)) / var_y, 1.0)


def predict(model, feature_vector):
    """Surrogate ``(mu, sigma)`` at one feature vector."""
    x = feature_vector.as_array() if isinstance(feature_vector, FeatureVector) else np.asarray(feature_vector)
    mu, sd = model.predict(x.reshape(1, -1), return_std=True)
    return float(mu[0]), float(sd[0])


@dataclass(frozen=True)
class SolverQualityAssessment:
    merit_candidate: float
    mu_hat: float
    sigma_hat: float
    z: float
    x_q: float
    beta: float
    scale_low: float
    scale_high: float

    def to_dict(self):
        return {
            "merit_candidate": self.merit_candidate,
            "mu_hat": self.mu_hat,
            "sigma_hat": self.sigma_hat,
            "z": self.z,
            "x_q": self.x_q,
            "beta": self.beta,
            "scale": [self.scale_low, self.scale_high],
        }


# |z| = 3 lands on the 1/4 and 3/4 points of the scale.
DEFAULT_BETA = math.log(3.0) / 3.0


def xq_from_z(z, beta=DEFAULT_BETA, scale=(0.0, 2.0)):
    low, high = check_scale(*scale)
    return 0.5 * (low + high) + 0.5 * (high - low) * math.tanh(0.5 * beta * z)


def assess_solver_quality(model, candidate_merit, feature_vector, beta=DEFAULT_BETA, scale=(0.0, 2.0)):
    """Score a candidate's merit against the surrogate prediction at ``feature_vector``."""
    merit = candidate_merit.mean_return if isinstance(candidate_merit, FigureOfMerit) else candidate_merit
    merit = check_finite_real(merit, "candidate_merit")
    beta = check_finite_real(beta, "beta")
    if beta <= 0:
        raise InvalidInputError("beta must be > 0")
    low, high = check_scale(*scale)
    mu, sigma = predict(model, feature_vector)
    if not sigma > 0:
        raise NumericalError(
            "surrogate predictive sd is zero; refit with a positive noise variance floor"
        )
    z = (merit - mu) / sigma
    return SolverQualityAssessment(merit, mu, sigma, z, xq_from_z(z, beta, (low, high)), beta, low, high)


def csv_header(d):
    return [f"feature_{i}" for i in range(d)] + ["merit_mean", "merit_sd", "n_samples", "seed"]


def write_training_csv(records, path):
    X, _ = records_to_arrays(records)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(X.shape[1]))
        for r in records:
            w.writerow(
                [repr(v) for v in r.features.values]
                + [repr(r.merit.mean_return), repr(r.merit.sd_return), r.merit.n_samples, r.seed]
            )
    os.replace(tmp, path)


def read_training_csv(path, solver_label="trusted"):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty training CSV")
    header = rows[0]
    d = len(header) - 4
    if d < 1 or header != csv_header(d):
        raise InvalidInputError(f"{path}: unexpected CSV header {header}")
    names = FEATURE_NAMES if d == len(FEATURE_NAMES) else tuple(header[:d])
    records = []
    for row in rows[1:]:
        vals = [float(v) for v in row[:d]]
        merit = FigureOfMerit(float(row[d]), float(row[d + 1]), int(row[d + 2]))
        records.append(TrainingRecord(FeatureVector(tuple(vals), names), merit, solver_label, int(row[d + 3])))
    return records
