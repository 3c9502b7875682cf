import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from famsec.delivery import (
    FeatureVector,
    TaskConfig,
    build_mdp,
    enumerate_configs,
    features,
    fixture_path,
    load_sweep,
)
from famsec.exceptions import InvalidInputError, NumericalError
from famsec.mdp import sample_return_distribution, trusted_solve
from famsec.outcome import assess_outcome
from famsec.quality import (
    DEFAULT_BETA,
    FigureOfMerit,
    TrainingRecord,
    assess_solver_quality,
    csv_header,
    derive_seed,
    fit_surrogate,
    mc_noise_floor,
    generate_training_data,
    predict,
    read_training_csv,
    write_training_csv,
    xq_from_z,
)


@pytest.fixture(scope="module")
def small_configs():
    return enumerate_configs(load_sweep(fixture_path("sweep_small.json")))


@pytest.fixture(scope="module")
def small_records(small_configs):
    return generate_training_data(small_configs, n_rollouts=300, master_seed=7)


@pytest.fixture(scope="module")
def synthetic_model():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, size=(20, 2))
    y = 10 * X[:, 0] - 5 * X[:, 1] + rng.normal(scale=0.3, size=20)
    records = [
        TrainingRecord(FeatureVector(tuple(x), ("a", "b")), FigureOfMerit(float(t), 1.0, 100), "trusted", i)
        for i, (x, t) in enumerate(zip(X, y))
    ]
    return fit_surrogate(records), records


class TestTrainingData:
    def test_single_config_matches_assess(self, small_configs):
        cfg = small_configs[3]
        (rec,) = generate_training_data([cfg], n_rollouts=200, master_seed=5)
        assert rec.seed == derive_seed(5, 0)
        m = build_mdp(cfg)
        a, _ = assess_outcome(m, trusted_solve(m), n_rollouts=200, master_seed=rec.seed)
        assert a.mean == rec.merit.mean_return

    def test_order_and_count(self, small_configs, small_records):
        assert len(small_records) == 6
        assert [r.features for r in small_records] == [features(c) for c in small_configs]

    def test_parallel_identical(self, small_configs, small_records):
        par = generate_training_data(small_configs, n_rollouts=300, master_seed=7, n_jobs=4)
        assert par == small_records

    def test_easy_config(self):
        cfg = TaskConfig(width=8, height=8, adt_start=(3, 3), goal=(3, 4), mg_start=(7, 0), p_pursue=0.0, slip=0.0)
        (rec,) = generate_training_data([cfg], n_rollouts=400, master_seed=1)
        bound = 3 * rec.merit.sd_return / math.sqrt(rec.merit.n_samples)
        assert abs(rec.merit.mean_return - (cfg.r_goal + cfg.step_cost)) <= bound + 1e-12

    def test_non_converged_excluded(self, small_configs):
        with pytest.warns(RuntimeWarning, match="did not converge"):
            recs = generate_training_data(small_configs[:2], n_rollouts=10, max_iterations=1)
        assert recs == []

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            generate_training_data([])

    def test_csv_round_trip(self, small_records, tmp_path):
        path = tmp_path / "train.csv"
        write_training_csv(small_records, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature_0,feature_1,feature_2,feature_3,feature_4,merit_mean,merit_sd,n_samples,seed"
        back = read_training_csv(path, solver_label=small_records[0].solver_label)
        assert back == small_records

    def test_noise_floor(self):
        recs = [
            TrainingRecord(FeatureVector((float(i),), ("a",)), FigureOfMerit(m, sd, 4), "t", i)
            for i, (m, sd) in enumerate([(0.0, 2.0), (4.0, 4.0)])
        ]
        # squared standard errors 1 and 4, target variance 4
        assert mc_noise_floor(recs) == pytest.approx(2.5 / 4.0)
        model = fit_surrogate(recs)
        assert model.noise_variance_ >= 2.5 / 4.0
        assert fit_surrogate(recs, {"noise_variances": [1e-6]}).noise_variance_ == 1e-6

    def test_csv_header(self):
        assert csv_header(2) == ["feature_0", "feature_1", "merit_mean", "merit_sd", "n_samples", "seed"]


class TestAssessSolverQuality:
    def test_parity(self, synthetic_model):
        model, _ = synthetic_model
        fv = FeatureVector((0.4, 0.6), ("a", "b"))
        mu, _ = predict(model, fv)
        q = assess_solver_quality(model, mu, fv)
        assert q.z == 0.0 and q.x_q == 1.0

    def test_very_poor_candidate(self, synthetic_model):
        model, _ = synthetic_model
        q = assess_solver_quality(model, -1e12, FeatureVector((0.4, 0.6), ("a", "b")), beta=1.0)
        assert q.x_q == pytest.approx(0.0, abs=1e-12)

    def test_scale_and_beta(self, synthetic_model):
        model, _ = synthetic_model
        fv = FeatureVector((0.5, 0.5), ("a", "b"))
        mu, sd = predict(model, fv)
        q = assess_solver_quality(model, mu + 2 * sd, fv, beta=1.0, scale=(-1, 1))
        assert q.z == pytest.approx(2.0)
        assert q.x_q == pytest.approx(-1 + 2 / (1 + math.exp(-2.0)), abs=1e-12)

    def test_default_beta_maps_three_sd_to_quartiles(self):
        assert xq_from_z(3.0) == pytest.approx(1.5, abs=1e-15)
        assert xq_from_z(-3.0) == pytest.approx(0.5, abs=1e-15)
        assert DEFAULT_BETA == pytest.approx(math.log(3) / 3)

    def test_zero_sigma_raises(self):
        class Degenerate:
            def predict(self, X, return_std=False):
                return np.zeros(1), np.zeros(1)

        with pytest.raises(NumericalError, match="noise"):
            assess_solver_quality(Degenerate(), 1.0, FeatureVector((0.0,), ("a",)))

    def test_trusted_rerun(self, small_configs, small_records):
        model = fit_surrogate(small_records)
        cfg = small_configs[2]
        m = build_mdp(cfg)
        res = trusted_solve(m)
        s = sample_return_distribution(m, res.policy, m.initial_state, 300, master_seed=99_999)
        q = assess_solver_quality(model, FigureOfMerit.from_samples(s), features(cfg))
        assert abs(q.z) <= 3
        assert abs(q.x_q - 1) <= xq_from_z(3.0) - 1

    def test_affine_consistency(self, synthetic_model):
        model, records = synthetic_model
        shifted = [
            TrainingRecord(r.features, FigureOfMerit(r.merit.mean_return + 250.0, 1.0, 100), r.solver_label, r.seed)
            for r in records
        ]
        model2 = fit_surrogate(shifted)
        fv = FeatureVector((0.3, 0.9), ("a", "b"))
        q1 = assess_solver_quality(model, 1.7, fv)
        q2 = assess_solver_quality(model2, 251.7, fv)
        assert q2.z == pytest.approx(q1.z, abs=1e-8)

    def test_invalid_beta(self, synthetic_model):
        model, _ = synthetic_model
        with pytest.raises(InvalidInputError):
            assess_solver_quality(model, 1.0, FeatureVector((0.3, 0.9), ("a", "b")), beta=0.0)


@given(st.floats(-20, 20), st.floats(0.01, 20))
def test_xq_increasing_in_merit(z_lo, dz):
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, size=(12, 1))
    y = 3 * X[:, 0] + rng.normal(scale=0.5, size=12)
    model = fit_surrogate(
        [TrainingRecord(FeatureVector((x,), ("a",)), FigureOfMerit(t, 0.0, 1), "t", 0) for x, t in zip(X[:, 0], y)]
    )
    fv = FeatureVector((0.5,), ("a",))
    mu, sd = predict(model, fv)
    lo = assess_solver_quality(model, mu + z_lo * sd, fv)
    hi = assess_solver_quality(model, mu + (z_lo + dz) * sd, fv)
    assert hi.z > lo.z and hi.x_q > lo.x_q
