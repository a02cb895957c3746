import math
import pathlib

import numpy as np
import pytest

import rtminv

ROOT = pathlib.Path(__file__).resolve().parents[2]
TRUE_COV = np.array([[1.0, 0.6], [0.6, 1.0]])


def test_models_and_kl():
    assert set(rtminv.model_names()) == {"linear2d", "bimodal", "surrogate_rtm"}
    f = rtminv.make_model("bimodal")
    np.testing.assert_allclose(f.eval(np.array([2.0, 2.0])), [4.0, 4.0])
    p = rtminv.Gaussian(np.array([1.0, 2.0]), TRUE_COV)
    assert rtminv.kl_gaussians(p, p) == 0.0
    q = rtminv.Gaussian(np.zeros(2), np.eye(2))
    assert rtminv.kl_gaussians(p, q) > 0.0
    with pytest.raises(ValueError):
        rtminv.make_model("nope")


def test_fit_and_evidence_on_linear_toy():
    truth = rtminv.Gaussian(np.array([4.0, 6.0]), TRUE_COV)
    f = rtminv.make_model("linear2d")
    effects = f.simulate(truth.sample(200, seed=1), seed=2)
    assert effects.shape == (200, 2)

    vi = rtminv.fit_vi(f, effects, epochs=20, seed=3)
    assert vi.has_encoder
    assert len(vi.epoch_wall_clock_s) == 20
    np.testing.assert_allclose(vi.predict(np.array([8.0, 12.0])).mean, [4.0, 6.0], atol=0.1)

    mcem = rtminv.fit_mcem(f, effects, epochs=2, random_starts=2, burn_in=20, seed=4)
    assert rtminv.kl_gaussians(mcem.prior, truth) < 0.05
    with pytest.raises(rtminv.UnsupportedOperation):
        mcem.predict(np.array([8.0, 12.0]))

    again = rtminv.FitResult.from_json(mcem.to_json())
    np.testing.assert_array_equal(again.prior.mean, mcem.prior.mean)

    e = np.array([8.2, 11.9])
    est = rtminv.ris_log_evidence(f, truth, e, fit_samples=300, estimator_samples=300, seed=5)
    d = e - 2.0 * truth.mean
    cov = 4.0 * TRUE_COV + f.noise_variance * np.eye(2)
    exact = -0.5 * (2 * math.log(2 * math.pi) + math.log(np.linalg.det(cov)) + d @ np.linalg.solve(cov, d))
    assert abs(est["log_evidence"] - exact) < 0.1


def test_observer_and_posterior_sampling():
    f = rtminv.make_model("bimodal")
    prior = rtminv.Gaussian(np.zeros(2), np.eye(2))
    samples, acceptance = rtminv.sample_posterior(f, prior, np.array([4.0, 4.0]), 400, seed=6)
    assert samples.shape == (400, 2)
    assert acceptance > 0.5
    assert (samples[:, 0] < 0).any() and (samples[:, 0] > 0).any()

    seen = []
    effects = f.simulate(prior.sample(50, seed=7), seed=8)
    rtminv.fit_vi(f, effects, epochs=3, seed=9, observer=lambda epoch, p: seen.append(epoch))
    assert seen == [1, 2, 3]


def test_gen_data_from_config():
    data = rtminv.gen_data(str(ROOT / "configs" / "linear2d.json"), seed=11)
    assert data["effects"].shape == (500, 2)
    assert data["test_effects"].shape == (50, 2)
    assert np.abs(data["causes"].mean(axis=0) - [4.0, 6.0]).max() < 0.15


def test_numerical_failure_maps_to_python():
    with pytest.raises(rtminv.NumericalFailure):
        rtminv.Gaussian(np.zeros(2), -np.eye(2))
