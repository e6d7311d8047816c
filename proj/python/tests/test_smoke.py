import numpy as np
import pytest

import superres as sr

GRID = np.linspace(0.0, 1.0, 100)


def test_psf_and_weight():
    k = sr.psf([0.5], [0.5, 0.6], 0.1)
    assert k.shape == (1, 2)
    assert k[0, 0] == 1.0
    assert k[0, 1] == pytest.approx(np.exp(-1.0))
    w = sr.weight([0.5], GRID, 0.1)
    assert w[0] == pytest.approx(np.exp(-((GRID - 0.5) ** 2) / 0.01).sum())


def test_solve_recovers_close_pair():
    truth = np.array([0.48, 0.505])
    amps = np.array([1.0, 1.0])
    y = sr.synthesize(truth, amps, GRID, 0.1)
    tau = sr.weighted_mass(truth, amps, GRID, 0.1)
    res = sr.solve(y, GRID, 0.1, tau)
    assert res["converged"]
    assert np.all(np.diff(res["objective_trace"]) <= 0)
    assert len(res["masses"]) == 2
    assert np.allclose(np.sort(res["locations"]), truth, atol=1e-6)
    assert np.allclose(res["masses"], amps, atol=1e-5)
    assert sr.score(truth, res["locations"], 0.01)["fscore"] == 1.0


def test_solve_2d():
    px = (np.arange(16) + 0.5) / 16
    samples = np.array([(x, y) for x in px for y in px])
    truth = np.array([[0.3, 0.4], [0.7, 0.6]])
    amps = np.array([1.0, 2.0])
    y = sr.synthesize(truth, amps, samples, 0.08)
    res = sr.solve(y, samples, 0.08, sr.weighted_mass(truth, amps, samples, 0.08))
    assert res["locations"].shape == (2, 2)
    assert sr.score(truth, res["locations"], 1e-3)["fscore"] == 1.0


def test_noise_is_seeded():
    a = sr.synthesize([0.5], [1.0], GRID, 0.1, noise_sigma=0.1, seed=3)
    b = sr.synthesize([0.5], [1.0], GRID, 0.1, noise_sigma=0.1, seed=3)
    assert np.array_equal(a, b)


def test_certificate_and_errors():
    cert = sr.certificate([0.3, 0.305, 0.7], GRID, 0.1)
    assert cert["valid"]
    assert cert["interpolation_residual"] <= 1e-8
    assert cert["min_margin"] > 0
    with pytest.raises(sr.ConditionFailure) as err:
        sr.certificate([0.3, 0.5], np.array([0.4]), 0.1)
    assert err.value.condition == "independence"
    with pytest.raises(ValueError):
        sr.certificate([0.5, 0.3], GRID, 0.1)


def test_lemmas():
    assert sr.f_sequence_check(6, [(1, 2), (-3, 4), (2, 1), (0, 1), (5, 3), (-1, 7)])
    assert sr.gauss_tsys_det([-1.0, 0.0, 1.0], [0.0]) != 0.0


def test_run_experiment_matches_schema():
    cfg = sr.default_config("lemmas", 1)
    cfg["mc_draws"] = 100
    rec = sr.run_experiment(cfg)
    assert all(row["passed"] for row in rec["rows"])
    cfg = sr.default_config("separation", 2)
    cfg["count"] = 3
    cfg["sweep"]["values"] = [1.0]
    rec = sr.run_experiment(cfg)
    assert rec["points"][0]["mean_f"] == 1.0
    bad = dict(cfg, unknown_key=1)
    with pytest.raises(ValueError):
        sr.run_experiment(bad)
