import math

import numpy as np
import pytest

import sdemem

OU_MU = np.array([-0.7, 2.3, -0.9])
OU_TAU = np.array([4.0, 10.0, 4.0])


def ou_unit(n=40, seed=3):
    sim = sdemem.simulate("ou", 1, n, 0.05, seed, OU_MU, OU_TAU, np.array([0.3]))
    return sim["times"][0], sim["obs"][0], sim["phi"][0]


def test_simulate_shapes_and_determinism():
    a = sdemem.simulate("ou", 3, 25, 0.05, 11, OU_MU, OU_TAU, np.array([0.3]))
    b = sdemem.simulate("ou", 3, 25, 0.05, 11, OU_MU, OU_TAU, np.array([0.3]))
    assert len(a["obs"]) == 3
    assert a["obs"][0].shape == (25, 1)
    assert a["phi"].shape == (3, 3)
    for x, y in zip(a["obs"], b["obs"]):
        np.testing.assert_array_equal(x, y)


def test_bootstrap_tracks_kalman():
    times, obs, phi = ou_unit()
    exact = sdemem.loglik("ou", times, obs, phi, np.array([0.3]), filter="kalman")
    estimates = [
        sdemem.loglik("ou", times, obs, phi, np.array([0.3]), particles=200, seed=s) for s in range(20)
    ]
    assert math.isfinite(exact)
    assert abs(np.mean(estimates) - exact) < 1.0


def test_loglik_is_reproducible_per_seed():
    times, obs, phi = ou_unit()
    a = sdemem.loglik("ou", times, obs, phi, np.array([0.3]), particles=50, seed=9, sort=True)
    b = sdemem.loglik("ou", times, obs, phi, np.array([0.3]), particles=50, seed=9, sort=True)
    assert a == b


def test_diagnostics():
    rng = np.random.default_rng(0)
    x = rng.normal(size=2000)
    assert 1000 < sdemem.ess(x) <= 2000
    assert sdemem.wasserstein1d(x, x) == 0.0
    assert sdemem.wasserstein1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert sdemem.mess(np.column_stack([x, x])) == pytest.approx(sdemem.ess(x))


def test_resampling_and_sorting():
    assert sdemem.systematic_resample([0.25, 0.25, 0.5], 0.5) == [0, 2, 2]
    assert sdemem.sort_particles(np.array([[3.0, 1.0, 2.0]])) == [1, 2, 0]


def test_errors_are_translated():
    with pytest.raises(sdemem.InvalidConfiguration):
        sdemem.simulate("nope", 1, 5, 1.0, 1, OU_MU, OU_TAU, np.array([0.3]))
    with pytest.raises(sdemem.SdememError):
        sdemem.systematic_resample([0.0, 0.0], 0.5)


def test_cli_entry_point():
    code, _, err = sdemem.run_cli(["frobnicate"])
    assert code == 2
    assert err
