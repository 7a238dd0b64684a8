import numpy as np
import pytest
from scipy import stats

from blockmix.constants import ALL_NOISE_FAMILIES, NoiseFamily
from blockmix.errors import ConfigError
from blockmix.simulation import (
    SimulationConfig,
    bayes_error_mc,
    calibrate_tau,
    generate,
    resolve_tau,
    shifted_component,
)


def test_shift_pattern():
    np.testing.assert_array_equal(shifted_component(6, 3), [0, 1, 2, 0, 1, 2])
    np.testing.assert_array_equal(shifted_component(4, 2), [0, 1, 0, 1])


def test_generate_shapes_and_truth():
    config = SimulationConfig(B=3, G=(3, 3, 3), block_size=6, n=400, tau=2.0)
    sample = generate(config, seed=1)
    assert sample.data.values.shape == (400, 18)
    assert sample.true_omega == tuple(np.repeat([0, 1, 2], 6))
    assert sample.true_partitions.B == 3
    for labels in sample.true_partitions.labels:
        assert set(np.unique(labels)) <= {0, 1, 2}
    assert sample.data.column_names[0] == "X1"
    assert sample.tau_used == 2.0


def test_generate_is_deterministic():
    config = SimulationConfig(B=2, G=(2, 3), block_size=3, n=50, tau=1.5, noise=NoiseFamily.LAPLACE)
    a, b = generate(config, seed=5), generate(config, seed=5)
    np.testing.assert_array_equal(a.data.values, b.data.values)
    c = generate(config, seed=6)
    assert not np.array_equal(a.data.values, c.data.values)


def test_shift_moves_the_component_means():
    config = SimulationConfig(B=1, G=(2,), block_size=4, n=4000, tau=5.0)
    sample = generate(config, seed=2)
    z = sample.true_partitions.labels[0]
    x = sample.data.values
    # component 0 carries the shift on within-block variables 0 and 2
    assert x[z == 0, 0].mean() == pytest.approx(5.0, abs=0.15)
    assert x[z == 1, 0].mean() == pytest.approx(0.0, abs=0.15)
    assert x[z == 1, 1].mean() == pytest.approx(5.0, abs=0.15)


def test_proportions_are_respected():
    config = SimulationConfig(B=1, G=(2,), block_size=3, n=5000, tau=1.0, proportions=((0.8, 0.2),))
    z = generate(config, seed=3).true_partitions.labels[0]
    assert z.mean() == pytest.approx(0.2, abs=0.02)


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"tau": 1.0, "target_miscl": 0.05}, "mutually exclusive"),
        ({}, "mutually exclusive"),
        ({"tau": -1.0}, "tau"),
        ({"tau": 1.0, "block_size": 2}, "block_size"),
        ({"target_miscl": 0.7}, "target_miscl"),
        ({"tau": 1.0, "B": 2}, "B"),
        ({"tau": 1.0, "proportions": ((0.5, 0.5),) * 2 + ((1.0, 0.0, 0.1),)}, "proportions"),
    ],
)
def test_invalid_configs(kwargs, match):
    with pytest.raises(ConfigError, match=match):
        SimulationConfig(**kwargs)


def test_unresolved_tau_cannot_generate():
    with pytest.raises(ConfigError):
        generate(SimulationConfig(target_miscl=0.05))


def test_no_shift_gives_chance_level_error():
    config = SimulationConfig(B=1, G=(3,), block_size=6, tau=0.0)
    est = bayes_error_mc(config, 0.0, n_mc=30_000)
    assert est.rate == pytest.approx(2 / 3, abs=0.01)


def test_bayes_error_falls_with_tau():
    config = SimulationConfig(B=1, G=(3,), block_size=6, tau=0.0)
    rates = [bayes_error_mc(config, tau, n_mc=20_000).rate for tau in (0.5, 1.5, 3.0)]
    assert rates[0] > rates[1] > rates[2]


def test_calibrated_tau_for_gaussian_five_percent():
    config = SimulationConfig(B=3, G=(3, 3, 3), block_size=6, target_miscl=0.05)
    tau = calibrate_tau(config, 0.05, n_mc=50_000)
    assert 1.8 <= tau <= 2.1
    est = bayes_error_mc(config, tau, n_mc=50_000)
    assert abs(est.rate - 0.05) <= 0.002 + 3 * est.stderr


def test_resolve_tau():
    config = SimulationConfig(B=1, G=(3,), block_size=6, target_miscl=0.10)
    resolved = resolve_tau(config, n_mc=20_000)
    assert resolved.tau is not None and resolved.tau > 0
    assert resolved.target_miscl is None
    fixed = SimulationConfig(tau=1.0)
    assert resolve_tau(fixed) is fixed


def test_target_must_be_reachable():
    config = SimulationConfig(B=1, G=(3,), block_size=6, tau=0.0)
    with pytest.raises(ConfigError):
        calibrate_tau(config, 0.9)


@pytest.mark.slow
@pytest.mark.parametrize("noise", ALL_NOISE_FAMILIES)
@pytest.mark.parametrize("target", [0.05, 0.10])
def test_calibration_is_self_consistent(noise, target):
    config = SimulationConfig(B=1, G=(3,), block_size=6, noise=noise, target_miscl=target)
    tau = calibrate_tau(config, target)
    est = bayes_error_mc(config, tau)
    assert abs(est.rate - target) <= 0.002 + 3 * est.stderr


_LAWS = {NoiseFamily.GAUSSIAN: stats.norm(), NoiseFamily.STUDENT3: stats.t(df=3), NoiseFamily.LAPLACE: stats.laplace()}


@pytest.mark.parametrize("noise", ALL_NOISE_FAMILIES)
def test_unshifted_columns_follow_the_noise_law(noise):
    config = SimulationConfig(B=1, G=(3,), block_size=3, n=5000, tau=0.0, noise=noise)
    values = generate(config, seed=11).data.values
    for j in range(values.shape[1]):
        assert stats.kstest(values[:, j], _LAWS[noise].cdf).pvalue > 1e-3


def test_blocks_are_uncorrelated():
    n = 4000
    config = SimulationConfig(B=2, G=(2, 2), block_size=3, n=n, tau=2.0)
    x = generate(config, seed=12).data.values
    r = np.corrcoef(x, rowvar=False)[:3, 3:]
    assert np.abs(r).mean() < 3 / np.sqrt(n)
    # within a block the shared label does correlate the shifted variables
    assert np.corrcoef(x[:, 0], x[:, 2])[0, 1] > 0.3
