import pytest
import yaml

from blockmix.config import CONFIG_TEMPLATE, RunConfig, load_run_config, resolve_config_path
from blockmix.constants import NoiseFamily
from blockmix.errors import ConfigError


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_defaults(monkeypatch):
    monkeypatch.delenv("BLOCKMIX_CONFIG_PATH", raising=False)
    cfg = load_run_config()
    assert cfg == RunConfig()
    assert cfg.selection.restarts == 20
    assert cfg.binning.num_bins(400) == 4
    sim = cfg.simulation_config()
    assert sim.target_miscl == 0.05 and sim.tau is None


def test_template_is_a_valid_config(tmp_path):
    cfg = load_run_config(_write(tmp_path, CONFIG_TEMPLATE))
    assert cfg.simulation.target_miscl == 0.05
    assert cfg.selection.bmax == 3
    assert yaml.safe_load(CONFIG_TEMPLATE)["binning"]["bins"] is None


def test_flags_override_the_file(tmp_path):
    path = _write(tmp_path, "seed: 3\nselection:\n  bmax: 2\n  gmax: 4\n")
    cfg = load_run_config(path, {"selection.bmax": 1, "selection.gmax": None, "threads": 4})
    assert cfg.seed == 3
    assert cfg.selection.bmax == 1
    assert cfg.selection.gmax == 4
    assert cfg.threads == 4


def test_flag_clears_the_other_side_of_an_exclusive_pair(tmp_path):
    path = _write(tmp_path, "simulation:\n  tau: 1.5\nbinning:\n  bins: 5\n")
    cfg = load_run_config(path, {"simulation.target_miscl": 0.1, "binning.bins_exponent": 6})
    assert cfg.simulation.tau is None
    assert cfg.simulation.target_miscl == 0.1
    assert cfg.binning.bins is None
    assert cfg.binning.num_bins(400) == 2


def test_both_sides_in_the_file_are_rejected(tmp_path):
    path = _write(tmp_path, "simulation:\n  tau: 1.5\n  target_miscl: 0.05\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        load_run_config(path)


def test_environment_supplies_the_path(tmp_path, monkeypatch):
    path = _write(tmp_path, "seed: 42\n")
    monkeypatch.setenv("BLOCKMIX_CONFIG_PATH", str(path))
    assert resolve_config_path(None) == path
    assert load_run_config().seed == 42
    other = _write(tmp_path, "seed: 7\n", "other.yaml")
    assert load_run_config(other).seed == 7


@pytest.mark.parametrize(
    "text",
    [
        "selection: [1, 2",
        "- just\n- a list\n",
        "selection:\n  bogus: 1\n",
        "threads: 0\n",
        "simulation:\n  noise: cauchy\n",
    ],
)
def test_bad_files_are_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.yaml")


def test_em_config_and_grid():
    cfg = RunConfig(seed=9, threads=2)
    em = cfg.em_config()
    assert em.master_seed == 9 and em.n_jobs == 2
    assert cfg.em_config(seed=1).master_seed == 1
    assert len(cfg.grid(d=6).candidates) == 3 + 6


def test_simulation_config_from_options():
    cfg = RunConfig.model_validate({"simulation": {"blocks": 2, "components": 2, "noise": "laplace", "tau": 1.0}})
    sim = cfg.simulation_config(seed=5)
    assert sim.G == (2, 2)
    assert sim.noise is NoiseFamily.LAPLACE
    assert sim.seed == 5
    assert sim.target_miscl is None
