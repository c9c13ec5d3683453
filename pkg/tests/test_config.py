import pytest

from disarm.config import RunConfig, derive_seed
from disarm.errors import ConfigError


def _write(tmp_path, text):
    p = tmp_path / "run.yaml"
    p.write_text(text)
    return p


def test_paths_resolve_against_config_dir(tmp_path):
    cfg = RunConfig.load(_write(tmp_path, "seed: 4\npaths: {manifest: d/m.jsonl, reports: out}\nmodel: {rank: 8}\n"))
    assert cfg.path("manifest") == tmp_path / "d" / "m.jsonl"
    assert cfg.model.rank == 8 and cfg.train.seed == 4
    assert cfg.paths["cache"] is None
    with pytest.raises(ConfigError, match="paths.cache"):
        cfg.path("cache")
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.path("manifest", must_exist=True)


@pytest.mark.parametrize("text", [
    "sede: 1\n",
    "paths: {manifests: x}\n",
    "encoders: {audio: stub}\n",
    "model: {ranks: 3}\n",
    "train: {lr: 1}\n",
    "runs: 0\n",
    "- a list\n",
    "seed: [unclosed\n",
])
def test_bad_configs_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        RunConfig.load(_write(tmp_path, text))


def test_flags_override_file(tmp_path):
    cfg = RunConfig.load(_write(tmp_path, "seed: 1\nruns: 2\ntrain: {max_epochs: 3}\n"))
    over = cfg.with_overrides(seed=9, runs=3)
    assert (over.seed, over.runs, over.train.seed, over.train.max_epochs) == (9, 3, 9, 3)
    assert [over.run_seed(i) for i in range(3)] == [9, 10, 11]
    assert cfg.with_overrides() == cfg


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(1, "encoders") == derive_seed(1, "encoders")
    assert derive_seed(1, "encoders") != derive_seed(2, "encoders")
    assert derive_seed(1, "encoders") != derive_seed(1, "sampling")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "none.yaml")
