from __future__ import annotations

from pathlib import Path

import pytest

from rosvd.config import AppConfig, load_config, parse_config
from rosvd.errors import ConfigError


def test_defaults_without_file(monkeypatch):
    monkeypatch.delenv("ROSVD_CONFIG", raising=False)
    cfg = load_config()
    assert cfg == AppConfig()
    assert (cfg.sim.rows, cfg.sim.cols, cfg.sim.noise_sigma) == (64, 64, 2e-4)
    assert (cfg.pipeline.k_head, cfg.pipeline.k_removed, cfg.pipeline.hash_alg) == (1, 7, "sha256")
    assert cfg.suite.alpha == 0.01 and len(cfg.suite.tests) == 5


def test_documented_example_is_the_default():
    import rosvd.config as module

    doc = module.__doc__
    example = doc[doc.index("[sim]") : doc.index("Relative paths")]
    text = "\n".join(line.strip() for line in example.splitlines())
    cfg = parse_config(text, Path("."))
    assert cfg == AppConfig()


def test_values_and_relative_paths(tmp_path):
    p = tmp_path / "rosvd.toml"
    p.write_text('[sim]\nrows = 32\nnoise_sigma = 1\n[ledger]\njournal = "j.tsv"\n[suite]\ntests = ["runs"]\n')
    cfg = load_config(p)
    assert cfg.sim.rows == 32 and cfg.sim.noise_sigma == 1.0
    assert cfg.ledger.journal == tmp_path / "j.tsv"
    assert cfg.suite.tests == ("runs",)
    assert cfg.source == p


def test_env_var_and_explicit_precedence(tmp_path, monkeypatch):
    env = tmp_path / "env.toml"
    env.write_text("[pipeline]\nk_removed = 5\n")
    explicit = tmp_path / "explicit.toml"
    explicit.write_text("[pipeline]\nk_removed = 3\n")
    monkeypatch.setenv("ROSVD_CONFIG", str(env))
    assert load_config().pipeline.k_removed == 5
    assert load_config(explicit).pipeline.k_removed == 3


@pytest.mark.parametrize(
    "text",
    ["[sim]\nbogus = 1", "[extra]\na = 1", "[sim]\nrows = 'x'", "[sim]\nrows = true", "[suite]\ntests = ['nope']",
     "[pipeline]\nk_removed = 64", "[suite]\nalpha = 2.0", "[ledger]\ndefault_tx_limit = -1", "not toml ==",
     "sim = 3", "[sim]\nquadrant_offsets = 1.0"],
)
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_explicit_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
