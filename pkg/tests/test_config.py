import json

import pytest

from wedas.cli import main
from wedas.config import DEFAULTS, CliConfig
from wedas.errors import ConfigError


def test_defaults(capsys, monkeypatch):
    for var in ("SERPER_API_KEY", "LLM_API_KEY", "LLM_BASE_URL"):
        monkeypatch.delenv(var, raising=False)
    assert main(["config-check"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(json.dumps(DEFAULTS))


def test_precedence_flags_env_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[llm]\nbase_url = "http://file"\nmodel = "file-model"\n[probe]\nmax_iterations = 2\n')
    cfg = CliConfig.load(path, env={})
    assert cfg.get("llm", "base_url") == "http://file" and cfg.agent_config().budget.max_iterations == 2
    cfg = CliConfig.load(path, env={"LLM_BASE_URL": "http://env"})
    assert cfg.get("llm", "base_url") == "http://env"
    cfg = CliConfig.load(path, env={"LLM_BASE_URL": "http://env"},
                         flags={"llm": {"model": "flag-model", "base_url": None}, "probe": {"max_iterations": 0}})
    assert cfg.get("llm", "model") == "flag-model" and cfg.get("llm", "base_url") == "http://env"
    assert cfg.agent_config().budget.max_iterations == 0


def test_json_config_and_secret_redaction(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"search": {"max_retries": 5}}))
    cfg = CliConfig.load(path, env={"SERPER_API_KEY": "sk-secret", "LLM_API_KEY": "k2"})
    dumped = cfg.dumps()
    assert "sk-secret" not in dumped and "k2" not in dumped and '"***"' in dumped
    assert cfg.get("search", "max_retries") == 5


@pytest.mark.parametrize("body", ['[probe]\nmax_iteration = 2\n', '[nonsense]\na = 1\n', 'x = ', '[probe]\nmax_iterations = -1\n'])
def test_bad_config_rejected(tmp_path, body, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(body)
    with pytest.raises(ConfigError):
        CliConfig.load(path, env={})
    assert main(["config-check", "--config", str(path)]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_verbose_prints_effective_config(capsys):
    assert main(["probe", "anything", "-T", "0", "--verbose"]) == 0
    err = capsys.readouterr().err
    assert "effective config:" in err and '"max_iterations": 0' in err


def test_live_model_requires_name():
    cfg = CliConfig.load(env={"LLM_API_KEY": "k", "LLM_BASE_URL": "http://x"})
    with pytest.raises(ConfigError, match="--model"):
        cfg.gateways()
    actor, evaluator = CliConfig.load(env={"LLM_API_KEY": "k", "LLM_BASE_URL": "http://x"},
                                      flags={"llm": {"model": "m", "evaluator_model": "e"}}).gateways()
    assert actor is not evaluator
