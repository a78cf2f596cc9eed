"""Effective runtime configuration: defaults < config file < environment < flags.

Config files are TOML or JSON with the sections below; unknown sections or
keys are rejected so typos do not silently fall back to defaults.

    [agent]     tool_mode, max_turns, max_tool_calls_per_turn, context_char_budget
    [decoding]  temperature, top_p, min_p, top_k, max_tokens
    [probe]     max_iterations, max_candidates_per_iteration, probe_k, workers
    [search]    endpoint, api_key, local_corpus, cache_dir, max_retries, backoff
    [llm]       base_url, api_key, model, evaluator_model, supports_extended_sampling,
                requests_per_minute, max_retries, backoff, timeout, scripted
    [bench]     workers
"""
from __future__ import annotations

import copy
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .agent import AgentConfig, AgentLimits
from .errors import ConfigError
from .llm_gateway import DecodingConfig, LLMGateway, OpenAIChatBackend, ScriptedBackend
from .probe import ProbeBudget
from .search_env import SERPER_ENDPOINT, LocalCorpus, LocalSearchBackend, SearchBackend, SerperBackend

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS: dict[str, dict[str, Any]] = {
    "agent": {
        "tool_mode": "wedas",
        "max_turns": AgentLimits().max_turns,
        "max_tool_calls_per_turn": AgentLimits().max_tool_calls_per_turn,
        "context_char_budget": AgentConfig().context_char_budget,
    },
    "decoding": DecodingConfig().to_dict(),
    "probe": {
        "max_iterations": ProbeBudget().max_iterations,
        "max_candidates_per_iteration": ProbeBudget().max_candidates_per_iteration,
        "probe_k": 10,
        "workers": 1,
    },
    "search": {
        "endpoint": SERPER_ENDPOINT,
        "api_key": None,
        "local_corpus": None,
        "cache_dir": None,
        "max_retries": 3,
        "backoff": 1.0,
    },
    "llm": {
        "base_url": None,
        "api_key": None,
        "model": None,
        "evaluator_model": None,
        "supports_extended_sampling": False,
        "requests_per_minute": None,
        "max_retries": 4,
        "backoff": 1.0,
        "timeout": 600.0,
        "scripted": None,
    },
    "bench": {"workers": 1},
}

ENV_VARS = {
    "SERPER_API_KEY": ("search", "api_key"),
    "LLM_API_KEY": ("llm", "api_key"),
    "LLM_BASE_URL": ("llm", "base_url"),
}
SECRET_KEYS = {("search", "api_key"), ("llm", "api_key")}


def read_config_file(path: str | os.PathLike[str]) -> dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        if p.suffix.lower() == ".json":
            data = json.loads(p.read_text(encoding="utf-8"))
        else:
            data = tomllib.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a table/object at the top level")
    return data


def _merge(base: dict[str, dict[str, Any]], layer: Mapping[str, Any], source: str) -> None:
    for section, values in layer.items():
        if section not in base:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {sorted(base)}")
        if not isinstance(values, Mapping):
            raise ConfigError(f"{source}: section [{section}] must be a table")
        for key, value in values.items():
            if key not in base[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}; expected one of {sorted(base[section])}")
            base[section][key] = value


@dataclass
class CliConfig:
    values: dict[str, dict[str, Any]]

    @classmethod
    def load(
        cls,
        path: str | os.PathLike[str] | None = None,
        env: Mapping[str, str] | None = None,
        flags: Mapping[str, Mapping[str, Any]] | None = None,
    ) -> "CliConfig":
        values = copy.deepcopy(DEFAULTS)
        if path is not None:
            _merge(values, read_config_file(path), str(path))
        env = os.environ if env is None else env
        for var, (section, key) in ENV_VARS.items():
            if env.get(var):
                values[section][key] = env[var]
        if flags:
            _merge(values, {s: {k: v for k, v in kv.items() if v is not None} for s, kv in flags.items()}, "flags")
        cfg = cls(values)
        cfg.agent_config()  # validate early
        return cfg

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def redacted(self) -> dict[str, dict[str, Any]]:
        out = copy.deepcopy(self.values)
        for section, key in SECRET_KEYS:
            if out[section][key]:
                out[section][key] = "***"
        return out

    def dumps(self) -> str:
        return json.dumps(self.redacted(), indent=2, sort_keys=True)

    # -- typed views -------------------------------------------------------------

    def decoding(self) -> DecodingConfig:
        try:
            return DecodingConfig.from_dict(self.values["decoding"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [decoding]: {exc}") from exc

    def agent_config(self) -> AgentConfig:
        a, p = self.values["agent"], self.values["probe"]
        try:
            return AgentConfig(
                tool_mode=a["tool_mode"],
                budget=ProbeBudget(int(p["max_iterations"]), int(p["max_candidates_per_iteration"])),
                limits=AgentLimits(int(a["max_turns"]), int(a["max_tool_calls_per_turn"])),
                decoding=self.decoding(),
                context_char_budget=int(a["context_char_budget"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid agent/probe settings: {exc}") from exc

    def search_backend(self) -> SearchBackend:
        s = self.values["search"]
        if s["local_corpus"]:
            path = Path(s["local_corpus"])
            if not path.is_file():
                raise ConfigError(f"local corpus {path} does not exist")
            return LocalSearchBackend(LocalCorpus.from_jsonl(path))
        if not s["api_key"]:
            raise ConfigError(
                "SERPER_API_KEY is not set; export it for live search or pass --local-corpus FILE to run offline"
            )
        return SerperBackend(
            s["api_key"], s["endpoint"], max_retries=int(s["max_retries"]), backoff=float(s["backoff"]),
            cache_dir=s["cache_dir"],
        )

    def gateways(self) -> tuple[LLMGateway, LLMGateway]:
        """(actor, evaluator) gateways. A scripted fixture serves both roles."""
        llm = self.values["llm"]
        if llm["scripted"]:
            path = Path(llm["scripted"])
            if not path.is_file():
                raise ConfigError(f"scripted LLM fixture {path} does not exist")
            gw = LLMGateway(ScriptedBackend.from_jsonl(path))
            return gw, gw
        missing = [name for name, key in (("LLM_BASE_URL", "base_url"), ("LLM_API_KEY", "api_key")) if not llm[key]]
        if missing:
            raise ConfigError(
                f"{' and '.join(missing)} not set; export for a live model or pass --scripted-llm FILE to run offline"
            )
        if not llm["model"]:
            raise ConfigError("no model name configured; set llm.model in the config file or pass --model")

        def backend(model: str) -> OpenAIChatBackend:
            return OpenAIChatBackend(
                llm["base_url"], llm["api_key"], model,
                supports_extended_sampling=bool(llm["supports_extended_sampling"]),
                max_retries=int(llm["max_retries"]), backoff=float(llm["backoff"]), timeout=float(llm["timeout"]),
                requests_per_minute=llm["requests_per_minute"],
            )

        actor = LLMGateway(backend(llm["model"]))
        ev_model = llm["evaluator_model"] or llm["model"]
        evaluator = actor if ev_model == llm["model"] else LLMGateway(backend(ev_model))
        return actor, evaluator
