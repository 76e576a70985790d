"""Static index of every agent code in the ecosystem."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


@dataclass(frozen=True)
class AgentInfo:
    code: str
    name: str
    domain: str
    executable: bool


@lru_cache(maxsize=1)
def _load() -> dict:
    text = resources.files("govkernel.data").joinpath("agent_catalog.json").read_text("utf-8")
    return json.loads(text)


def agent_index() -> list[AgentInfo]:
    return [AgentInfo(a["code"], a["name"], a["domain"], a["executable"]) for a in _load()["agents"]]


def domains() -> dict[str, str]:
    return {d["letter"]: d["name"] for d in _load()["domains"]}


def lookup(code: str) -> AgentInfo:
    for a in agent_index():
        if a.code == code:
            return a
    raise KeyError(code)


def executable_codes() -> list[str]:
    return [a.code for a in agent_index() if a.executable]
