"""Runtime configuration from a JSON file and environment variables.

Environment always wins over the file. Every knob has a default that works
offline: without an API key the deterministic mock backend is selected, so
a fresh checkout can ingest and analyze without network access.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .embeddings import HashEmbeddingBackend, HttpEmbeddingBackend
from .gateway import HttpChatBackend, ScriptedLlmBackend, default_mock_responder
from .ingestion import DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE
from .prompts import DEFAULT_ANSWER_LENGTH
from .retrieval import DEFAULT_BUDGET_TOKENS, DEFAULT_TOP_K

ENV_PREFIX = "TCFDLENS_"


@dataclass
class AppConfig:
    workspace: str = "workspace"
    llm_base_url: str = ""
    llm_model: str = "gpt-4o-mini"
    llm_api_key: str = ""
    embed_base_url: str = ""
    embed_model: str = "text-embedding-3-small"
    embed_api_key: str = ""
    embed_dim: int = 64
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_overlap: int = DEFAULT_CHUNK_OVERLAP
    top_k: int = DEFAULT_TOP_K
    budget_tokens: int = DEFAULT_BUDGET_TOKENS
    answer_length: int = DEFAULT_ANSWER_LENGTH
    api_key: str = ""          # static key required by the service when set
    mock_script: str = ""      # canned responses for the scripted backend
    max_workers: int = 1
    max_jobs: int = 8

    @classmethod
    def load(cls, config_file: str | Path | None = None, env: dict | None = None) -> "AppConfig":
        env = os.environ if env is None else env
        values: dict = {}
        if config_file:
            values.update(json.loads(Path(config_file).read_text("utf-8")))
        for f in fields(cls):
            env_name = ENV_PREFIX + f.name.upper()
            if env_name in env:
                values[f.name] = env[env_name]
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for name, value in values.items():
            if name not in known:
                continue
            if known[name] == "int":
                value = int(value)
            kwargs[name] = value
        return cls(**kwargs)

    def make_llm_backend(self):
        if self.llm_api_key and self.llm_base_url:
            return HttpChatBackend(self.llm_base_url, api_key=self.llm_api_key)
        if self.mock_script:
            return ScriptedLlmBackend.from_file(self.mock_script, default=default_mock_responder)
        return ScriptedLlmBackend(default=default_mock_responder)

    def make_embedder(self):
        if self.embed_api_key and self.embed_base_url:
            return HttpEmbeddingBackend(self.embed_base_url, self.embed_model, api_key=self.embed_api_key)
        return HashEmbeddingBackend(dim=self.embed_dim)

    def using_mock(self) -> bool:
        return not (self.llm_api_key and self.llm_base_url)
