"""File formats: configuration, stego-text records, agent states, vocabularies,
memory pools and scenario documents."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .cognitive import AgentState, MemoryPool, Turn, Vocabulary
from .config import MappingRule, SamplingFunction, SecretKey, SecurityParams, StegoConfig
from .exceptions import ConfigError, FramingError, IngestionError

RECORD_FORMAT = "acfstego/stego-text"
RECORD_VERSION = 1


# --------------------------------------------------------------------------
# configuration


def config_to_dict(cfg: StegoConfig) -> dict:
    return {
        "key_hex": cfg.sk.hex(),
        "session_id": cfg.session_id.decode("utf-8", errors="surrogateescape"),
        "k": cfg.sec.k,
        "margin_floor": cfg.sec.margin,
        "block_len": cfg.sec.block_len,
        "mode": cfg.sec.mode.value,
        "rule": {"scheme": cfg.rule.scheme.value, "complement": cfg.rule.complement},
        "f": {"kind": cfg.f.kind},
    }


def config_from_dict(data: dict) -> StegoConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    missing = {"key_hex", "k"} - set(data)
    if missing:
        raise ConfigError(f"configuration lacks {sorted(missing)}")
    rule = data.get("rule") or {}
    f = data.get("f") or {}
    sec = SecurityParams(
        k=data["k"],
        margin=data.get("margin_floor"),
        block_len=data.get("block_len"),
        mode=data.get("mode", "block"),
    )
    return StegoConfig(
        sk=SecretKey.from_hex(str(data["key_hex"])),
        sec=sec,
        f=SamplingFunction(f.get("kind", "identity")),
        rule=MappingRule(rule.get("scheme", "prf-low-bit"), bool(rule.get("complement", False))),
        session_id=str(data.get("session_id", "")).encode("utf-8", errors="surrogateescape"),
    )


def dump_config(cfg: StegoConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def save_config(cfg: StegoConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def load_config(path) -> StegoConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed configuration: {exc}") from None
    return config_from_dict(data)


# --------------------------------------------------------------------------
# stego-text interchange record


def make_record(session_id: bytes, tokens, block_boundaries, vocab: Vocabulary | None = None) -> dict:
    rec = {
        "format": RECORD_FORMAT,
        "version": RECORD_VERSION,
        "session_id": session_id.decode("utf-8", errors="surrogateescape"),
        "tokens": [int(t) for t in tokens],
        "block_boundaries": [int(b) for b in block_boundaries],
    }
    if vocab is not None:
        rec["token_strings"] = vocab.decode(rec["tokens"])
    return rec


def dump_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True) + "\n"


def parse_record(data: Any) -> dict:
    if not isinstance(data, dict) or data.get("format") != RECORD_FORMAT:
        raise FramingError("not a stego-text record")
    for key in ("session_id", "tokens", "block_boundaries"):
        if key not in data:
            raise FramingError(f"record lacks {key!r}")
    tokens = data["tokens"]
    if not all(isinstance(t, int) and not isinstance(t, bool) for t in tokens):
        raise FramingError("record tokens must be integers")
    return data


def load_record(path) -> dict:
    try:
        return parse_record(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise FramingError(f"{path}: malformed record: {exc}") from None


# --------------------------------------------------------------------------
# agent state


def state_to_dict(state: AgentState) -> dict:
    def turns(ts):
        return [{"role": t.role.value, "tokens": list(t.tokens)} for t in ts]

    return {
        "public_history": turns(state.public_history),
        "private_memory": turns(state.private_memory),
    }


def state_from_dict(data: dict) -> AgentState:
    def turns(items):
        return tuple(Turn(item["role"], tuple(item["tokens"])) for item in items or ())

    try:
        return AgentState(turns(data.get("public_history")), turns(data.get("private_memory")))
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"malformed agent state: {exc}") from None


def load_state(path) -> AgentState:
    return state_from_dict(json.loads(Path(path).read_text()))


def save_state(state: AgentState, path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state)) + "\n")


# --------------------------------------------------------------------------
# corpus, vocabulary and memory pool


def tokenize_corpus(text: str, vocab: Vocabulary | None = None) -> tuple[Vocabulary, list[int]]:
    """Whitespace tokenisation; builds the vocabulary when none is given."""
    words = text.split()
    if not words:
        raise IngestionError("corpus is empty")
    vocab = vocab or Vocabulary.from_text(text)
    return vocab, vocab.encode(words)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text("".join(tok + "\n" for tok in vocab.tokens))


def load_vocabulary(path) -> Vocabulary:
    lines = Path(path).read_text().splitlines()
    return Vocabulary(tuple(lines))


def save_pool(pool: MemoryPool, path) -> None:
    with open(path, "w") as fh:
        for cid, toks in pool.chunks:
            fh.write(json.dumps({"id": cid, "tokens": list(toks)}) + "\n")


def load_pool(path) -> MemoryPool:
    chunks = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            item = json.loads(line)
            chunks.append((item["id"], tuple(item["tokens"])))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IngestionError(f"{path}:{n}: malformed chunk: {exc}") from None
    if not chunks:
        raise IngestionError(f"{path}: memory pool is empty")
    return MemoryPool(tuple(chunks))


# --------------------------------------------------------------------------
# scenario documents


def bundled_scenarios() -> list[str]:
    root = resources.files("acfstego") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario_documents(ref) -> list[dict]:
    """Scenario documents from a YAML path or the name of a bundled scenario file."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
    elif str(ref) in bundled_scenarios():
        text = (resources.files("acfstego") / "scenarios" / f"{ref}.yaml").read_text()
    else:
        raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")
    try:
        docs = [d for d in yaml.safe_load_all(text) if d]
    except yaml.YAMLError as exc:
        raise ConfigError(f"{ref}: malformed scenario file: {exc}") from None
    if not all(isinstance(d, dict) for d in docs):
        raise ConfigError(f"{ref}: each scenario document must be a mapping")
    return docs
