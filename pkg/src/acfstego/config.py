"""Pre-shared steganographic configuration, keyed PRF, shared stream and partition.

Everything here is a pure function of the key material and the session id.
Nothing accepts a prefix, a model or an agent state, which is what lets the
decoder work without tracking the sender's context.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np

from .exceptions import (
    CalibrationError,
    ConfigError,
    DegenerateVocabularyError,
    DomainError,
    StreamExhaustedError,
)

PRG_DOMAIN = b"prg"
PARTITION_DOMAIN = b"part"
MIN_KEY_BYTES = 16
MAX_KEY_BYTES = 64
COUNTER_LIMIT = 2**63
MARGIN_MIN = 0.01  # calibration floor; also the smallest margin accepted in a config
MARGIN_MAX = 0.25  # p(1 - p) never exceeds 1/4


def prf64(key, data: bytes) -> int:
    """First 8 bytes (big-endian) of SHA-256(key || data).

    This is the normative primitive: both parties must agree on it bit for bit.
    ``key`` may be a :class:`SecretKey` or raw bytes.
    """
    raw = key.value if isinstance(key, SecretKey) else bytes(key)
    if not raw:
        raise ConfigError("PRF key must be non-empty")
    return int.from_bytes(hashlib.sha256(raw + bytes(data)).digest()[:8], "big")


@dataclass(frozen=True)
class SecretKey:
    value: bytes

    def __post_init__(self):
        if not isinstance(self.value, (bytes, bytearray)):
            raise ConfigError("secret key must be bytes")
        object.__setattr__(self, "value", bytes(self.value))
        if not MIN_KEY_BYTES <= len(self.value) <= MAX_KEY_BYTES:
            raise ConfigError(
                f"secret key must be {MIN_KEY_BYTES}-{MAX_KEY_BYTES} bytes, got {len(self.value)}"
            )

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise ConfigError(f"invalid key hex: {exc}") from None

    @classmethod
    def generate(cls, n_bytes: int = 32) -> "SecretKey":
        import secrets

        return cls(secrets.token_bytes(n_bytes))

    def hex(self) -> str:
        return self.value.hex()

    def __repr__(self):
        return "SecretKey(<redacted>)"


class Scheme(str, Enum):
    PRF_LOW_BIT = "prf-low-bit"


@dataclass(frozen=True)
class MappingRule:
    scheme: Scheme = Scheme.PRF_LOW_BIT
    complement: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        except ValueError:
            raise ConfigError(f"unknown mapping scheme {self.scheme!r}") from None


@dataclass(frozen=True)
class SamplingFunction:
    """Map from [0, 1] to [0, 1] applied to the shared draws inside the statistic."""

    kind: str = "identity"

    _KINDS = ("identity",)

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ConfigError(f"unknown sampling function {self.kind!r}")

    def __call__(self, r):
        return r


class Mode(str, Enum):
    BLOCK = "block"
    WHOLE_SEQUENCE = "whole-sequence"


def t_min(k: int, margin: float) -> int:
    """Smallest block length T with exp(-2 T margin^2) <= 2^-k."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"security parameter k must be a positive integer, got {k!r}")
    if not (0.0 < margin <= MARGIN_MAX):
        raise CalibrationError(f"margin must lie in (0, {MARGIN_MAX}], got {margin!r}")
    return math.ceil(int(k) * math.log(2) / (2.0 * margin * margin))


@dataclass(frozen=True)
class SecurityParams:
    """Security parameter ``k`` plus the operational margin and block sizing.

    ``block_len`` defaults to ``t_min(k, margin)``. ``margin`` may be left
    unset until calibration has been run; anything that needs a block length
    then raises :class:`CalibrationError`.
    """

    k: int
    margin: float | None = None
    block_len: int | None = None
    mode: Mode = Mode.BLOCK

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        try:
            object.__setattr__(self, "mode", Mode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown framing mode {self.mode!r}") from None
        if self.margin is not None:
            if not (0.0 < self.margin <= MARGIN_MAX):
                raise CalibrationError(f"margin must lie in (0, {MARGIN_MAX}], got {self.margin}")
            object.__setattr__(self, "margin", float(self.margin))
        if self.block_len is not None:
            if self.block_len < 1:
                raise ConfigError("block_len must be positive")
            if self.margin is None:
                raise ConfigError("block_len given without a calibrated margin")
            if self.mode is Mode.BLOCK and self.block_len < self.min_tokens:
                raise ConfigError(
                    f"block_len {self.block_len} below t_min={self.min_tokens} for k={self.k}"
                )
            object.__setattr__(self, "block_len", int(self.block_len))

    @property
    def p_e(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def calibrated(self) -> bool:
        return self.margin is not None

    @property
    def min_tokens(self) -> int:
        if self.margin is None:
            raise CalibrationError("margin not calibrated; run calibration first")
        return t_min(self.k, self.margin)

    @property
    def tokens_per_bit(self) -> int:
        return self.block_len if self.block_len is not None else self.min_tokens


@dataclass(frozen=True)
class StegoConfig:
    """The shared configuration: key, sampling function, security params, mapping rule."""

    sk: SecretKey
    sec: SecurityParams
    f: SamplingFunction = field(default_factory=SamplingFunction)
    rule: MappingRule = field(default_factory=MappingRule)
    session_id: bytes = b""

    def __post_init__(self):
        if isinstance(self.session_id, str):
            object.__setattr__(self, "session_id", self.session_id.encode())

    def stream(self, counter: int = 0) -> "RandomStream":
        """Fresh cursor over this session's shared randomness."""
        return RandomStream(self.sk, self.session_id, counter)

    def with_session(self, session_id) -> "StegoConfig":
        return replace(self, session_id=session_id)

    def with_margin(self, margin: float, block_len: int | None = None) -> "StegoConfig":
        return replace(self, sec=replace(self.sec, margin=margin, block_len=block_len))

    def with_k(self, k: int) -> "StegoConfig":
        return replace(self, sec=replace(self.sec, k=k, block_len=None))


@dataclass
class RandomStream:
    """Sequential cursor over r_t = prf64(sk, "prg" || session || t) / 2^64.

    Mutable and single-owner; use :meth:`clone` to replay from the current position.
    """

    sk: SecretKey
    session_id: bytes = b""
    counter: int = 0

    def __post_init__(self):
        if isinstance(self.session_id, str):
            self.session_id = self.session_id.encode()
        if self.counter < 0:
            raise DomainError("stream counter must be non-negative")

    def next(self) -> float:
        if self.counter >= COUNTER_LIMIT:
            raise StreamExhaustedError("random stream counter overflow")
        value = prf64(self.sk, PRG_DOMAIN + self.session_id + self.counter.to_bytes(8, "big"))
        self.counter += 1
        return value / 2.0**64

    def take(self, n: int) -> np.ndarray:
        return np.array([self.next() for _ in range(n)], dtype=np.float64)

    def clone(self) -> "RandomStream":
        return RandomStream(self.sk, self.session_id, self.counter)


def stream_next(stream: RandomStream) -> float:
    return stream.next()


class PartitionMap:
    """Keyed two-colouring of the vocabulary. Immutable."""

    def __init__(self, labels):
        labels = np.asarray(labels, dtype=np.uint8).copy()
        if labels.ndim != 1 or labels.size < 2:
            raise DegenerateVocabularyError("partition needs at least two tokens")
        if np.any(labels > 1):
            raise DomainError("partition labels must be bits")
        labels.flags.writeable = False
        self.labels = labels

    @property
    def vocab_size(self) -> int:
        return int(self.labels.size)

    def __len__(self):
        return self.vocab_size

    def __getitem__(self, token) -> int:
        return partition_label(token, self)

    def __eq__(self, other):
        return isinstance(other, PartitionMap) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __repr__(self):
        return f"PartitionMap(vocab_size={self.vocab_size}, ones={int(self.labels.sum())})"

    def subset(self, s: int) -> np.ndarray:
        """Token ids labelled ``s``, ascending."""
        return np.flatnonzero(self.labels == s)

    @cached_property
    def _orders(self):
        ones = self.subset(1)
        zeros = self.subset(0)
        orders = (np.concatenate([zeros, ones]), np.concatenate([ones, zeros]))
        for o in orders:
            o.flags.writeable = False
        return orders

    def order(self, s: int) -> np.ndarray:
        """Permutation placing the subset labelled ``s`` first, each half ascending."""
        return self._orders[int(s)]


def derive_partition(vocab_size: int, cfg: StegoConfig) -> PartitionMap:
    if vocab_size < 2:
        raise DegenerateVocabularyError(
            f"vocabulary of size {vocab_size} admits no partition channel"
        )
    flip = 1 if cfg.rule.complement else 0
    labels = [
        (prf64(cfg.sk, PARTITION_DOMAIN + i.to_bytes(4, "big")) & 1) ^ flip
        for i in range(vocab_size)
    ]
    return PartitionMap(labels)


def partition_label(token: int, pmap: PartitionMap) -> int:
    if not 0 <= token < pmap.labels.size:
        raise DomainError(f"token {token} outside vocabulary of size {pmap.labels.size}")
    return int(pmap.labels[token])
