"""Generative models and agent cognitive state.

Two model families stand in for an LLM:

* :class:`HashModel` draws pseudo-random logits from a hash of the context, so
  its entropy (``concentration``) and its sensitivity to history (``window``,
  ``mixing``, ``position_resolution``) can be dialled precisely.
* :class:`NgramModel` is a count-based Markov model with additive smoothing.

Both follow the scikit-learn estimator conventions: constructor arguments are
stored verbatim, ``fit`` validates them and sets the trailing-underscore
attributes, and ``next_distribution`` is a pure function of the prefix.

Agent state is a value type. Every mutation returns a new :class:`AgentState`.
"""

from __future__ import annotations

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property, lru_cache
from typing import Protocol, Sequence

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, IngestionError

PAPER_STATIC_ENTROPY = 0.65  # bits/token of unmodified generation, static regime


# --------------------------------------------------------------------------
# vocabulary and distributions


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise IngestionError("vocabulary is empty")
        if len(set(self.tokens)) != len(self.tokens):
            raise IngestionError("vocabulary tokens must be unique")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    @cached_property
    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def encode(self, words: Sequence[str]) -> list[int]:
        try:
            return [self.index[w] for w in words]
        except KeyError as exc:
            raise DomainError(f"word {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        return cls(tuple(f"t{i}" for i in range(size)))

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        """Whitespace-tokenise ``text``; ids follow order of first appearance."""
        return cls(tuple(dict.fromkeys(text.split())))


def _vocab_size(vocab) -> int:
    if isinstance(vocab, Vocabulary):
        return vocab.size
    if isinstance(vocab, (int, np.integer)) and not isinstance(vocab, bool):
        return int(vocab)
    raise DomainError(f"expected a Vocabulary or a size, got {type(vocab).__name__}")


def check_distribution(probs, vocab_size: int | None = None, atol: float = 1e-9) -> np.ndarray:
    """Validate a probability vector and return it as float64."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("distribution must be a non-empty vector")
    if vocab_size is not None and p.size != vocab_size:
        raise DomainError(f"distribution has {p.size} entries, vocabulary has {vocab_size}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0:
        raise DomainError("distribution entries must be finite and non-negative")
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise DomainError(f"distribution sums to {total!r}")
    return p


def entropy_bits(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def _check_tokens(prefix, vocab_size: int) -> np.ndarray:
    arr = np.asarray(prefix, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= vocab_size):
        bad = arr[(arr < 0) | (arr >= vocab_size)][0]
        raise DomainError(f"token id {bad} outside vocabulary of size {vocab_size}")
    return arr


class GenerativeModel(Protocol):
    vocab_size_: int

    def next_distribution(self, prefix: Sequence[int]) -> np.ndarray: ...


def next_distribution(model: GenerativeModel, prefix: Sequence[int]) -> np.ndarray:
    return model.next_distribution(prefix)


# --------------------------------------------------------------------------
# hash model


@lru_cache(maxsize=16384)
def _uniforms(seed: bytes, digest: bytes, size: int) -> np.ndarray:
    raw = hashlib.shake_256(seed + digest).digest(8 * size)
    u = np.frombuffer(raw, dtype=">u8") / 2.0**64
    u.flags.writeable = False
    return u


class HashModel(BaseEstimator):
    """Seeded pseudo-random language model.

    logits_i = (1 - mixing) * concentration * u_local_i + mixing * concentration * u_global_i

    ``u_local`` is keyed by the last ``window`` tokens and ``u_global`` by the
    whole prefix. With ``position_resolution=B`` the local key also includes
    ``len(prefix) // B``, a coarse absolute position. That is what makes
    history truncation visible to a purely local (``mixing=0``) model, the way
    shifted positions change a transformer's output. ``None`` disables it.
    """

    def __init__(
        self,
        seed=b"hash-model",
        vocab=256,
        window: int = 8,
        mixing: float = 0.0,
        concentration: float = 40.0,
        position_resolution: int | None = None,
    ):
        self.seed = seed
        self.vocab = vocab
        self.window = window
        self.mixing = mixing
        self.concentration = concentration
        self.position_resolution = position_resolution

    def fit(self, X=None, y=None):
        if self.window < 1:
            raise DomainError("window must be at least 1")
        if not 0.0 <= self.mixing <= 1.0:
            raise DomainError("mixing must lie in [0, 1]")
        if not self.concentration > 0:
            raise DomainError("concentration must be positive")
        if self.position_resolution is not None and self.position_resolution < 1:
            raise DomainError("position_resolution must be positive or None")
        self.vocab_size_ = _vocab_size(self.vocab)
        seed = self.seed.encode() if isinstance(self.seed, str) else bytes(self.seed)
        self.seed_bytes_ = hashlib.sha256(b"hash-model" + seed).digest()
        return self

    def _local_key(self, arr: np.ndarray) -> bytes:
        h = hashlib.sha256(b"loc")
        h.update(arr[-self.window :].astype(">u4").tobytes())
        if self.position_resolution is not None:
            h.update(b"pos" + (arr.size // self.position_resolution).to_bytes(8, "big"))
        return h.digest()[:16]

    def _global_key(self, arr: np.ndarray) -> bytes:
        return hashlib.sha256(b"glb" + arr.astype(">u4").tobytes()).digest()[:16]

    def logits(self, prefix: Sequence[int]) -> np.ndarray:
        check_is_fitted(self, "vocab_size_")
        arr = _check_tokens(prefix, self.vocab_size_)
        out = np.zeros(self.vocab_size_)
        if self.mixing < 1.0:
            u = _uniforms(self.seed_bytes_, self._local_key(arr), self.vocab_size_)
            out += (1.0 - self.mixing) * self.concentration * u
        if self.mixing > 0.0:
            u = _uniforms(self.seed_bytes_, self._global_key(arr), self.vocab_size_)
            out += self.mixing * self.concentration * u
        return out

    def next_distribution(self, prefix: Sequence[int]) -> np.ndarray:
        z = self.logits(prefix)
        z = np.exp(z - z.max())
        return z / z.sum()


def make_hash_model(
    seed,
    vocab,
    window: int = 8,
    mixing: float = 0.0,
    concentration: float = 40.0,
    position_resolution: int | None = None,
) -> HashModel:
    return HashModel(seed, vocab, window, mixing, concentration, position_resolution).fit()


def calibrate_concentration(
    seed,
    vocab,
    target_entropy: float = PAPER_STATIC_ENTROPY,
    window: int = 8,
    n_contexts: int = 2000,
    rng_seed: int = 0,
    bounds: tuple[float, float] = (1e-3, 1e5),
) -> float:
    """Concentration at which the hash model's mean per-step entropy hits ``target_entropy``.

    Entropy of softmax(c * u) decreases monotonically in c, so the mean over a
    fixed set of contexts does too and a bracketing root finder suffices.
    """
    size = _vocab_size(vocab)
    if not 0.0 < target_entropy < np.log2(size):
        raise DomainError(f"target entropy must lie in (0, log2 |V|) = (0, {np.log2(size):.3f})")
    base = make_hash_model(seed, size, window=window, concentration=1.0)
    rng = np.random.default_rng(rng_seed)
    contexts = rng.integers(0, size, size=(n_contexts, window))
    # logits are linear in the concentration, so u can be computed once
    U = np.stack([base.logits(c) for c in contexts])

    def mean_entropy(log_c):
        z = np.exp(log_c) * U
        z = np.exp(z - z.max(axis=1, keepdims=True))
        P = z / z.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            H = -np.where(P > 0, P * np.log2(P), 0.0).sum(axis=1)
        return H.mean() - target_entropy

    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    return float(np.exp(brentq(mean_entropy, lo, hi, xtol=1e-10)))


# --------------------------------------------------------------------------
# n-gram model


class NgramModel(BaseEstimator):
    """Markov model of order ``order`` with additive smoothing.

    P(x | c) = (count(c + x) + alpha) / (count(c) + alpha * |V|), where ``c`` is the
    last ``order`` tokens. When the denominator is zero (unseen or too-short
    context with ``alpha=0``) the smoothed unigram distribution is used instead.
    """

    def __init__(self, order: int = 2, alpha: float = 1.0, vocab=None):
        self.order = order
        self.alpha = alpha
        self.vocab = vocab

    def fit(self, X, y=None):
        corpus = np.asarray(list(X), dtype=np.int64)
        if corpus.size == 0:
            raise IngestionError("cannot fit an n-gram model on an empty corpus")
        if self.order < 1:
            raise DomainError("order must be a positive integer")
        if self.alpha < 0:
            raise DomainError("alpha must be non-negative")
        if corpus.size <= self.order:
            raise IngestionError(f"corpus of {corpus.size} tokens too short for order {self.order}")
        if corpus.min() < 0:
            raise IngestionError("negative token id in corpus")
        size = int(corpus.max()) + 1 if self.vocab is None else _vocab_size(self.vocab)
        if corpus.max() >= size:
            raise IngestionError("corpus token outside vocabulary")

        n = self.order
        follow: dict[tuple, Counter] = defaultdict(Counter)
        seq = corpus.tolist()
        for i in range(len(seq) - n):
            follow[tuple(seq[i : i + n])][seq[i + n]] += 1
        self.table_ = {
            ctx: (
                np.fromiter(cnt.keys(), dtype=np.int64),
                np.fromiter(cnt.values(), dtype=np.float64),
                float(sum(cnt.values())),
            )
            for ctx, cnt in follow.items()
        }
        self.unigram_counts_ = np.bincount(corpus, minlength=size).astype(np.float64)
        self.vocab_size_ = size
        return self

    def count(self, context: Sequence[int], token: int | None = None) -> float:
        check_is_fitted(self, "table_")
        entry = self.table_.get(tuple(int(t) for t in context))
        if entry is None:
            return 0.0
        ids, counts, total = entry
        if token is None:
            return total
        hit = counts[ids == token]
        return float(hit[0]) if hit.size else 0.0

    def next_distribution(self, prefix: Sequence[int]) -> np.ndarray:
        check_is_fitted(self, "table_")
        size = self.vocab_size_
        arr = _check_tokens(prefix, size)
        entry = None
        if arr.size >= self.order:
            entry = self.table_.get(tuple(arr[arr.size - self.order :].tolist()))
        p = np.full(size, float(self.alpha))
        total = 0.0
        if entry is not None:
            ids, counts, total = entry
            p[ids] += counts
        denom = total + self.alpha * size
        if denom == 0.0:
            p = self.unigram_counts_ + self.alpha
            denom = p.sum()
        return p / denom


def make_ngram_model(corpus, order: int, alpha: float = 1.0, vocab=None) -> NgramModel:
    return NgramModel(order=order, alpha=alpha, vocab=vocab).fit(corpus)


def synthetic_corpus(
    vocab_size: int, length: int, seed: int = 0, zipf_exponent: float = 1.1, branching: int = 6
) -> list[int]:
    """Corpus from a sparse random Markov chain with Zipf-like token popularity.

    Each token has ``branching`` likely successors drawn by popularity, which
    gives the corpus both a skewed unigram profile and real bigram structure.
    """
    rng = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, vocab_size + 1) ** zipf_exponent
    pop /= pop.sum()
    succ = np.stack([rng.choice(vocab_size, size=branching, replace=False, p=pop) for _ in range(vocab_size)])
    weights = rng.dirichlet(np.ones(branching), size=vocab_size)
    out = [int(rng.choice(vocab_size, p=pop))]
    jumps = rng.random(length)
    for i in range(1, length):
        if jumps[i] < 0.1:
            out.append(int(rng.choice(vocab_size, p=pop)))
        else:
            prev = out[-1]
            out.append(int(succ[prev, rng.choice(branching, p=weights[prev])]))
    return out


# --------------------------------------------------------------------------
# agent state


class Role(str, Enum):
    USER = "user"
    AGENT = "agent"
    SYSTEM = "system"


@dataclass(frozen=True)
class Turn:
    role: Role
    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise DomainError("a turn must contain at least one token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class AgentState:
    """Public dialogue history plus private memory, plus the response being drafted.

    The prefix the model sees is public || private || draft. ``draft`` holds the
    tokens of the in-progress response so that multi-block messages keep
    conditioning on everything already generated.
    """

    public_history: tuple[Turn, ...] = ()
    private_memory: tuple[Turn, ...] = ()
    draft: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "public_history", tuple(self.public_history))
        object.__setattr__(self, "private_memory", tuple(self.private_memory))
        object.__setattr__(self, "draft", tuple(int(t) for t in self.draft))

    def prefix(self) -> tuple[int, ...]:
        out: list[int] = []
        for turn in self.public_history:
            out.extend(turn.tokens)
        for turn in self.private_memory:
            out.extend(turn.tokens)
        out.extend(self.draft)
        return tuple(out)

    def extend_draft(self, tokens: Sequence[int]) -> "AgentState":
        return replace(self, draft=self.draft + tuple(int(t) for t in tokens))

    def commit_draft(self, role: Role = Role.AGENT) -> "AgentState":
        """Close the in-progress response as a public turn."""
        if not self.draft:
            return self
        return replace(
            self,
            public_history=self.public_history + (Turn(role, self.draft),),
            draft=(),
        )


def prefix(state: AgentState) -> tuple[int, ...]:
    return state.prefix()


def truncate_history(state: AgentState, delta: int) -> AgentState:
    """Drop the ``delta`` oldest public turns."""
    if delta < 0 or delta > len(state.public_history):
        raise DomainError(
            f"cannot truncate {delta} turns from a history of {len(state.public_history)}"
        )
    return replace(state, public_history=state.public_history[delta:])


def append_private_summary(state: AgentState, summary: Turn) -> AgentState:
    if not isinstance(summary, Turn):
        summary = Turn(Role.SYSTEM, tuple(summary))
    return replace(state, private_memory=state.private_memory + (summary,))


@dataclass(frozen=True)
class MemoryPool:
    chunks: tuple[tuple[int, tuple[int, ...]], ...]

    def __post_init__(self):
        chunks = tuple((int(cid), tuple(int(t) for t in toks)) for cid, toks in self.chunks)
        ids = [cid for cid, _ in chunks]
        if len(set(ids)) != len(ids):
            raise IngestionError("memory pool chunk ids must be unique")
        object.__setattr__(self, "chunks", chunks)

    @property
    def total_tokens(self) -> int:
        return sum(len(toks) for _, toks in self.chunks)

    def __len__(self):
        return len(self.chunks)

    @cached_property
    def _token_sets(self):
        return [frozenset(toks) for _, toks in self.chunks]

    @classmethod
    def random(cls, vocab_size: int, total_tokens: int = 10_000, n_chunks: int = 100, seed: int = 0):
        rng = np.random.default_rng(seed)
        sizes = np.full(n_chunks, total_tokens // n_chunks)
        sizes[: total_tokens % n_chunks] += 1
        return cls(tuple((i, tuple(rng.integers(0, vocab_size, size=n).tolist())) for i, n in enumerate(sizes)))


def inject_retrieval(
    state: AgentState, pool: MemoryPool, query: Sequence[int], n_chunks: int
) -> AgentState:
    """Append the ``n_chunks`` chunks with the largest query overlap to private memory.

    Overlap is the number of distinct query tokens present in the chunk; ties
    go to the smaller chunk id.
    """
    if not pool.chunks:
        raise DomainError("memory pool is empty")
    if not 1 <= n_chunks <= len(pool.chunks):
        raise DomainError(f"cannot retrieve {n_chunks} chunks from a pool of {len(pool.chunks)}")
    q = frozenset(int(t) for t in query)
    scored = sorted(
        ((len(q & toks), cid, i) for i, ((cid, _), toks) in enumerate(zip(pool.chunks, pool._token_sets))),
        key=lambda item: (-item[0], item[1]),
    )
    picked = [Turn(Role.SYSTEM, pool.chunks[i][1]) for _, _, i in scored[:n_chunks]]
    return replace(state, private_memory=state.private_memory + tuple(picked))
