"""Zero-distortion permutation encoder and model-free hypothesis-test decoder.

Encoding a bit ``s`` reorders the vocabulary so that the tokens labelled ``s``
occupy the front of the cumulative distribution, then inverse-CDF samples with
the shared draw ``r``. Over uniform ``r`` every token keeps its probability, but
small ``r`` values now favour the ``s`` side. The decoder replays the draws and
sums ``f(r)`` for tokens labelled 0 and ``f(1 - r)`` for tokens labelled 1; the
sum drifts above or below T/2 depending on the embedded bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cognitive import AgentState, GenerativeModel, check_distribution, entropy_bits
from .config import (
    MARGIN_MIN,
    Mode,
    PartitionMap,
    RandomStream,
    StegoConfig,
)
from .exceptions import CalibrationError, DomainError, FramingError


def compensated_cumsum(x: np.ndarray) -> np.ndarray:
    """Cumulative sum with the per-step rounding errors added back (TwoSum)."""
    s = np.cumsum(x)
    prev = np.concatenate(([0.0], s[:-1]))
    bb = s - prev
    err = (prev - (s - bb)) + (x - bb)
    return s + np.cumsum(err)


def _search(cum: np.ndarray, p: np.ndarray, r: float) -> int:
    idx = int(np.searchsorted(cum, r, side="right"))
    if idx >= cum.size:
        # r beyond the rounded total: fall back to the last token carrying mass
        idx = int(np.flatnonzero(p > 0)[-1])
    return idx


def _inverse_cdf(probs: np.ndarray, order: np.ndarray | None, r: float) -> int:
    p = probs if order is None else probs[order]
    idx = _search(compensated_cumsum(p), p, r)
    return int(idx if order is None else order[idx])


def _check_r(r: float) -> float:
    if not 0.0 <= r < 1.0:
        raise DomainError(f"shared draw must lie in [0, 1), got {r!r}")
    return float(r)


def _check_bit(s) -> int:
    if s not in (0, 1):
        raise DomainError(f"secret bit must be 0 or 1, got {s!r}")
    return int(s)


def permuted_cdf_sample(dist, pmap: PartitionMap, s: int, r: float) -> int:
    """Inverse-CDF sample after moving the tokens labelled ``s`` to the front."""
    probs = check_distribution(dist, pmap.vocab_size)
    return _inverse_cdf(probs, pmap.order(_check_bit(s)), _check_r(r))


def permuted_cdf_sample_batch(dist, pmap: PartitionMap, s: int, r) -> np.ndarray:
    """Vectorised :func:`permuted_cdf_sample` over an array of draws on one distribution."""
    probs = check_distribution(dist, pmap.vocab_size)
    r = np.asarray(r, dtype=np.float64)
    if r.size and (r.min() < 0.0 or r.max() >= 1.0):
        raise DomainError("shared draws must lie in [0, 1)")
    order = pmap.order(_check_bit(s))
    p = probs[order]
    cum = compensated_cumsum(p)
    idx = np.searchsorted(cum, r, side="right")
    idx[idx >= cum.size] = np.flatnonzero(p > 0)[-1]
    return order[idx]


def leading_mass(dist, pmap: PartitionMap, s: int = 0) -> float:
    """Probability mass of the subset labelled ``s``."""
    p = np.asarray(dist, dtype=np.float64)
    return float(p[pmap.labels == s].sum())


@dataclass
class StegoTrace:
    tokens: list[int] = field(default_factory=list)
    r_values: list[float] = field(default_factory=list)
    embedded_bits: list[int] = field(default_factory=list)
    block_boundaries: list[int] = field(default_factory=list)
    entropies: list[float] = field(default_factory=list)


@dataclass
class DecodeResult:
    bits: list[int]
    statistics: list[float]
    thresholds: list[float]
    error_bound: float


def _generate(model, context: list[int], n: int, pick, stream: RandomStream, trace: StegoTrace | None):
    out = []
    for _ in range(n):
        dist = model.next_distribution(context)
        r = stream.next()
        tok = pick(dist, r)
        out.append(tok)
        context.append(tok)
        if trace is not None:
            trace.r_values.append(r)
            trace.entropies.append(entropy_bits(dist))
    return out


def encode_bit(
    model: GenerativeModel,
    state: AgentState,
    s: int,
    cfg: StegoConfig,
    pmap: PartitionMap,
    stream: RandomStream,
    *,
    trace: StegoTrace | None = None,
    stop_token: int | None = None,
    max_tokens: int | None = None,
) -> tuple[list[int], AgentState]:
    """Generate the tokens carrying one bit from the encoder's live state.

    Block mode emits exactly ``cfg.sec.tokens_per_bit`` tokens. Whole-sequence
    mode emits at least ``t_min(k, margin)`` tokens, then continues until
    ``stop_token`` is produced or ``max_tokens`` is reached.
    """
    s = _check_bit(s)
    if pmap.vocab_size != model.vocab_size_:
        raise DomainError("partition map and model disagree on vocabulary size")
    order = pmap.order(s)

    def pick(dist, r):
        return _inverse_cdf(check_distribution(dist, pmap.vocab_size), order, r)

    context = list(state.prefix())
    if cfg.sec.mode is Mode.BLOCK:
        tokens = _generate(model, context, cfg.sec.tokens_per_bit, pick, stream, trace)
    else:
        floor = cfg.sec.min_tokens
        tokens = _generate(model, context, floor, pick, stream, trace)
        limit = max_tokens if max_tokens is not None else 4 * floor
        if stop_token is not None:
            while len(tokens) < limit and tokens[-1] != stop_token:
                tokens += _generate(model, context, 1, pick, stream, trace)
    if trace is not None:
        trace.tokens.extend(tokens)
        trace.embedded_bits.append(s)
        trace.block_boundaries.append(len(trace.tokens))
    return tokens, state.extend_draft(tokens)


def encode_message(
    model: GenerativeModel,
    state: AgentState,
    bits: Sequence[int],
    cfg: StegoConfig,
    pmap: PartitionMap,
    stream: RandomStream | None = None,
) -> tuple[StegoTrace, AgentState]:
    """Encode ``bits`` one block at a time; returns the trace and the state after drafting."""
    stream = cfg.stream() if stream is None else stream
    trace = StegoTrace()
    for s in bits:
        _, state = encode_bit(model, state, s, cfg, pmap, stream, trace=trace)
    return trace, state


def generate_cover(
    model: GenerativeModel, state: AgentState, n_tokens: int, stream: RandomStream
) -> StegoTrace:
    """Plain inverse-CDF sampling in token-id order, driven by the same kind of stream."""
    trace = StegoTrace()

    def pick(dist, r):
        return _inverse_cdf(check_distribution(dist, model.vocab_size_), None, r)

    trace.tokens = _generate(model, list(state.prefix()), n_tokens, pick, stream, trace)
    if trace.tokens:
        trace.block_boundaries = [len(trace.tokens)]
    return trace


def decode_statistic(
    tokens: Sequence[int], cfg: StegoConfig, pmap: PartitionMap, stream: RandomStream
) -> float:
    """Sum of f(r_t) over tokens labelled 0 and f(1 - r_t) over tokens labelled 1."""
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if toks.size == 0:
        return 0.0
    if toks.min() < 0 or toks.max() >= pmap.vocab_size:
        raise DomainError("received token outside the vocabulary")
    r = stream.take(toks.size)
    lab = pmap.labels[toks]
    terms = np.where(lab == 0, cfg.f(r), cfg.f(1.0 - r))
    return math.fsum(terms.tolist())


def threshold(T: int, cfg: StegoConfig | None = None) -> float:
    """Decision threshold: the midpoint between the two hypotheses' means."""
    return T / 2.0


def decide_bit(statistic: float, T: int, cfg: StegoConfig | None = None) -> int:
    if T < 1:
        raise DomainError("block length must be positive")
    return 1 if statistic >= threshold(T, cfg) else 0


def block_boundaries_for(n_tokens: int, cfg: StegoConfig) -> list[int]:
    T = cfg.sec.tokens_per_bit
    if n_tokens % T:
        raise FramingError(f"{n_tokens} tokens is not a whole number of {T}-token blocks")
    return list(range(T, n_tokens + 1, T))


def decode_message(
    tokens: Sequence[int],
    block_boundaries: Sequence[int] | None,
    cfg: StegoConfig,
    pmap: PartitionMap,
    stream: RandomStream | None = None,
) -> DecodeResult:
    """Recover one bit per block from the received tokens and the configuration alone.

    ``block_boundaries`` may be omitted in block mode, in which case the
    configured block length frames the sequence.
    """
    tokens = list(tokens)
    stream = cfg.stream() if stream is None else stream
    if block_boundaries is None:
        if cfg.sec.mode is Mode.BLOCK:
            block_boundaries = block_boundaries_for(len(tokens), cfg)
        else:
            block_boundaries = [len(tokens)] if tokens else []
    bounds = [int(b) for b in block_boundaries]
    if bounds:
        if any(b <= a for a, b in zip([0] + bounds, bounds)) or bounds[-1] != len(tokens):
            raise FramingError("block boundaries must increase strictly and end at the token count")
    elif tokens:
        raise FramingError("tokens received without any block boundary")

    bits, stats, taus, lengths = [], [], [], []
    start = 0
    for end in bounds:
        T = end - start
        lam = decode_statistic(tokens[start:end], cfg, pmap, stream)
        bits.append(decide_bit(lam, T, cfg))
        stats.append(lam)
        taus.append(threshold(T, cfg))
        lengths.append(T)
        start = end
    if lengths and cfg.sec.margin is not None:
        bound = math.exp(-2.0 * min(lengths) * cfg.sec.margin**2)
    else:
        bound = 0.0 if not lengths else 1.0
    return DecodeResult(bits, stats, taus, bound)


def calibrate_margin(
    model: GenerativeModel,
    sample_states: Sequence[AgentState],
    cfg: StegoConfig,
    pmap: PartitionMap,
    n_steps: int = 2000,
    n_std: float = 1.0,
) -> float:
    """Conservative per-token margin from simulated natural generation.

    At every step m_t = p_t (1 - p_t), with p_t the mass of the tokens labelled 0.
    Returns max(0.01, mean(m) - n_std * std(m)).
    """
    if n_steps < 100:
        raise CalibrationError("calibration needs at least 100 steps")
    if not sample_states:
        raise CalibrationError("calibration needs at least one sample state")
    stream = RandomStream(cfg.sk, b"calibrate|" + cfg.session_id)
    per_state = -(-n_steps // len(sample_states))
    margins = []
    for state in sample_states:
        context = list(state.prefix())
        for _ in range(min(per_state, n_steps - len(margins))):
            dist = check_distribution(model.next_distribution(context), pmap.vocab_size)
            p = leading_mass(dist, pmap, 0)
            margins.append(p * (1.0 - p))
            tok = _inverse_cdf(dist, None, stream.next())
            context.append(tok)
    m = np.asarray(margins)
    if np.all(m <= 1e-15):
        raise CalibrationError("all probability mass sits on one partition label; channel unusable")
    return float(min(0.25, max(MARGIN_MIN, m.mean() - n_std * m.std())))
