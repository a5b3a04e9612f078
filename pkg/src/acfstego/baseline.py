"""Simplified symmetric (prefix-dependent) codec used as the collapse baseline.

At each step two candidates are drawn from the live distribution by inverse
CDF at ``r`` and at ``r + 1/2``. When they differ the encoder emits the one
indexed by the secret bit, otherwise it emits the shared candidate and embeds
nothing. The decoder must rebuild both candidates from its *own* distribution,
so it only works when both parties condition on the same prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .cognitive import AgentState, GenerativeModel, check_distribution, entropy_bits
from .codec import _check_bit, _check_r, _search, compensated_cumsum
from .config import RandomStream
from .exceptions import DomainError


def candidates(dist, r: float) -> tuple[int, int]:
    probs = check_distribution(dist)
    r = _check_r(r)
    cum = compensated_cumsum(probs)
    return _search(cum, probs, r), _search(cum, probs, (r + 0.5) % 1.0)


def baseline_encode_step(dist, r: float, s: int) -> tuple[int, bool]:
    """Returns ``(token, embedded)``."""
    s = _check_bit(s)
    c0, c1 = candidates(dist, r)
    if c0 == c1:
        return c0, False
    return (c1 if s else c0), True


def baseline_decode_step(received: int, decoder_dist, r: float) -> tuple[int | None, bool]:
    """Returns ``(bit, desync)``; ``bit`` is None when the step carries nothing.

    A received token matching neither candidate is a desync: it is reported
    as bit 0 with ``desync=True``.
    """
    c0, c1 = candidates(decoder_dist, r)
    if c0 == c1:
        return None, False
    if received == c0:
        return 0, False
    if received == c1:
        return 1, False
    return 0, True


@dataclass
class BaselineTrace:
    tokens: list[int] = field(default_factory=list)
    bits_embedded: list[int] = field(default_factory=list)
    embed_positions: list[int] = field(default_factory=list)
    entropies: list[float] = field(default_factory=list)


@dataclass
class BaselineDecodeResult:
    bits: list[int]
    positions: list[int]
    desync_count: int


def baseline_encode_message(
    model: GenerativeModel,
    state: AgentState,
    bits: Sequence[int],
    stream: RandomStream,
    max_steps: int | None = None,
) -> tuple[BaselineTrace, AgentState]:
    """Step the encoder's own context until every bit is embedded or ``max_steps`` runs out."""
    bits = [_check_bit(b) for b in bits]
    limit = max_steps if max_steps is not None else 64 * max(len(bits), 1)
    trace = BaselineTrace()
    context = list(state.prefix())
    i = 0
    while i < len(bits) and len(trace.tokens) < limit:
        dist = model.next_distribution(context)
        tok, embedded = baseline_encode_step(dist, stream.next(), bits[i])
        if embedded:
            trace.bits_embedded.append(bits[i])
            trace.embed_positions.append(len(trace.tokens))
            i += 1
        trace.entropies.append(entropy_bits(dist))
        trace.tokens.append(tok)
        context.append(tok)
    return trace, state.extend_draft(trace.tokens)


def baseline_decode_message(
    model: GenerativeModel,
    state: AgentState,
    tokens: Sequence[int],
    stream: RandomStream,
) -> BaselineDecodeResult:
    """Decode with the decoder's own (possibly divergent) context, appending received tokens."""
    context = list(state.prefix())
    bits, positions, desync = [], [], 0
    for t, tok in enumerate(tokens):
        tok = int(tok)
        if not 0 <= tok < model.vocab_size_:
            raise DomainError(f"received token {tok} outside vocabulary")
        bit, bad = baseline_decode_step(tok, model.next_distribution(context), stream.next())
        if bit is not None:
            bits.append(bit)
            positions.append(t)
            desync += bad
        context.append(tok)
    return BaselineDecodeResult(bits, positions, desync)


def align_bits(sent: Sequence[int], recovered: Sequence[int]) -> list[int]:
    """Positional alignment of a recovered bit stream to the sent one.

    Extra recovered bits are dropped and missing ones are filled with 0, so a
    framing slip shows up as errors rather than as a length mismatch.
    """
    out = list(recovered[: len(sent)])
    out += [0] * (len(sent) - len(out))
    return out
