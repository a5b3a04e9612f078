"""scikit-learn style front ends for the codec.

:class:`ACFDecoder` is a fitted classifier over received blocks: ``fit`` derives
the keyed partition from the configuration (it needs no training data),
``decision_function`` returns the statistic minus the threshold and ``predict``
the recovered bits. :class:`MarginCalibrator` fits the per-token margin and
block length on sample agent states. Both expose ``get_params``/``set_params``
and compose with the rest of the ecosystem.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .codec import calibrate_margin, decode_statistic, encode_message, threshold
from .config import (
    MappingRule,
    SamplingFunction,
    SecretKey,
    SecurityParams,
    StegoConfig,
    derive_partition,
    t_min,
)
from .exceptions import DomainError


def _check_blocks(X) -> list[np.ndarray]:
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [np.asarray(row, dtype=np.int64) for row in X]
    blocks = [np.asarray(b, dtype=np.int64).reshape(-1) for b in X]
    if any(b.size == 0 for b in blocks):
        raise DomainError("every block must contain at least one token")
    return blocks


class _ConfigMixin:
    def _build_config(self) -> StegoConfig:
        margin = self.margin
        block_len = self.block_len
        if margin is not None and block_len is None:
            block_len = t_min(self.k, margin)
        return StegoConfig(
            sk=SecretKey.from_hex(self.key_hex),
            sec=SecurityParams(k=self.k, margin=margin, block_len=block_len),
            f=SamplingFunction(self.sampling),
            rule=MappingRule(complement=self.complement),
            session_id=self.session_id,
        )


class ACFDecoder(_ConfigMixin, ClassifierMixin, BaseEstimator):
    """Model-free bit decoder.

    Blocks passed to :meth:`predict` are taken to be consecutive in one session:
    the shared stream is replayed from position 0 across them in order.
    """

    def __init__(
        self,
        key_hex: str = "",
        vocab_size: int = 256,
        session_id: str = "",
        k: int = 12,
        margin: float | None = None,
        block_len: int | None = None,
        complement: bool = False,
        sampling: str = "identity",
    ):
        self.key_hex = key_hex
        self.vocab_size = vocab_size
        self.session_id = session_id
        self.k = k
        self.margin = margin
        self.block_len = block_len
        self.complement = complement
        self.sampling = sampling

    def fit(self, X=None, y=None):
        self.config_ = self._build_config()
        self.partition_ = derive_partition(self.vocab_size, self.config_)
        self.classes_ = np.array([0, 1])
        return self

    def statistics(self, X) -> np.ndarray:
        check_is_fitted(self, "partition_")
        stream = self.config_.stream()
        return np.array([decode_statistic(b, self.config_, self.partition_, stream) for b in _check_blocks(X)])

    def decision_function(self, X) -> np.ndarray:
        blocks = _check_blocks(X)
        stats = self.statistics(blocks)
        return stats - np.array([threshold(b.size) for b in blocks])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(int)


class ACFEncoder(_ConfigMixin, BaseEstimator):
    """Encoder counterpart: ``transform`` maps a bit sequence to a list of token blocks."""

    def __init__(
        self,
        model=None,
        key_hex: str = "",
        session_id: str = "",
        k: int = 12,
        margin: float | None = None,
        block_len: int | None = None,
        complement: bool = False,
        sampling: str = "identity",
    ):
        self.model = model
        self.key_hex = key_hex
        self.session_id = session_id
        self.k = k
        self.margin = margin
        self.block_len = block_len
        self.complement = complement
        self.sampling = sampling

    def fit(self, X=None, y=None):
        if self.model is None:
            raise DomainError("ACFEncoder needs a generative model")
        self.config_ = self._build_config()
        self.partition_ = derive_partition(self.model.vocab_size_, self.config_)
        return self

    def transform(self, bits: Sequence[int], state=None) -> list[list[int]]:
        from .cognitive import AgentState

        check_is_fitted(self, "partition_")
        trace, _ = encode_message(
            self.model, state or AgentState(), list(bits), self.config_, self.partition_
        )
        out, start = [], 0
        for end in trace.block_boundaries:
            out.append(trace.tokens[start:end])
            start = end
        return out


class MarginCalibrator(BaseEstimator):
    """Fits ``margin_`` and ``block_len_`` from simulated generation on sample states."""

    def __init__(self, model=None, key_hex: str = "", k: int = 12, n_steps: int = 2000, n_std: float = 1.0):
        self.model = model
        self.key_hex = key_hex
        self.k = k
        self.n_steps = n_steps
        self.n_std = n_std

    def fit(self, X, y=None):
        states = list(X)
        cfg = StegoConfig(SecretKey.from_hex(self.key_hex), SecurityParams(k=self.k))
        pmap = derive_partition(self.model.vocab_size_, cfg)
        self.margin_ = calibrate_margin(self.model, states, cfg, pmap, self.n_steps, self.n_std)
        self.block_len_ = t_min(self.k, self.margin_)
        return self
