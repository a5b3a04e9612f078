"""Prefix-independent covert channel between generative agents.

The encoder embeds one bit per block of tokens by reordering a keyed
vocabulary partition before inverse-CDF sampling; token marginals are left
untouched. The decoder needs only the shared configuration (key, session id,
block length), never the model or the encoder's context.
"""

from .baseline import baseline_decode_message, baseline_encode_message
from .codec import (
    DecodeResult,
    StegoTrace,
    calibrate_margin,
    decode_message,
    decode_statistic,
    encode_bit,
    encode_message,
    generate_cover,
    permuted_cdf_sample,
)
from .cognitive import (
    AgentState,
    HashModel,
    MemoryPool,
    NgramModel,
    Role,
    Turn,
    Vocabulary,
    make_hash_model,
    make_ngram_model,
)
from .config import (
    MappingRule,
    Mode,
    PartitionMap,
    RandomStream,
    SamplingFunction,
    SecretKey,
    SecurityParams,
    StegoConfig,
    derive_partition,
    prf64,
    t_min,
)
from .estimators import ACFDecoder, ACFEncoder, MarginCalibrator
from .exceptions import (
    AcfError,
    CalibrationError,
    ConfigError,
    DegenerateVocabularyError,
    DomainError,
    FramingError,
    IngestionError,
    StatisticalPowerError,
    StreamExhaustedError,
)
from .harness import ModelSpec, Scenario, simulate, sweep_progressive_asymmetry
from .metrics import ber, binary_entropy, eic

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
