"""Scenario construction, experiment execution and report aggregation.

A :class:`Scenario` fixes a model, an initial shared dialogue, the asymmetry
operations applied to each side, a method and a seed. Running it yields one
:class:`TrialRecord` per trial; :func:`summarize` reduces those to a report row.
All randomness is derived from ``(seed, trial)`` so reruns are bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import baseline as bl
from .codec import calibrate_margin, decode_message, encode_message, generate_cover
from .cognitive import (
    AgentState,
    MemoryPool,
    Role,
    Turn,
    append_private_summary,
    inject_retrieval,
    make_hash_model,
    make_ngram_model,
    synthetic_corpus,
    truncate_history,
)
from .config import SecretKey, SecurityParams, StegoConfig, derive_partition, t_min
from .exceptions import ConfigError
from .metrics import ber, eic, frequency_indistinguishability, mean_generation_entropy

METHODS = ("normal", "acf", "baseline")
OPS = ("truncate", "summary", "retrieve")

REPORT_COLUMNS = [
    "scenario",
    "method",
    "k",
    "delta",
    "entropy_mean",
    "entropy_std",
    "ber_mean",
    "ber_std",
    "eic",
    "desync_rate",
    "total_bits",
    "total_tokens",
    "block_len",
    "margin",
    "score",
    "f1",
]


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "hash"
    vocab_size: int = 256
    seed: str = "acf-model"
    window: int = 8
    mixing: float = 0.0
    concentration: float = 40.0
    position_resolution: int | None = None
    order: int = 1
    alpha: float = 0.1
    corpus_length: int = 50_000
    corpus_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("hash", "ngram"):
            raise ConfigError(f"unknown model kind {self.kind!r}")

    def corpus(self) -> list[int]:
        return synthetic_corpus(self.vocab_size, self.corpus_length, seed=self.corpus_seed)

    def build(self):
        if self.kind == "hash":
            return make_hash_model(
                self.seed.encode(),
                self.vocab_size,
                window=self.window,
                mixing=self.mixing,
                concentration=self.concentration,
                position_resolution=self.position_resolution,
            )
        return make_ngram_model(self.corpus(), self.order, self.alpha, vocab=self.vocab_size)


@dataclass(frozen=True)
class PoolSpec:
    total_tokens: int = 10_000
    n_chunks: int = 100


@dataclass(frozen=True)
class Scenario:
    name: str
    method: str = "acf"
    k: int | None = 12
    trials: int = 100
    bits_per_trial: int = 16
    seed: int = 0
    model: ModelSpec = field(default_factory=ModelSpec)
    initial_shared_turns: int = 5
    turn_length: int = 16
    query_length: int = 8
    encoder_ops: tuple[dict, ...] = ()
    decoder_ops: tuple[dict, ...] = ()
    pool: PoolSpec = field(default_factory=PoolSpec)
    margin: float | None = None
    block_len: int | None = None
    calibration_steps: int = 2000
    margin_n_std: float = 1.0
    normal_tokens: int = 256
    delta: int | None = None
    expect: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "acf" and self.k is None:
            raise ConfigError("acf scenarios need a security parameter k")
        if self.trials < 1 or self.bits_per_trial < 0:
            raise ConfigError("trials must be positive and bits_per_trial non-negative")
        for side in ("encoder_ops", "decoder_ops"):
            ops = tuple(dict(op) for op in getattr(self, side))
            for op in ops:
                if op.get("op") not in OPS:
                    raise ConfigError(f"{side}: unknown operation {op!r}")
                if op["op"] == "truncate" and not 0 <= op.get("delta", -1) <= self.initial_shared_turns:
                    raise ConfigError(f"{side}: truncate delta must lie in 0..{self.initial_shared_turns}")
            object.__setattr__(self, side, ops)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"sweep"}
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        data.pop("sweep", None)
        if "model" in data:
            data["model"] = ModelSpec(**data["model"])
        if "pool" in data:
            data["pool"] = PoolSpec(**data["pool"])
        for side in ("encoder_ops", "decoder_ops"):
            if side in data:
                data[side] = tuple(data[side] or ())
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["encoder_ops"] = [dict(op) for op in self.encoder_ops]
        out["decoder_ops"] = [dict(op) for op in self.decoder_ops]
        return out

    def with_decoder_truncation(self, delta: int) -> "Scenario":
        ops = tuple(op for op in self.decoder_ops if op["op"] != "truncate")
        if delta:
            ops = ({"op": "truncate", "delta": delta},) + ops
        return replace(self, decoder_ops=ops, delta=delta)


@dataclass
class TrialRecord:
    trial: int
    sent_bits: list[int]
    recovered_bits: list[int]
    token_count: int
    entropies: list[float]
    desync_count: int = 0
    tokens: list[int] = field(default_factory=list)


@dataclass
class ScenarioSummary:
    scenario: str
    method: str
    k: int | None
    delta: int | None
    trials: int
    total_bits: int
    total_tokens: int
    ber_mean: float | None
    ber_std: float | None
    eic: float | None
    entropy_mean: float
    entropy_std: float
    desync_rate: float | None
    block_len: int | None
    margin: float | None
    score: float | None = None
    f1: float | None = None

    def row(self) -> dict:
        d = asdict(self)
        return {c: d.get(c) for c in REPORT_COLUMNS}


@dataclass
class ExperimentReport:
    rows: list[ScenarioSummary] = field(default_factory=list)
    curve: list[dict] | None = None

    def by_name(self, name: str) -> ScenarioSummary:
        for row in self.rows:
            if row.scenario == name:
                return row
        raise KeyError(name)


# --------------------------------------------------------------------------
# scenario setup


@dataclass
class _Setup:
    model: Any
    cfg: StegoConfig | None
    pmap: Any
    pool: MemoryPool | None
    corpus: list[int] | None


def scenario_key(seed: int) -> SecretKey:
    return SecretKey(hashlib.sha256(b"acfstego/scenario-key/" + str(seed).encode()).digest())


def _trial_rng(sc: Scenario, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([sc.seed, trial, stream])


def _segment(rng, n: int, vocab_size: int, corpus: list[int] | None) -> tuple[int, ...]:
    if corpus is None:
        return tuple(rng.integers(0, vocab_size, size=n).tolist())
    start = int(rng.integers(0, len(corpus) - n))
    return tuple(corpus[start : start + n])


def initial_states(sc: Scenario, trial: int, setup: _Setup) -> tuple[AgentState, AgentState, tuple[int, ...]]:
    """Shared dialogue for one trial, then each side's private operations."""
    rng = _trial_rng(sc, trial, 0)
    V = sc.model.vocab_size
    turns = [
        Turn(Role.USER if i % 2 == 0 else Role.AGENT, _segment(rng, sc.turn_length, V, setup.corpus))
        for i in range(sc.initial_shared_turns)
    ]
    query = _segment(rng, sc.query_length, V, setup.corpus)
    base = AgentState(public_history=tuple(turns))
    states = []
    for side, ops in ((1, sc.encoder_ops), (2, sc.decoder_ops)):
        op_rng = _trial_rng(sc, trial, side)
        state = base
        for op in ops:
            state = _apply_op(state, op, op_rng, setup, query, sc)
        # the current query is the newest public turn on both sides
        states.append(AgentState(state.public_history + (Turn(Role.USER, query),), state.private_memory))
    return states[0], states[1], query


def _apply_op(state, op, rng, setup: _Setup, query, sc: Scenario) -> AgentState:
    kind = op["op"]
    if kind == "truncate":
        return truncate_history(state, int(op["delta"]))
    if kind == "summary":
        length = int(op.get("length", 32))
        return append_private_summary(state, Turn(Role.SYSTEM, _segment(rng, length, sc.model.vocab_size, setup.corpus)))
    return inject_retrieval(state, setup.pool, query, int(op.get("n_chunks", 3)))


def prepare(sc: Scenario) -> _Setup:
    """Build model, pool and (for ACF) the calibrated configuration. Errors surface here."""
    model = sc.model.build()
    corpus = sc.model.corpus() if sc.model.kind == "ngram" else None
    pool = None
    if any(op["op"] == "retrieve" for op in sc.encoder_ops + sc.decoder_ops):
        pool = MemoryPool.random(sc.model.vocab_size, sc.pool.total_tokens, sc.pool.n_chunks, seed=sc.seed)
    setup = _Setup(model, None, None, pool, corpus)
    if sc.method == "normal":
        return setup
    cfg = StegoConfig(scenario_key(sc.seed), SecurityParams(k=sc.k or 1), session_id=b"scenario")
    pmap = derive_partition(sc.model.vocab_size, cfg)
    setup.pmap = pmap
    if sc.method == "acf":
        margin = sc.margin
        if margin is None:
            samples = [initial_states(sc, t, setup)[0] for t in range(min(5, sc.trials))]
            margin = calibrate_margin(model, samples, cfg, pmap, sc.calibration_steps, sc.margin_n_std)
        cfg = cfg.with_margin(margin, sc.block_len or t_min(sc.k, margin))
    setup.cfg = cfg
    return setup


def run_trial(sc: Scenario, setup: _Setup, trial: int) -> TrialRecord:
    enc, dec, _ = initial_states(sc, trial, setup)
    bits = _trial_rng(sc, trial, 3).integers(0, 2, size=sc.bits_per_trial).tolist()
    session = f"{sc.name}/{trial}".encode()
    model = setup.model
    if sc.method == "normal":
        stream_cfg = StegoConfig(scenario_key(sc.seed), SecurityParams(k=1), session_id=session)
        trace = generate_cover(model, enc, sc.normal_tokens, stream_cfg.stream())
        return TrialRecord(trial, [], [], len(trace.tokens), trace.entropies, tokens=trace.tokens)
    cfg = setup.cfg.with_session(session)
    if sc.method == "acf":
        trace, _ = encode_message(model, enc, bits, cfg, setup.pmap, cfg.stream())
        # the decoder holds only the configuration: no model, no state
        result = decode_message(trace.tokens, trace.block_boundaries, cfg, setup.pmap, cfg.stream())
        return TrialRecord(trial, bits, result.bits, len(trace.tokens), trace.entropies, 0, trace.tokens)
    trace, _ = bl.baseline_encode_message(model, enc, bits, cfg.stream())
    result = bl.baseline_decode_message(model, dec, trace.tokens, cfg.stream())
    recovered = bl.align_bits(bits, result.bits)
    return TrialRecord(
        trial, bits, recovered, len(trace.tokens), trace.entropies, result.desync_count, trace.tokens
    )


def _run_chunk(args):
    sc, setup, trials = args
    return [run_trial(sc, setup, t) for t in trials]


def run_scenario(sc: Scenario, jobs: int = 1, setup: _Setup | None = None) -> list[TrialRecord]:
    setup = prepare(sc) if setup is None else setup
    if jobs <= 1 or sc.trials < 2:
        return [run_trial(sc, setup, t) for t in range(sc.trials)]
    chunks = [list(range(sc.trials))[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_run_chunk, [(sc, setup, c) for c in chunks if c]))
    records = [rec for part in parts for rec in part]
    return sorted(records, key=lambda r: r.trial)


def summarize(sc: Scenario, records: Sequence[TrialRecord], setup: _Setup | None = None) -> ScenarioSummary:
    """Pooled BER (and per-trial std), EIC over all trials, step-weighted entropy."""
    records = sorted(records, key=lambda r: r.trial)
    total_bits = sum(len(r.sent_bits) for r in records)
    total_tokens = sum(r.token_count for r in records)
    ent_mean, ent_std = mean_generation_entropy(records)
    ber_mean = ber_std = eic_val = desync = None
    if sc.method != "normal" and total_bits:
        sent = [b for r in records for b in r.sent_bits]
        rec = [b for r in records for b in r.recovered_bits]
        ber_mean = ber(sent, rec)
        per_trial = [ber(r.sent_bits, r.recovered_bits) for r in records if r.sent_bits]
        ber_std = float(np.std(per_trial))
        eic_val = eic(total_bits, total_tokens, ber_mean)
        desync = sum(r.desync_count for r in records) / total_bits
    cfg = setup.cfg if setup is not None else None
    return ScenarioSummary(
        scenario=sc.name,
        method=sc.method,
        k=sc.k if sc.method != "normal" else None,
        delta=sc.delta,
        trials=len(records),
        total_bits=total_bits,
        total_tokens=total_tokens,
        ber_mean=ber_mean,
        ber_std=ber_std,
        eic=eic_val,
        entropy_mean=ent_mean,
        entropy_std=ent_std,
        desync_rate=desync,
        block_len=cfg.sec.block_len if cfg is not None and sc.method == "acf" else None,
        margin=cfg.sec.margin if cfg is not None and sc.method == "acf" else None,
    )


def simulate(sc: Scenario, jobs: int = 1) -> tuple[ScenarioSummary, list[TrialRecord]]:
    setup = prepare(sc)
    records = run_scenario(sc, jobs, setup)
    return summarize(sc, records, setup), records


def sweep_progressive_asymmetry(
    base: Scenario,
    deltas: Iterable[int] = range(5),
    methods: Sequence[str] = ("acf", "baseline"),
    jobs: int = 1,
) -> ExperimentReport:
    """Run every method at each decoder truncation depth; emits the BER-vs-delta curve."""
    report = ExperimentReport(curve=[])
    for delta in deltas:
        point = {"delta": int(delta)}
        for method in methods:
            sc = replace(base, method=method, name=f"{base.name}/{method}/delta={delta}")
            sc = sc.with_decoder_truncation(int(delta))
            summary, _ = simulate(sc, jobs)
            report.rows.append(summary)
            point[f"{method}_ber"] = summary.ber_mean
        report.curve.append(point)
    return report


# --------------------------------------------------------------------------
# indistinguishability experiment


class TemperatureSkewed:
    """Wraps a model and sharpens (T < 1) or flattens (T > 1) its distributions."""

    def __init__(self, model, temperature: float):
        self.model = model
        self.temperature = temperature
        self.vocab_size_ = model.vocab_size_

    def next_distribution(self, prefix):
        q = self.model.next_distribution(prefix) ** (1.0 / self.temperature)
        return q / q.sum()


def indistinguishability_experiment(
    n_runs: int = 2000,
    run_length: int = 24,
    model: ModelSpec | None = None,
    temperature: float = 0.5,
    n_resamples: int = 1000,
    sample_size: int = 400,
    seed: int = 0,
):
    """Cover vs cover, cover vs ACF stego, and cover vs a temperature-skewed sampler.

    Each run starts from an independent corpus window. Returns a dict of
    :class:`~acfstego.metrics.IndistinguishabilityResult` keyed by comparison.
    """
    spec = model or ModelSpec(kind="ngram", vocab_size=128, order=1, alpha=0.1)
    lm = spec.build()
    corpus = spec.corpus() if spec.kind == "ngram" else None
    key = scenario_key(seed)
    cfg = StegoConfig(key, SecurityParams(k=4, margin=0.25, block_len=max(run_length, t_min(4, 0.25))))
    pmap = derive_partition(spec.vocab_size, cfg)
    skewed = TemperatureSkewed(lm, temperature)

    def start(group: int, i: int) -> AgentState:
        rng = np.random.default_rng([seed, group, i])
        return AgentState((Turn(Role.USER, _segment(rng, 8, spec.vocab_size, corpus)),))

    def cover(group: int, m=lm):
        return [
            generate_cover(m, start(group, i), run_length, cfg.with_session(f"g{group}/{i}").stream()).tokens
            for i in range(n_runs)
        ]

    stego = []
    bit_rng = np.random.default_rng([seed, 99])
    for i in range(n_runs):
        c = cfg.with_session(f"g2/{i}")
        trace, _ = encode_message(lm, start(2, i), [int(bit_rng.integers(2))], c, pmap, c.stream())
        stego.append(trace.tokens[:run_length])
    cover_a, cover_b, biased = cover(0), cover(1), cover(3, skewed)
    kw = dict(n_resamples=n_resamples, sample_size=sample_size)
    return {
        "cover_vs_cover": frequency_indistinguishability(cover_a, cover_b, seed=seed + 1, **kw),
        "cover_vs_stego": frequency_indistinguishability(cover_a, stego, seed=seed + 2, **kw),
        "cover_vs_biased": frequency_indistinguishability(cover_a, biased, seed=seed + 3, **kw),
    }


# --------------------------------------------------------------------------
# reports


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 12)) if math.isfinite(v) else ""
    return str(v)


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in report.rows:
        w.writerow([_fmt(row.row()[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def curve_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    points = report.curve or []
    series = sorted({k for p in points for k in p if k != "delta"})
    w.writerow(["delta"] + series)
    for p in points:
        w.writerow([p["delta"]] + [_fmt(p.get(s)) for s in series])
    return buf.getvalue()


def report_json(report: ExperimentReport) -> str:
    payload = {"columns": REPORT_COLUMNS, "rows": [r.row() for r in report.rows]}
    if report.curve is not None:
        payload["curve"] = report.curve
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def emit_report(report: ExperimentReport, out_dir, formats: Sequence[str] = ("csv", "json"), stem: str = "report") -> list[Path]:
    """Write the table (and the delta curve when present) in each requested format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            path = out / f"{stem}.csv"
            path.write_text(report_csv(report))
            written.append(path)
            if report.curve is not None:
                path = out / f"{stem}_curve.csv"
                path.write_text(curve_csv(report))
                written.append(path)
        elif fmt == "json":
            path = out / f"{stem}.json"
            path.write_text(report_json(report))
            written.append(path)
        else:
            raise ConfigError(f"unknown report format {fmt!r}")
    return written


# --------------------------------------------------------------------------
# expectation checks (used by ``acfstego check``)


def check_expectations(summary: ScenarioSummary, expect: dict) -> list[str]:
    """Return a failure message for every violated expectation."""
    failures = []
    for key, bound in expect.items():
        metric, _, kind = key.rpartition("_")
        value = getattr(summary, metric, None)
        if value is None:
            failures.append(f"{summary.scenario}: {metric} unavailable for {key}")
            continue
        ok = {
            "max": lambda: value <= bound,
            "min": lambda: value >= bound,
            "eq": lambda: value == bound,
            "range": lambda: bound[0] <= value <= bound[1],
        }.get(kind)
        if ok is None:
            raise ConfigError(f"unknown expectation {key!r}")
        if not ok():
            failures.append(f"{summary.scenario}: {metric}={value!r} violates {kind} {bound!r}")
    return failures


# --------------------------------------------------------------------------
# scenario documents


def run_document(doc: dict, jobs: int = 1, seed: int | None = None) -> tuple[ExperimentReport, list[str]]:
    """Run one scenario document; returns its report and any expectation failures.

    A document carrying a ``sweep`` mapping (``deltas``, ``methods``) expands into
    one scenario per (method, delta). Its ``expect`` mapping is then keyed by
    ``"<method>/<delta>"`` glob patterns.
    """
    from fnmatch import fnmatch

    doc = dict(doc)
    if seed is not None:
        doc["seed"] = seed
    sweep = doc.get("sweep")
    if sweep is None:
        sc = Scenario.from_dict(doc)
        summary, _ = simulate(sc, jobs)
        return ExperimentReport([summary]), check_expectations(summary, sc.expect)
    expect = doc.pop("expect", {}) or {}
    base = Scenario.from_dict(doc)
    report = sweep_progressive_asymmetry(
        base, sweep.get("deltas", range(5)), sweep.get("methods", ("acf", "baseline")), jobs
    )
    failures = []
    for row in report.rows:
        tag = f"{row.method}/{row.delta}"
        for pattern, exp in expect.items():
            if fnmatch(tag, pattern):
                failures += check_expectations(row, exp)
    return report, failures


def run_documents(docs: Sequence[dict], jobs: int = 1, seed: int | None = None) -> tuple[ExperimentReport, list[str]]:
    merged = ExperimentReport()
    failures: list[str] = []
    for doc in docs:
        report, fails = run_document(doc, jobs, seed)
        merged.rows += report.rows
        if report.curve is not None:
            merged.curve = (merged.curve or []) + report.curve
        failures += fails
    return merged, failures
