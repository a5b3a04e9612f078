import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acfstego.cognitive import (
    AgentState,
    HashModel,
    MemoryPool,
    NgramModel,
    Role,
    Turn,
    Vocabulary,
    append_private_summary,
    calibrate_concentration,
    check_distribution,
    entropy_bits,
    inject_retrieval,
    make_hash_model,
    make_ngram_model,
    next_distribution,
    prefix,
    synthetic_corpus,
    truncate_history,
)
from acfstego.exceptions import DomainError, IngestionError

token_lists = st.lists(st.integers(0, 63), max_size=20)


def tv(p, q):
    return 0.5 * np.abs(p - q).sum()


class TestVocabulary:
    def test_round_trip(self):
        v = Vocabulary.from_text("the cat the dog")
        assert v.tokens == ("the", "cat", "dog")
        assert v.decode(v.encode(["dog", "the"])) == ["dog", "the"]

    def test_unknown_word(self):
        with pytest.raises(DomainError):
            Vocabulary.synthetic(3).encode(["nope"])

    def test_duplicates_rejected(self):
        with pytest.raises(IngestionError):
            Vocabulary(("a", "a"))


class TestDistributionCheck:
    def test_accepts_valid(self):
        assert check_distribution([0.25, 0.75]).dtype == np.float64

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            check_distribution(bad)

    def test_size_mismatch(self):
        with pytest.raises(DomainError):
            check_distribution([0.5, 0.5], vocab_size=3)

    def test_entropy(self):
        assert entropy_bits(np.full(8, 1 / 8)) == pytest.approx(3.0)
        assert entropy_bits([1.0, 0.0]) == 0.0


class TestHashModel:
    def test_deterministic(self):
        m = make_hash_model(b"s", 64)
        a = next_distribution(m, [])
        b = next_distribution(make_hash_model(b"s", 64), [])
        assert np.array_equal(a, b)
        check_distribution(a, 64)

    def test_early_token_matters_with_mixing(self):
        m = make_hash_model(b"s", 64, window=8, mixing=0.5, concentration=5.0)
        base = list(range(20))
        edited = [63] + base[1:]
        assert tv(m.next_distribution(base), m.next_distribution(edited)) > 0

    @settings(max_examples=50)
    @given(token_lists, token_lists, st.lists(st.integers(0, 63), min_size=8, max_size=8))
    def test_local_model_ignores_old_tokens(self, a, b, suffix):
        m = make_hash_model(b"loc", 64, window=8, mixing=0.0)
        assert np.array_equal(m.next_distribution(a + suffix), m.next_distribution(b + suffix))

    def test_position_resolution_sees_length(self):
        m = make_hash_model(b"p", 64, window=4, position_resolution=8)
        tail = [1, 2, 3, 4]
        assert np.array_equal(m.next_distribution([0] * 2 + tail), m.next_distribution([9] * 2 + tail))
        assert not np.array_equal(m.next_distribution(tail), m.next_distribution([0] * 8 + tail))

    def test_low_concentration_is_near_uniform(self):
        m = make_hash_model(b"s", 256, concentration=1e-6)
        assert entropy_bits(m.next_distribution([1, 2])) == pytest.approx(8.0, abs=1e-6)

    def test_logit_formula(self):
        m = make_hash_model(b"s", 32, mixing=0.25, concentration=3.0)
        loc = make_hash_model(b"s", 32, mixing=0.0, concentration=1.0).logits([5, 6])
        glb = make_hash_model(b"s", 32, mixing=1.0, concentration=1.0).logits([5, 6])
        np.testing.assert_allclose(m.logits([5, 6]), 0.75 * 3.0 * loc + 0.25 * 3.0 * glb)

    @pytest.mark.parametrize(
        "kwargs", [{"window": 0}, {"mixing": 1.5}, {"concentration": 0.0}, {"position_resolution": 0}]
    )
    def test_bad_params(self, kwargs):
        with pytest.raises(DomainError):
            make_hash_model(b"s", 16, **kwargs)

    def test_invalid_token(self):
        with pytest.raises(DomainError):
            make_hash_model(b"s", 16).next_distribution([16])

    def test_sklearn_params(self):
        m = HashModel(window=3)
        assert m.get_params()["window"] == 3
        assert m.set_params(window=5).window == 5

    def test_concentration_calibration_hits_target(self):
        c = calibrate_concentration(b"cal", 256, target_entropy=0.65, n_contexts=500)
        m = make_hash_model(b"cal", 256, concentration=c)
        rng = np.random.default_rng(7)
        H = [entropy_bits(m.next_distribution(rng.integers(0, 256, 8))) for _ in range(3000)]
        assert np.mean(H) == pytest.approx(0.65, abs=0.05)


class TestNgramModel:
    def test_bigram_max_likelihood(self):
        v = Vocabulary.from_text("a b")
        corpus = v.encode("a b a b".split())
        m = make_ngram_model(corpus, order=1, alpha=0.0)
        assert m.next_distribution(v.encode(["a"]))[v.index["b"]] == 1.0
        m2 = make_ngram_model(corpus, order=2, alpha=0.0)
        assert m2.next_distribution(v.encode(["b", "a"]))[v.index["b"]] == 1.0

    def test_hand_count(self):
        v = Vocabulary.from_text("a b")
        m = make_ngram_model(v.encode("a a b".split()), order=1, alpha=1.0, vocab=2)
        assert m.next_distribution([0])[0] == pytest.approx(0.5)
        assert m.count([0]) == 2 and m.count([0], 0) == 1

    def test_large_alpha_is_uniform(self):
        m = make_ngram_model([0, 1, 1, 2, 0], order=1, alpha=1e12, vocab=3)
        np.testing.assert_allclose(m.next_distribution([1]), np.full(3, 1 / 3), atol=1e-9)

    def test_unseen_context_without_smoothing_falls_back(self):
        m = make_ngram_model([0, 1, 0, 1], order=1, alpha=0.0, vocab=3)
        p = m.next_distribution([2])
        check_distribution(p)
        assert p[2] == 0.0

    def test_empty_and_short_corpus(self):
        with pytest.raises(IngestionError):
            make_ngram_model([], order=1)
        with pytest.raises(IngestionError):
            make_ngram_model([1, 2], order=2)

    def test_valid_distributions_on_synthetic_corpus(self):
        corpus = synthetic_corpus(64, 5000, seed=3)
        m = NgramModel(order=2, alpha=0.1, vocab=64).fit(corpus)
        for i in range(0, 200, 7):
            check_distribution(m.next_distribution(corpus[i : i + 5]), 64)


class TestAgentState:
    def turns(self, n):
        return tuple(Turn(Role.USER if i % 2 == 0 else Role.AGENT, (i, i + 100)) for i in range(n))

    def test_empty_turn(self):
        with pytest.raises(DomainError):
            Turn(Role.USER, ())

    def test_prefix_order(self):
        s = AgentState(self.turns(2), (Turn(Role.SYSTEM, (7,)),), draft=(9,))
        assert prefix(s) == (0, 100, 1, 101, 7, 9)

    def test_truncate(self):
        s = AgentState(self.turns(5))
        assert truncate_history(s, 0) == s
        assert truncate_history(s, 5).public_history == ()
        assert truncate_history(s, 2).public_history == s.public_history[2:]
        with pytest.raises(DomainError):
            truncate_history(s, 6)

    def test_truncate_leaves_private_memory(self):
        s = AgentState(self.turns(3), (Turn(Role.SYSTEM, (5,)),))
        assert truncate_history(s, 2).private_memory == s.private_memory

    def test_summary(self):
        s = AgentState(self.turns(3))
        t = append_private_summary(append_private_summary(s, Turn(Role.SYSTEM, (1, 2))), (3,))
        assert len(t.private_memory) == 2
        assert t.prefix()[: len(s.prefix())] == s.prefix()
        assert t.prefix() != s.prefix()
        with pytest.raises(DomainError):
            append_private_summary(s, ())

    def test_draft(self):
        s = AgentState(self.turns(1)).extend_draft([4, 5])
        c = s.commit_draft()
        assert c.draft == () and c.public_history[-1] == Turn(Role.AGENT, (4, 5))
        assert c.prefix() == s.prefix()


class TestRetrieval:
    def test_singleton(self):
        pool = MemoryPool(((7, (1, 2)),))
        s = inject_retrieval(AgentState(), pool, [9], 1)
        assert s.private_memory[0].tokens == (1, 2)

    def test_ties_pick_lowest_ids(self):
        pool = MemoryPool(((3, (1,)), (1, (2,)), (2, (3,))))
        s = inject_retrieval(AgentState(), pool, [50], 2)
        assert [t.tokens for t in s.private_memory] == [(2,), (3,)]

    def test_sort_by_overlap(self):
        pool = MemoryPool(((0, (1, 2, 99)), (1, (1, 2, 3, 4, 5)), (2, (1, 98))))
        s = inject_retrieval(AgentState(), pool, [1, 2, 3, 4, 5], 2)
        assert [t.tokens for t in s.private_memory] == [(1, 2, 3, 4, 5), (1, 2, 99)]

    def test_errors(self):
        with pytest.raises(DomainError):
            inject_retrieval(AgentState(), MemoryPool(()), [1], 1)
        with pytest.raises(DomainError):
            inject_retrieval(AgentState(), MemoryPool(((0, (1,)),)), [1], 2)
        with pytest.raises(IngestionError):
            MemoryPool(((0, (1,)), (0, (2,))))

    def test_random_pool_size(self):
        pool = MemoryPool.random(256, 10_000, 100, seed=1)
        assert pool.total_tokens == 10_000 and len(pool) == 100


def test_truncation_divergence_grows_with_delta():
    """More decoder truncation never makes fewer early generation steps disagree."""
    m = make_hash_model(b"mono", 64, window=4, position_resolution=8)
    rng = np.random.default_rng(0)
    hist = tuple(Turn(Role.USER, tuple(rng.integers(0, 64, 8).tolist())) for _ in range(5))
    gen = rng.integers(0, 64, 40).tolist()
    full = AgentState(hist)
    counts = []
    for delta in range(5):
        dec = truncate_history(full, delta)
        diff = sum(
            not np.array_equal(
                m.next_distribution(list(full.prefix()) + gen[:t]),
                m.next_distribution(list(dec.prefix()) + gen[:t]),
            )
            for t in range(len(gen))
        )
        counts.append(diff)
    assert counts == sorted(counts) and counts[0] == 0
