import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glacnet.autodiff import ContractError
from glacnet.sampler import (
    END_ID,
    SamplerConfig,
    StorySampler,
    WordCounter,
    default_function_words,
    greedy_word,
    penalize,
    read_word_list,
    record_emission,
    select_word,
)


def brute_penalize(probs, counts, k, exempt):
    """Scalar loop over the whole vocabulary, then renormalize."""
    out = []
    for w, p in enumerate(probs):
        c = 0 if w in exempt else counts.get(w, 0)
        out.append(p / (1.0 + k * c))
    total = sum(out)
    return np.array([x / total for x in out])


def counter_from(counts):
    wc = WordCounter()
    for tok, c in counts.items():
        for _ in range(c):
            record_emission(wc, tok)
    return wc


def random_instance(rng):
    v = int(rng.integers(3, 40))
    probs = rng.dirichlet(np.full(v, rng.uniform(0.1, 2.0)))
    counts = {int(t): int(rng.integers(0, 6)) for t in rng.choice(v, rng.integers(0, v), False)}
    exempt = {int(t) for t in rng.choice(v, rng.integers(0, v // 2 + 1), False)}
    return probs, counts, float(rng.uniform(0, 3)), exempt


class TestPenalize:
    def test_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            probs, counts, k, exempt = random_instance(rng)
            cfg = SamplerConfig(k=k, exempt=exempt)
            got = penalize(probs, counter_from(counts), cfg)
            want = brute_penalize(probs, counts, k, cfg.exempt)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_k_zero_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            probs, counts, _, exempt = random_instance(rng)
            got = penalize(probs, counter_from(counts), SamplerConfig(k=0.0, exempt=exempt))
            assert got.tobytes() == probs.tobytes()

    def test_zero_counts_identity(self):
        probs = np.random.default_rng(9).dirichlet(np.ones(12))
        assert penalize(probs, WordCounter(), SamplerConfig(k=2.0)).tobytes() == probs.tobytes()

    def test_worked_example(self):
        # word 0 seen once, k=1: [0.5/2, 0.5] renormalized
        got = penalize([0.5, 0.5], counter_from({0: 1}), SamplerConfig(k=1.0))
        np.testing.assert_allclose(got, [1 / 3, 2 / 3], rtol=0, atol=1e-15)

    def test_exempt_words_untouched_relative_to_each_other(self):
        probs = np.array([0.1, 0.2, 0.3, 0.4])
        cfg = SamplerConfig(k=1.0, exempt={0, 1})
        got = penalize(probs, counter_from({0: 5, 1: 3, 3: 2}), cfg)
        assert got[1] / got[0] == pytest.approx(2.0, rel=1e-15)
        assert got[3] < probs[3]

    def test_end_always_exempt(self):
        cfg = SamplerConfig(k=1.0, exempt=set())
        assert END_ID in cfg.exempt
        probs = np.full(4, 0.25)
        assert penalize(probs, counter_from({END_ID: 9}), cfg).tobytes() == probs.tobytes()

    def test_huge_count_stays_finite(self):
        wc = WordCounter()
        wc.counts[0] = 10**6
        got = penalize([0.5, 0.5], wc, SamplerConfig(k=1.0))
        assert np.all(np.isfinite(got)) and got.sum() == pytest.approx(1.0)
        assert got[0] == pytest.approx(1 / (10**6 + 2), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(0.01, 1.0), min_size=2, max_size=10),
        st.floats(0.01, 5.0),
        st.integers(0, 20),
    )
    def test_more_counts_never_raise_probability(self, weights, k, c):
        probs = np.array(weights) / sum(weights)
        cfg = SamplerConfig(k=k, exempt=set())
        lo = penalize(probs, counter_from({0: c}), cfg)[0]
        hi = penalize(probs, counter_from({0: c + 1}), cfg)[0]
        assert hi <= lo + 1e-15

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            SamplerConfig(k=-0.1)
        with pytest.raises(ValueError):
            SamplerConfig(n_samples=0)
        with pytest.raises(ContractError):
            penalize([0.5, 0.6], WordCounter(), SamplerConfig())
        with pytest.raises(ContractError):
            penalize([1.5, -0.5], WordCounter(), SamplerConfig())


class TestSelectWord:
    def test_dominant_word_wins(self):
        cfg = SamplerConfig(n_samples=100)
        rng = np.random.default_rng(0)
        wins = sum(select_word([0.99, 0.01], cfg, rng) == 0 for _ in range(2000))
        assert wins >= 1990

    def test_fixed_seed_reproducible(self):
        probs = np.random.default_rng(1).dirichlet(np.ones(20))
        cfg = SamplerConfig(n_samples=5)
        r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
        a = [select_word(probs, cfg, r1) for _ in range(50)]
        b = [select_word(probs, cfg, r2) for _ in range(50)]
        assert a == b

    def test_tie_breaks_to_higher_probability_then_lower_id(self):
        cfg = SamplerConfig(n_samples=1)

        class Fixed:
            def __init__(self, hits):
                self.hits = np.array(hits)

            def multinomial(self, n, p):
                return self.hits

        assert select_word([0.2, 0.5, 0.3], cfg, Fixed([1, 1, 0])) == 1
        assert select_word([0.4, 0.2, 0.4], cfg, Fixed([2, 0, 2])) == 0
        assert select_word([0.1, 0.1, 0.8], cfg, Fixed([3, 0, 1])) == 0

    def test_one_draw_is_plain_sampling(self):
        cfg = SamplerConfig(n_samples=1)
        rng = np.random.default_rng(5)
        picks = np.bincount([select_word([0.25, 0.75], cfg, rng) for _ in range(4000)],
                            minlength=2)
        assert abs(picks[1] / 4000 - 0.75) < 0.03

    def test_degenerate_rejected(self):
        with pytest.raises(ContractError):
            select_word([0.0, 0.0], SamplerConfig(), np.random.default_rng(0))

    def test_greedy(self):
        assert greedy_word([0.1, 0.7, 0.2]) == 1


class TestStorySampler:
    def test_counts_skip_end_and_reset(self):
        s = StorySampler(SamplerConfig(), greedy=True)
        assert s.choose(np.array([0.0, 0.0, 5.0])) == END_ID
        assert len(s.counter) == 0
        s.choose(np.array([5.0, 0.0, 0.0]))
        assert s.counter[0] == 1
        s.start_sentence()
        assert s.counter[0] == 1
        s.start_story()
        assert len(s.counter) == 0

    def test_reset_per_sentence(self):
        s = StorySampler(SamplerConfig(reset_per_sentence=True), greedy=True)
        s.choose(np.array([5.0, 0.0, 0.0]))
        s.start_sentence()
        assert len(s.counter) == 0

    def test_penalty_flips_greedy_choice(self):
        logits = np.log(np.array([0.5, 0.4, 0.1]))
        on = StorySampler(SamplerConfig(k=1.0), greedy=True)
        off = StorySampler(SamplerConfig(k=1.0), use_penalty=False, greedy=True)
        assert [on.choose(logits) for _ in range(2)] == [0, 1]
        assert [off.choose(logits) for _ in range(2)] == [0, 0]


def test_word_list_parsing(tmp_path):
    path = tmp_path / "words.txt"
    path.write_text("# header\nThe\n\n  of  # trailing\n#only\n,\n", encoding="utf-8")
    assert read_word_list(path) == ["the", "of", ","]


def test_default_function_words():
    words = default_function_words()
    assert {"the", "a", "of", "and", "."} <= set(words)
    assert "dog" not in words
