import numpy as np
import pytest

from glacnet.autodiff import Tensor, backward
from glacnet.data import END, START, DataError
from glacnet.decoder import (
    DecoderConfig,
    DecoderParams,
    decode_step,
    generate_sentence,
    run_story,
    teacher_forced_sentence,
)
from glacnet.glocal import GlocalVector
from glacnet.recurrent import LstmParams, LstmState, zero_state
from glacnet.sampler import SamplerConfig, StorySampler

from conftest import central_diff, max_rel_err

V, E, G, S = 10, 3, 5, 3


def params(rng, scale=1.0):
    p = DecoderParams.init(V, E, G, G, rng)
    for t in p.tensors().values():
        t.data[...] = rng.uniform(-scale, scale, t.shape)
    return p


def zero_params():
    return DecoderParams(
        Tensor(np.zeros((V, E))), LstmParams.zeros(E + G, G),
        Tensor(np.zeros((V, G))), Tensor(np.zeros(V)),
    )


def glocals(rng, batch=1, s=S):
    return [GlocalVector(Tensor(rng.standard_normal((batch, G))), t) for t in range(s)]


def sentence(rng, n):
    return [START] + [int(x) for x in rng.integers(4, V, n)] + [END]


def story_targets(rng, batch=1, s=S):
    return [[sentence(rng, int(rng.integers(1, 5))) for _ in range(batch)] for _ in range(s)]


def reference_sentence_loss(seq, g, h, c, p):
    """Single-row numpy loop: NLL of each next token given the true prefix."""
    def sig(z):
        return 1 / (1 + np.exp(-z))

    n = len(h)
    total = 0.0
    for i in range(len(seq) - 1):
        x = np.concatenate([p.embed.data[seq[i]], g])
        z = p.lstm.w_ih.data @ x + p.lstm.w_hh.data @ h + p.lstm.bias.data
        c = sig(z[n : 2 * n]) * c + sig(z[:n]) * np.tanh(z[2 * n : 3 * n])
        h = sig(z[3 * n :]) * np.tanh(c)
        logits = p.out_w.data @ h + p.out_b.data
        m = logits.max()
        total -= logits[seq[i + 1]] - m - np.log(np.exp(logits - m).sum())
    return total, h, c


def test_zero_params_uniform_loss():
    g = Tensor(np.ones((1, G)))
    loss, _, count = teacher_forced_sentence([[START, 5, END]], g, zero_state(G), zero_params())
    assert count == 2
    assert loss.data == pytest.approx(2 * np.log(V), abs=1e-12)


def test_zero_params_zero_logits():
    logits, state = decode_step([START], Tensor(np.ones((1, G))), zero_state(G), zero_params())
    assert not logits.data.any() and not state.h.data.any()


def test_matches_reference_loop(rng):
    p = params(rng)
    g = rng.standard_normal(G)
    h0, c0 = rng.standard_normal(G), rng.standard_normal(G)
    seq = sentence(rng, 6)
    loss, state, _ = teacher_forced_sentence(
        [seq], Tensor(g[None]), LstmState(Tensor(h0[None]), Tensor(c0[None])), p
    )
    want, wh, wc = reference_sentence_loss(seq, g, h0, c0, p)
    assert float(loss.data) == pytest.approx(want, rel=1e-12)
    np.testing.assert_allclose(state.h.data[0], wh, atol=1e-13)
    np.testing.assert_allclose(state.c.data[0], wc, atol=1e-13)


def test_padded_batch_equals_rows_alone(rng):
    p = params(rng)
    g = Tensor(rng.standard_normal((3, G)))
    seqs = [sentence(rng, 1), sentence(rng, 5), sentence(rng, 3)]
    loss, state, count = teacher_forced_sentence(seqs, g, zero_state(G, 3), p)
    assert count == sum(len(s) - 1 for s in seqs)
    total = 0.0
    for b, seq in enumerate(seqs):
        one, st, _ = teacher_forced_sentence([seq], Tensor(g.data[b : b + 1]), zero_state(G), p)
        total += float(one.data)
        np.testing.assert_allclose(state.h.data[b], st.h.data[0], atol=1e-14)
        np.testing.assert_allclose(state.c.data[b], st.c.data[0], atol=1e-14)
    assert float(loss.data) == pytest.approx(total, rel=1e-13)


def test_minimal_sentence(rng):
    loss, _, count = teacher_forced_sentence(
        [[START, END]], Tensor(rng.standard_normal((1, G))), zero_state(G), params(rng)
    )
    assert count == 1 and float(loss.data) > 0


@pytest.mark.parametrize("bad", [[START], [5, END], [START, 5], []])
def test_malformed_target(rng, bad):
    with pytest.raises(DataError):
        teacher_forced_sentence([bad], Tensor(np.zeros((1, G))), zero_state(G), params(rng))


class TestGenerate:
    def test_forced_end_gives_empty_sentence(self, rng):
        tokens, _ = generate_sentence(
            Tensor(rng.standard_normal((1, G))), zero_state(G), lambda logits: END, 30, params(rng)
        )
        assert tokens == []

    def test_never_end_stops_at_max_len(self, rng):
        tokens, _ = generate_sentence(
            Tensor(rng.standard_normal((1, G))), zero_state(G), lambda logits: 7, 4, params(rng)
        )
        assert tokens == [7, 7, 7, 7]

    def test_deterministic(self, rng):
        p, gl = params(rng), glocals(rng)
        cfg = DecoderConfig(embed_dim=E, max_len=8)
        runs = [
            run_story(gl, p, cfg, sampler=StorySampler(SamplerConfig(seed=4, n_samples=3)))
            for _ in range(2)
        ]
        assert runs[0].sentences == runs[1].sentences
        assert len(runs[0].sentences) == S

    def test_generation_needs_single_row(self, rng):
        with pytest.raises(ValueError):
            run_story(glocals(rng, batch=2), params(rng), DecoderConfig(),
                      sampler=StorySampler(SamplerConfig()))

    def test_sentence_t_sees_glocal_t(self, rng):
        gl = glocals(rng)
        trace = []
        run_story(gl, params(rng), DecoderConfig(max_len=2), sampler=StorySampler(SamplerConfig()),
                  trace=trace)
        seen = {entry["glocal"].tobytes() for entry in trace}
        assert seen <= {g.values.data.tobytes() for g in gl}
        assert trace[0]["glocal"].tobytes() == gl[0].values.data.tobytes()
        assert trace[-1]["glocal"].tobytes() == gl[-1].values.data.tobytes()


class TestCascading:
    def test_off_makes_later_losses_independent(self, rng):
        p, gl = params(rng), glocals(rng)
        cfg = DecoderConfig(cascading=False)
        targets = story_targets(rng)
        base = run_story(gl, p, cfg, targets=targets)
        changed = [[sentence(rng, 4)], [sentence(rng, 2)], targets[2]]
        other = run_story(gl, p, cfg, targets=changed)
        assert other.sentence_losses[2].data.tobytes() == base.sentence_losses[2].data.tobytes()
        for st in base.states_in:
            assert not st.h.data.any() and not st.c.data.any()

    def test_on_carries_state(self, rng):
        p, gl = params(rng), glocals(rng)
        cfg = DecoderConfig(cascading=True)
        targets = story_targets(rng)
        base = run_story(gl, p, cfg, targets=targets)
        for t in range(1, S):
            assert base.states_in[t] is base.states_out[t - 1]
        changed = [[sentence(rng, 4)]] + targets[1:]
        other = run_story(gl, p, cfg, targets=changed)
        assert np.abs(other.states_in[1].h.data - base.states_in[1].h.data).max() > 1e-8

    def test_single_sentence_flag_is_noop(self, rng):
        p, gl = params(rng), glocals(rng, s=1)
        targets = story_targets(rng, s=1)
        on = run_story(gl, p, DecoderConfig(cascading=True), targets=targets)
        off = run_story(gl, p, DecoderConfig(cascading=False), targets=targets)
        assert on.total_loss.data.tobytes() == off.total_loss.data.tobytes()
        assert on.states_out[0].h.data.tobytes() == off.states_out[0].h.data.tobytes()


def test_story_loss_is_sum_of_sentences(rng):
    res = run_story(glocals(rng, 2), params(rng), DecoderConfig(), targets=story_targets(rng, 2))
    assert float(res.total_loss.data) == pytest.approx(
        sum(float(x.data) for x in res.sentence_losses), rel=1e-14
    )
    assert res.token_count == sum(res.token_counts)


def test_target_count_mismatch(rng):
    with pytest.raises(DataError):
        run_story(glocals(rng), params(rng), DecoderConfig(), targets=story_targets(rng)[:2])
    with pytest.raises(ValueError):
        run_story(glocals(rng), params(rng), DecoderConfig())


def test_end_to_end_gradients(rng):
    p = params(rng, scale=0.5)
    for t in p.tensors().values():
        t.requires_grad = True
    gl = [GlocalVector(Tensor(rng.standard_normal((2, G)), requires_grad=True), t)
          for t in range(S)]
    targets = story_targets(rng, 2)

    def loss():
        return run_story(gl, p, DecoderConfig(), targets=targets).total_loss

    backward(loss())
    checked = list(p.tensors().values()) + [g.values for g in gl]
    # summed story loss is O(10), so a slightly larger step keeps roundoff down
    for t in checked:
        fd = central_diff(lambda: float(loss().data), t.data, h=1e-5)
        assert max_rel_err(t.grad, fd, floor=1e-6) < 1e-5

