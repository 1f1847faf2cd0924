import numpy as np
import pytest

from tsgp import expr, semantics
from tsgp.model.vocab import BOS, EOS, PAD
from tsgp.sampler import (SamplerState, SearchConfig, legal_mask,
                          primitives_from_vocab, run_tsgp, sample_offspring,
                          sample_tokens_batch)


class TestSamplerState:
    def test_terminal_completes(self):
        s = SamplerState()
        s.push(is_operator=False)
        assert s.done and s.emitted == 1

    def test_operator_opens_two_slots(self):
        s = SamplerState()
        s.push(is_operator=True)
        assert s.need == 2
        assert s.depth_stack == [1, 1]

    def test_tracks_full_tree(self):
        # ADD v1 MUL v2 C+0.3
        s = SamplerState()
        for is_op in (True, False, True, False, False):
            assert not s.done
            s.push(is_op)
        assert s.done and s.emitted == 5


class TestLegalMask:
    def test_done_state_only_eos(self, vocab):
        s = SamplerState(emitted=1, need=0, depth_stack=[])
        mask = legal_mask(s, vocab)
        assert mask[EOS]
        assert mask.sum() == 1

    def test_specials_never_legal_midway(self, vocab):
        mask = legal_mask(SamplerState(), vocab)
        assert not mask[PAD] and not mask[BOS] and not mask[EOS]

    def test_depth_cap_masks_operators(self, vocab):
        s = SamplerState(emitted=17, need=1, depth_stack=[17])
        mask = legal_mask(s, vocab)
        for i, sym in enumerate(vocab.symbols):
            if sym in expr.OPERATORS:
                assert not mask[i]
            elif i > 2:
                assert mask[i]

    def test_budget_masks_operators(self, vocab):
        # emitted + need + 3 > max_len leaves no room for op + terminals
        s = SamplerState(emitted=96, need=2, depth_stack=[3, 3])
        mask = legal_mask(s, vocab, max_len=100)
        assert not any(mask[i] for i, sym in enumerate(vocab.symbols)
                       if sym in expr.OPERATORS)
        s2 = SamplerState(emitted=95, need=2, depth_stack=[3, 3])
        mask2 = legal_mask(s2, vocab, max_len=100)
        assert any(mask2[i] for i, sym in enumerate(vocab.symbols)
                   if sym in expr.OPERATORS)


class TestSampling:
    def test_random_theta_always_parses(self, tiny_model, prims):
        rng = np.random.default_rng(0)
        parents = expr.ramped_half_and_half(64, 2, 5, prims, rng)
        tokens = sample_tokens_batch(
            tiny_model, [expr.serialize_prefix(p) for p in parents], 0.1,
            [np.random.default_rng(s)
             for s in rng.integers(0, 2 ** 63, size=64)])
        for toks in tokens:
            t = expr.parse_prefix(toks, prims)
            assert len(toks) <= 100
            assert expr.depth(t) <= 17

    def test_batch_independence(self, tiny_model, prims):
        rng = np.random.default_rng(1)
        parents = [expr.serialize_prefix(t) for t in
                   expr.ramped_half_and_half(8, 2, 4, prims, rng)]
        batched = sample_tokens_batch(
            tiny_model, parents, 0.1,
            [np.random.default_rng(100 + i) for i in range(8)])
        for i in range(8):
            solo = sample_tokens_batch(tiny_model, [parents[i]], 0.1,
                                       [np.random.default_rng(100 + i)])[0]
            assert solo == batched[i]

    def test_single_offspring_deterministic(self, tiny_model, prims):
        parent = expr.from_string("ADD v1 v2")
        a = sample_offspring(tiny_model, parent, 0.1,
                             np.random.default_rng(5))
        b = sample_offspring(tiny_model, parent, 0.1,
                             np.random.default_rng(5))
        assert a == b


class _ToyDataset:
    def __init__(self, seed=0, m=40):
        rng = np.random.default_rng(seed)
        self.X_train = rng.standard_normal((m, 4))
        self.X_test = rng.standard_normal((m, 4))
        y = self.X_train[:, 0] + self.X_train[:, 1]
        self.y_train, params = semantics.standardize(y)
        self.y_test, _ = semantics.standardize(
            self.X_test[:, 0] + self.X_test[:, 1], params)
        self.seed = seed


class TestSearch:
    def test_config_guard(self):
        with pytest.raises(ValueError):
            SearchConfig(sd_desired=-1.0)

    def test_trace_shape_and_monotonicity(self, tiny_model):
        cfg = SearchConfig(pop_size=10, generations=3)
        trace = run_tsgp(tiny_model, _ToyDataset(), cfg,
                         np.random.default_rng(0))
        assert trace.method == "tsgp"
        assert len(trace.generations) == 4
        best = [g.best_train_rmse for g in trace.generations]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))

    def test_primitives_from_vocab(self, vocab):
        prims = primitives_from_vocab(vocab)
        assert prims.n_variables == 4
