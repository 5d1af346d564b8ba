import numpy as np
import pytest

from snipmotion import autodiff as ad
from snipmotion.model import (ModelConfig, SnippetToMotion, decode_checkpoint, encode_checkpoint, load_checkpoint,
                              save_checkpoint)
from snipmotion.train import total_loss

from conftest import central_diff, rel_err


def make(**kw):
    cfg = dict(joints=3, history=6, horizon=8, hidden=4, blocks=1, snippets=3, stages=2, seed=11)
    cfg.update(kw)
    return SnippetToMotion(ModelConfig(**cfg))


def history(rng, B=2, H=6, J=3):
    return rng.normal(scale=20, size=(B, H, J, 3))


class TestConfig:
    @pytest.mark.parametrize("field", ["stages", "snippets", "hidden", "blocks"])
    def test_zero_rejected(self, field):
        with pytest.raises(ValueError, match=field):
            ModelConfig(joints=3, history=6, horizon=8, **{field: 0})

    def test_defaults(self):
        c = ModelConfig(joints=3, history=10, horizon=10)
        assert (c.stages, c.snippets, c.blocks, c.hidden) == (2, 4, 3, 128)

    def test_history_too_short(self):
        with pytest.raises(ValueError):
            ModelConfig(joints=3, history=4, horizon=10, snippets=4)

    def test_dict_round_trip(self):
        c = ModelConfig(joints=4, history=8, horizon=10, graph_mode="separate")
        assert ModelConfig.from_dict(c.to_dict()) == c


class TestSeedInput:
    def test_constant_history(self):
        model = make()
        pose = np.random.default_rng(0).normal(size=(3, 3))
        x = model.seed_input(np.broadcast_to(pose, (6, 3, 3))).data.reshape(14, 3, 3)
        assert np.all(x == pose)

    def test_prev_refined_fills_future(self):
        rng = np.random.default_rng(1)
        model = make()
        past, future = history(rng, B=1), rng.normal(size=(1, 8, 3, 3))
        x = model.seed_input(past, future).data.reshape(14, 3, 3)
        np.testing.assert_array_equal(x[6:], future[0])
        np.testing.assert_array_equal(x[:6], past[0])

    def test_replication_per_slot(self):
        rng = np.random.default_rng(2)
        model = make()
        past = history(rng)
        x = model.seed_input(past).data
        for b in range(2):
            for t in range(14):
                for j in range(3):
                    src = past[b, t, j] if t < 6 else past[b, 5, j]
                    np.testing.assert_array_equal(x[b, t * 3 + j], src)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            make().seed_input(np.zeros((1, 5, 3, 3)))
        with pytest.raises(ValueError):
            make().seed_input(np.zeros((1, 6, 3, 3)), np.zeros((1, 7, 3, 3)))


class TestTransitionals:
    def test_all_frames_equal_full_layer(self):
        rng = np.random.default_rng(3)
        model = make()
        x = model.seed_input(history(rng))
        out = model.predict_transitionals(0, x, np.arange(8)).data
        full = model.full_last_layer(0, x).data.reshape(2, 14, 3, 3)[:, 6:]
        np.testing.assert_allclose(out, full, rtol=0, atol=1e-12)

    def test_selected_rows_match_full_product_oracle(self):
        # J=3, F=6, d=4
        rng = np.random.default_rng(4)
        model = make(history=3, horizon=3, snippets=1)
        x = model.seed_input(history(rng, B=1, H=3)).data[0]
        last = model.stages[0]["trans.2"]
        A = model.graph.effective(last.adj).data
        h = model.hidden_features(0, x).data.reshape(18, 4)
        full = A @ h @ last.weight.data + x
        targets = [0, 2]
        expect = np.stack([full[(3 + t) * 3:(4 + t) * 3] for t in targets])[None]
        np.testing.assert_allclose(model.predict_transitionals(0, x, targets).data, expect, rtol=0, atol=1e-12)

    def test_zero_last_weights_return_seed(self):
        rng = np.random.default_rng(5)
        model = make()
        model.stages[0]["trans.2"].weight.data[:] = 0
        past = history(rng)
        out = model.predict_transitionals(0, model.seed_input(past), [0, 3, 7]).data
        np.testing.assert_array_equal(out, np.broadcast_to(past[:, -1:], out.shape))
        out = model.predict_transitionals(0, np.zeros((1, 42, 3)), [0, 3, 7]).data
        assert np.all(out == 0)

    def test_out_of_window(self):
        model = make()
        with pytest.raises(IndexError):
            model.predict_transitionals(0, model.seed_input(np.zeros((1, 6, 3, 3))), [0, 8])


class TestRefine:
    def test_identity_at_init(self):
        rng = np.random.default_rng(6)
        model = make()
        approx = rng.normal(size=(2, 8, 3, 3))
        np.testing.assert_array_equal(model.refine(0, history(rng), approx).data, approx)

    def test_history_sensitivity(self):
        rng = np.random.default_rng(7)
        model = make()
        dec = model.stages[0]["refine.dec"].weight
        dec.data = rng.normal(size=dec.shape)
        past, approx = history(rng, B=1), rng.normal(size=(1, 8, 3, 3))
        base = model.refine(0, past, approx).data
        past2 = past.copy()
        past2[0, 0, 0] += 1.0
        assert np.abs(model.refine(0, past2, approx).data - base).max() > 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            make().refine(0, np.zeros((1, 6, 3, 3)), np.zeros((1, 7, 3, 3)))

    def test_refiner_gradients(self):
        rng = np.random.default_rng(8)
        model = make(stages=1)
        for name, p in model.named_parameters():
            if "dec" in name:
                p.data = rng.normal(scale=0.3, size=p.shape)
        past, truth = history(rng), rng.normal(scale=20, size=(2, 8, 3, 3))
        targets = model.targets_for(past)

        def f():
            return float(total_loss(model.forward(past, targets), truth)[0].data)

        loss, _ = total_loss(model.forward(past, targets), truth)
        params = [p for n, p in model.named_parameters() if "refine" in n]
        ad.backward(loss, params)
        for p in params:
            for idx in zip(*np.nonzero(p.data)):
                fd = central_diff(f, p.data, idx)
                assert rel_err(p.grad[idx], fd) < 1e-6, (p.name, idx)
                break


class TestForward:
    def test_output_structure(self):
        rng = np.random.default_rng(9)
        model = make()
        outs = model.forward(history(rng))
        assert len(outs) == 2
        for o in outs:
            assert o.transitionals.shape == (2, 4, 3, 3)
            assert o.refined.shape == (2, 8, 3, 3)
            for b in range(2):
                np.testing.assert_array_equal(o.approx.data[b, o.targets[b]], o.transitionals.data[b])

    def test_single_stage_matches_manual(self):
        rng = np.random.default_rng(10)
        model = make(stages=1)
        past = history(rng)
        targets = model.targets_for(past)
        out = model.forward(past, targets)[0]
        trans = model.predict_transitionals(0, model.seed_input(past), targets)
        refined = model.refine(0, past, model.assemble(trans, targets))
        np.testing.assert_array_equal(out.refined.data, refined.data)

    def test_shared_targets_identical(self):
        rng = np.random.default_rng(11)
        model = make(scheme="shared")
        past = history(rng, B=4)
        model.fit_shared(past)
        targets = model.forward(past)[0].targets
        assert np.all(targets == targets[0])

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        past = history(rng)
        a = make().predict(past)
        b = make().predict(past)
        assert a.tobytes() == b.tobytes()

    def test_parameter_count_independent_of_data(self):
        a, b = make(seed=1), make(seed=2)
        a.forward(history(np.random.default_rng(0)))
        assert a.parameter_count() == b.parameter_count()
        # 3 trans + enc + 2 per block + dec = 7 layers per stage at blocks=1
        n = 14 * 3
        assert a.parameter_count() == 2 * (7 * n * n + 3 * 4 + 4 * 4 + 4 * 3 + 3 * 4 + 2 * 4 * 4 + 4 * 3)

    def test_separate_mode_runs(self):
        model = make(graph_mode="separate")
        out = model.predict(history(np.random.default_rng(13)))
        assert out.shape == (2, 8, 3, 3) and np.all(np.isfinite(out))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = make(scheme="shared")
        for p in model.parameters():
            p.data = p.data + np.random.default_rng(0).normal(size=p.shape) * 1e-3
        model.shared_targets = [0, 3, 5, 7]
        save_checkpoint(model, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.config == model.config and back.shared_targets == model.shared_targets
        for (n1, p1), (n2, p2) in zip(model.named_parameters(), back.named_parameters()):
            assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
        assert encode_checkpoint(back) == encode_checkpoint(model)

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="magic"):
            decode_checkpoint(b"NOTACKPT" + bytes(8))

    def test_truncated(self):
        blob = encode_checkpoint(make())
        with pytest.raises(Exception):
            decode_checkpoint(blob[:-8])
