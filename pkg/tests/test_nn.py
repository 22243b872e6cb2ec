import numpy as np
import pytest

from cohclass import nn
from cohclass.errors import FormatError, ParameterError, ShapeError, TruncationError


def small_net():
    return (
        nn.LayerSpec("conv", 2, 3, "relu"),
        nn.LayerSpec("separable_conv", 3, 2, "none"),
        nn.LayerSpec("conv", 2, 1, "sigmoid"),
    )


def numeric_gradients(params, x, target, kind, h=1e-5):
    grads = []
    for layer in params.weights:
        out = {}
        for key, w in layer.items():
            g = np.zeros_like(w)
            it = np.nditer(w, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = w[idx]
                w[idx] = orig + h
                lp = nn.loss(kind, nn.forward(params, x)[0], target)
                w[idx] = orig - h
                lm = nn.loss(kind, nn.forward(params, x)[0], target)
                w[idx] = orig
                g[idx] = (lp - lm) / (2 * h)
                it.iternext()
            out[key] = g
        grads.append(out)
    return grads


def max_rel_err(analytic, numeric):
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        for key in ga:
            scale = np.maximum(np.abs(gn[key]), 1e-8)
            worst = max(worst, float((np.abs(ga[key] - gn[key]) / scale).max()))
    return worst


class TestSpecs:
    def test_bad_kind_and_activation(self):
        with pytest.raises(ParameterError):
            nn.LayerSpec("dense", 2, 2)
        with pytest.raises(ParameterError):
            nn.LayerSpec("conv", 2, 2, "tanh")
        with pytest.raises(ParameterError):
            nn.LayerSpec("maxpool3", 2, 3)
        with pytest.raises(ParameterError):
            nn.LayerSpec("maxpool3", 2, 2, "relu")

    def test_broken_chain(self):
        with pytest.raises(ParameterError):
            nn.validate_spec([nn.LayerSpec("conv", 2, 4), nn.LayerSpec("conv", 3, 1)])

    def test_infer_shape(self):
        layers = (
            nn.LayerSpec("conv", 2, 16, "relu"),
            nn.LayerSpec("maxpool3", 16, 16),
            nn.LayerSpec("upsample3", 16, 16),
            nn.LayerSpec("conv", 16, 2, "relu"),
        )
        assert nn.infer_shape(layers, (2, 60, 60)) == (2, 60, 60)
        with pytest.raises(ShapeError):
            nn.infer_shape(layers, (2, 50, 50))


class TestXavierInit:
    def test_deterministic(self):
        a = nn.xavier_init(small_net(), 42)
        b = nn.xavier_init(small_net(), 42)
        for la, lb in zip(a.weights, b.weights):
            for key in la:
                assert np.array_equal(la[key], lb[key])

    def test_biases_zero(self):
        params = nn.xavier_init(small_net(), 0)
        for spec, layer in zip(params.layers, params.weights):
            if "bias" in layer:
                assert not layer["bias"].any()

    def test_conv_bound_from_fans(self):
        # 16 in, 16 out, 3x3 kernel: bound = sqrt(6 / (144 + 144)) ~ 0.144
        params = nn.xavier_init([nn.LayerSpec("conv", 16, 16, "relu")], 1)
        w = params.weights[0]["weight"]
        bound = np.sqrt(6.0 / 288.0)
        assert np.abs(w).max() <= bound
        assert np.abs(w).max() > bound * 0.9  # actually fills the range

    def test_separable_parameter_count(self):
        # depthwise + pointwise + bias stays well under a full conv
        params = nn.xavier_init([nn.LayerSpec("separable_conv", 16, 16, "relu")], 2)
        count = params.num_parameters()
        assert count == 16 * 9 + 16 * 16 + 16 == 416
        full = nn.xavier_init([nn.LayerSpec("conv", 16, 16, "relu")], 2)
        assert full.num_parameters() == 16 * 16 * 9 + 16 == 2320
        assert count < full.num_parameters()


class TestForward:
    def test_delta_kernel_is_identity(self):
        params = nn.xavier_init([nn.LayerSpec("conv", 1, 1, "none")], 0)
        params.weights[0]["weight"][:] = 0
        params.weights[0]["weight"][0, 0, 1, 1] = 1.0
        params.weights[0]["bias"][:] = 0
        x = np.random.default_rng(1).uniform(0, 2, (2, 1, 7, 9)).astype(np.float32)
        y, _ = nn.forward(params, x)
        assert np.allclose(y, x, atol=1e-7)

    def test_zero_padding_visible_at_border(self):
        # an all-ones kernel on an all-ones image sums fewer pixels at the edge
        params = nn.xavier_init([nn.LayerSpec("conv", 1, 1, "none")], 0)
        params.weights[0]["weight"][:] = 1.0
        x = np.ones((1, 1, 5, 5), dtype=np.float32)
        y, _ = nn.forward(params, x)
        assert y[0, 0, 2, 2] == 9.0
        assert y[0, 0, 0, 0] == 4.0

    def test_pool_then_upsample_constant_fixed_point(self):
        layers = (nn.LayerSpec("maxpool3", 1, 1), nn.LayerSpec("upsample3", 1, 1))
        params = nn.xavier_init(layers, 0)
        x = np.full((1, 1, 9, 9), 2.5, dtype=np.float32)
        y, _ = nn.forward(params, x)
        assert np.array_equal(y, x)

    def test_sigmoid_at_zero(self):
        params = nn.xavier_init([nn.LayerSpec("conv", 1, 1, "sigmoid")], 0)
        params.weights[0]["weight"][:] = 0
        x = np.random.default_rng(2).standard_normal((1, 1, 6, 6)).astype(np.float32)
        y, _ = nn.forward(params, x)
        assert np.allclose(y, 0.5)

    def test_maxpool_shape_contract(self):
        params = nn.xavier_init([nn.LayerSpec("maxpool3", 1, 1)], 0)
        with pytest.raises(ShapeError):
            nn.forward(params, np.ones((1, 1, 7, 9), dtype=np.float32))

    def test_channel_mismatch(self):
        params = nn.xavier_init(small_net(), 0)
        with pytest.raises(ShapeError):
            nn.forward(params, np.ones((1, 3, 6, 6), dtype=np.float32))

    def test_output_shapes_match_inferred(self):
        rng = np.random.default_rng(3)
        layers = (
            nn.LayerSpec("conv", 2, 4, "relu"),
            nn.LayerSpec("maxpool3", 4, 4),
            nn.LayerSpec("separable_conv", 4, 3, "relu"),
            nn.LayerSpec("upsample3", 3, 3),
            nn.LayerSpec("conv", 3, 1, "sigmoid"),
        )
        params = nn.xavier_init(layers, 4)
        x = rng.uniform(0, 2, (2, 2, 9, 12)).astype(np.float32)
        y, _ = nn.forward(params, x)
        assert y.shape == (2,) + nn.infer_shape(layers, (2, 9, 12))


class TestLoss:
    def test_bce_half_is_log2(self):
        y = np.full((1, 1, 2, 2), 0.5)
        t = np.ones_like(y)
        assert nn.loss("bce", y, t) == pytest.approx(np.log(2), rel=1e-12)

    def test_mse_identity_zero(self):
        x = np.random.default_rng(4).standard_normal((2, 1, 3, 3))
        assert nn.loss("mse", x, x) == 0.0

    def test_bce_exact_targets_clamped(self):
        t = np.array([[[[0.0, 1.0]]]])
        value = nn.loss("bce", t, t)
        assert 0 < value < 1e-6

    def test_bce_rejects_soft_targets(self):
        y = np.full((1, 1, 1, 2), 0.5)
        with pytest.raises(ParameterError):
            nn.loss("bce", y, np.full_like(y, 0.25))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.loss("mse", np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            nn.loss("mae", np.zeros((1,) * 4), np.zeros((1,) * 4))


class TestBackward:
    def test_zero_upstream_gradient(self):
        params = nn.xavier_init(small_net(), 5)
        x = np.random.default_rng(5).uniform(0, 2, (2, 2, 6, 6)).astype(np.float32)
        y, caches = nn.forward(params, x)
        grads, gx = nn.backward(params, caches, np.zeros_like(y))
        assert not gx.any()
        for layer in grads:
            for g in layer.values():
                assert not g.any()

    def test_duplicated_batch_same_mean_gradient(self):
        params = nn.xavier_init(small_net(), 6, dtype=np.float64)
        rng = np.random.default_rng(6)
        x1 = rng.uniform(0, 2, (1, 2, 6, 6))
        t1 = rng.integers(0, 2, (1, 1, 6, 6)).astype(np.float64)
        x2 = np.concatenate([x1, x1])
        t2 = np.concatenate([t1, t1])
        out = {}
        for x, t in (("single", (x1, t1)), ("double", (x2, t2))):
            y, caches = nn.forward(params, t[0])
            grads, _ = nn.backward(params, caches, nn.loss_grad("bce", y, t[1]))
            out[x] = grads
        for a, b in zip(out["single"], out["double"]):
            for key in a:
                assert np.allclose(a[key], b[key], rtol=1e-12, atol=1e-15)

    def test_gradients_match_finite_differences(self):
        layers = (
            nn.LayerSpec("conv", 2, 3, "relu"),
            nn.LayerSpec("maxpool3", 3, 3),
            nn.LayerSpec("upsample3", 3, 3),
            nn.LayerSpec("separable_conv", 3, 1, "sigmoid"),
        )
        params = nn.xavier_init(layers, 7, dtype=np.float64)
        rng = np.random.default_rng(7)
        for layer in params.weights:
            # keep preactivations off the exact ReLU kink
            if "bias" in layer:
                layer["bias"] += rng.uniform(-0.3, 0.3, layer["bias"].shape)
        x = rng.uniform(0, 2, (2, 2, 6, 6))
        t = rng.integers(0, 2, (2, 1, 6, 6)).astype(np.float64)
        y, caches = nn.forward(params, x)
        grads, _ = nn.backward(params, caches, nn.loss_grad("bce", y, t))
        numeric = numeric_gradients(params, x, t, "bce")
        assert max_rel_err(grads, numeric) < 1e-4

    def test_stale_cache_rejected(self):
        params = nn.xavier_init(small_net(), 8)
        x = np.random.default_rng(8).uniform(0, 2, (1, 2, 6, 6)).astype(np.float32)
        y, caches = nn.forward(params, x)
        with pytest.raises(ShapeError):
            nn.backward(params, caches, np.zeros((1, 1, 5, 5), dtype=np.float32))
        with pytest.raises(ParameterError):
            nn.backward(params, caches[:-1], np.zeros_like(y))

    def test_inference_mode_has_no_caches(self):
        params = nn.xavier_init(small_net(), 9)
        x = np.random.default_rng(9).uniform(0, 2, (1, 2, 6, 6)).astype(np.float32)
        y_train, caches = nn.forward(params, x)
        y_pred = nn.predict(params, x)
        assert caches is not None
        assert np.array_equal(y_train, y_pred)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = nn.xavier_init(small_net(), 10)
        before = [{k: v.copy() for k, v in layer.items()} for layer in params.weights]
        zero = [{k: np.zeros_like(v) for k, v in layer.items()} for layer in params.weights]
        nn.adam_step(params, zero, 1e-3)
        assert params.step == 1
        for a, b in zip(before, params.weights):
            for key in a:
                assert np.array_equal(a[key], b[key])

    def test_first_step_is_signed_lr(self):
        params = nn.xavier_init([nn.LayerSpec("conv", 1, 1, "none")], 11)
        before = params.weights[0]["weight"].copy()
        grads = [{
            "weight": np.full_like(before, 0.37),
            "bias": np.zeros_like(params.weights[0]["bias"]),
        }]
        nn.adam_step(params, grads, 1e-2)
        delta = params.weights[0]["weight"] - before
        assert np.allclose(delta, -1e-2, rtol=1e-4)

    def test_trajectory_deterministic(self):
        runs = []
        for _ in range(2):
            params = nn.xavier_init(small_net(), 12)
            rng = np.random.default_rng(12)
            x = rng.uniform(0, 2, (2, 2, 6, 6)).astype(np.float32)
            t = rng.integers(0, 2, (2, 1, 6, 6)).astype(np.float32)
            for _ in range(5):
                y, caches = nn.forward(params, x)
                grads, _ = nn.backward(params, caches, nn.loss_grad("bce", y, t))
                nn.adam_step(params, grads, 1e-3)
            runs.append(nn.save_weights(params))
        assert runs[0] == runs[1]


class TestWeightsCodec:
    def test_roundtrip_bit_exact(self):
        params = nn.xavier_init(small_net(), 13)
        params.step = 17
        params.learning_rate = 5e-4
        data = nn.save_weights(params)
        back = nn.load_weights(data)
        assert nn.save_weights(back) == data
        assert back.step == 17
        assert back.layers == params.layers
        assert back.learning_rate == np.float32(5e-4)

    def test_roundtrip_without_adam(self):
        params = nn.xavier_init(small_net(), 14)
        data = nn.save_weights(params, include_adam=False)
        back = nn.load_weights(data)
        assert nn.save_weights(back, include_adam=False) == data
        for layer in back.adam_m:
            for v in layer.values():
                assert not v.any()

    def test_mismatched_spec_rejected(self):
        data = nn.save_weights(nn.xavier_init(small_net(), 15))
        with pytest.raises(FormatError):
            nn.load_weights(data, expected_layers=[nn.LayerSpec("conv", 2, 1, "relu")])

    def test_truncation_names_layer(self):
        data = nn.save_weights(nn.xavier_init(small_net(), 16))
        with pytest.raises(TruncationError, match="layer"):
            nn.load_weights(data[:-10])

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            nn.load_weights(b"JUNK" + b"\x00" * 64)

    def test_trailing_bytes_rejected(self):
        data = nn.save_weights(nn.xavier_init(small_net(), 17))
        with pytest.raises(FormatError):
            nn.load_weights(data + b"\x00")
