"""Full-model wiring checks: embeddings, layers, forward contract, checkpoints."""

import numpy as np
import pytest

from gradcheck import check_gradients
from preformer import autodiff as ad
from preformer.autodiff import Tape, Tensor, backward
from preformer.checkpoint import load_checkpoint, save_checkpoint
from preformer.decomposition import build_decoder_inputs, decompose
from preformer.errors import ConfigMismatch, InvalidConfig, ParseError
from preformer.model import (
    ModelConfig,
    decoder_layer,
    embed,
    encoder_layer,
    forward,
    forward_arrays,
    init_params,
    named_parameters,
    param_count,
    positional_encoding,
)
from preformer.segcorr import OpCounter, mssc_forward


def toy_config(**overrides):
    base = dict(
        d_model=8,
        d_ff=8,
        n_heads=2,
        l0=2,
        e_layers=1,
        d_layers=1,
        input_len=16,
        pred_len=8,
        d_x=2,
        d_y=2,
        d_cov=4,
        decomp_kernel=5,
        dropout=0.0,
        predictive=True,
        multiscale=True,
    )
    base.update(overrides)
    return ModelConfig(**base)


def toy_window(cfg, seed=0):
    rng = np.random.default_rng(seed)
    enc_values = rng.normal(size=(cfg.input_len, cfg.d_x))
    enc_cov = rng.uniform(-0.5, 0.5, size=(cfg.input_len, cfg.d_cov))
    dec_cov = rng.uniform(
        -0.5, 0.5, size=(cfg.input_len // 2 + cfg.pred_len, cfg.d_cov)
    )
    return enc_values, enc_cov, dec_cov


def zero_all(params):
    for _, tensor in named_parameters(params):
        tensor.data[...] = 0.0


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(InvalidConfig):
            toy_config(n_heads=3)

    def test_input_len_must_be_even(self):
        with pytest.raises(InvalidConfig):
            toy_config(input_len=15)

    def test_dropout_range(self):
        with pytest.raises(InvalidConfig):
            toy_config(dropout=1.0)


class TestEmbed:
    def test_zero_input_zero_weights_gives_positional_encoding(self):
        cfg = toy_config()
        params = init_params(cfg, seed=0)
        zero_all(params)
        out = embed(
            Tensor(np.zeros((cfg.input_len, cfg.d_x))),
            Tensor(np.zeros((cfg.input_len, cfg.d_cov))),
            params.enc_embed_w,
            params.enc_embed_b,
            dropout=0.0,
        )
        np.testing.assert_array_equal(
            out.data, positional_encoding(cfg.input_len, cfg.d_model)
        )

    def test_output_shape(self):
        cfg = toy_config()
        params = init_params(cfg, seed=0)
        out = embed(
            Tensor(np.zeros((4, cfg.d_x))),
            Tensor(np.zeros((4, cfg.d_cov))),
            params.enc_embed_w,
            params.enc_embed_b,
            dropout=0.0,
        )
        assert out.data.shape == (4, 8)

    def test_one_hot_row_reads_weight_row(self):
        cfg = toy_config()
        params = init_params(cfg, seed=1)
        params.enc_embed_b.data[...] = 0.0
        values = np.zeros((3, cfg.d_x))
        values[1, 0] = 1.0  # one-hot on input feature 0 at time 1
        out = embed(
            Tensor(values),
            Tensor(np.zeros((3, cfg.d_cov))),
            params.enc_embed_w,
            params.enc_embed_b,
            dropout=0.0,
        )
        pe = positional_encoding(3, cfg.d_model)
        np.testing.assert_allclose(
            out.data[1], params.enc_embed_w.data[0] + pe[1], atol=1e-14
        )


class TestEncoderLayer:
    def test_shape_preserved(self):
        cfg = toy_config()
        params = init_params(cfg, seed=2)
        h = Tensor(np.random.default_rng(3).normal(size=(32, cfg.d_model)))
        out = encoder_layer(h, params.enc_layers[0], cfg, OpCounter())
        assert out.data.shape == (32, cfg.d_model)

    def test_zero_weights_collapse_to_double_decomposition(self):
        cfg = toy_config()
        params = init_params(cfg, seed=4)
        zero_all(params)
        h = Tensor(np.random.default_rng(5).normal(size=(16, cfg.d_model)))
        out = encoder_layer(h, params.enc_layers[0], cfg, OpCounter())
        inner = decompose(h, cfg.decomp_kernel).seasonal
        expected = decompose(inner, cfg.decomp_kernel).seasonal
        np.testing.assert_allclose(out.data, expected.data, atol=1e-14)

    def test_matches_scripted_composition(self):
        cfg = toy_config(d_model=8, n_heads=2)
        params = init_params(cfg, seed=6)
        lp = params.enc_layers[0]
        h = Tensor(np.random.default_rng(7).normal(size=(32, cfg.d_model)))
        out = encoder_layer(h, lp, cfg, OpCounter())

        attn = mssc_forward(h, h, h, lp.mssc, cfg.self_attention_config(), OpCounter())
        h1 = decompose(h + attn, cfg.decomp_kernel).seasonal
        ffn = ad.matmul(ad.relu(ad.matmul(h1, lp.ffn_w1) + lp.ffn_b1), lp.ffn_w2)
        ffn = ffn + lp.ffn_b2
        expected = decompose(h1 + ffn, cfg.decomp_kernel).seasonal
        np.testing.assert_allclose(out.data, expected.data, atol=1e-13)


class TestDecoderLayer:
    def test_shapes(self):
        cfg = toy_config()
        params = init_params(cfg, seed=8)
        rng = np.random.default_rng(9)
        h = Tensor(rng.normal(size=(16, cfg.d_model)))
        enc_out = Tensor(rng.normal(size=(cfg.input_len, cfg.d_model)))
        out, trend_delta = decoder_layer(
            h, enc_out, params.dec_layers[0], cfg, OpCounter()
        )
        assert out.data.shape == (16, cfg.d_model)
        assert trend_delta.data.shape == (16, cfg.d_x)

    def test_zero_trend_projection_zeroes_delta(self):
        cfg = toy_config()
        params = init_params(cfg, seed=10)
        lp = params.dec_layers[0]
        for w in (lp.trend_w1, lp.trend_w2, lp.trend_w3):
            w.data[...] = 0.0
        rng = np.random.default_rng(11)
        h = Tensor(rng.normal(size=(16, cfg.d_model)))
        enc_out = Tensor(rng.normal(size=(cfg.input_len, cfg.d_model)))
        _, trend_delta = decoder_layer(h, enc_out, lp, cfg, OpCounter())
        np.testing.assert_array_equal(trend_delta.data, 0.0 * trend_delta.data)

    def test_matches_scripted_composition(self):
        cfg = toy_config()
        params = init_params(cfg, seed=12)
        lp = params.dec_layers[0]
        rng = np.random.default_rng(13)
        h = Tensor(rng.normal(size=(16, cfg.d_model)))
        enc_out = Tensor(rng.normal(size=(cfg.input_len, cfg.d_model)))
        out, trend_delta = decoder_layer(h, enc_out, lp, cfg, OpCounter())

        d1 = decompose(
            h + mssc_forward(h, h, h, lp.self_mssc, cfg.self_attention_config(),
                             OpCounter()),
            cfg.decomp_kernel,
        )
        d2 = decompose(
            d1.seasonal
            + mssc_forward(
                d1.seasonal, enc_out, enc_out, lp.cross_mssc,
                cfg.cross_attention_config(), OpCounter(),
            ),
            cfg.decomp_kernel,
        )
        ffn = ad.matmul(
            ad.relu(ad.matmul(d2.seasonal, lp.ffn_w1) + lp.ffn_b1), lp.ffn_w2
        ) + lp.ffn_b2
        d3 = decompose(d2.seasonal + ffn, cfg.decomp_kernel)
        expected_delta = (
            ad.matmul(d1.trend, lp.trend_w1)
            + ad.matmul(d2.trend, lp.trend_w2)
            + ad.matmul(d3.trend, lp.trend_w3)
        )
        np.testing.assert_allclose(out.data, d3.seasonal.data, atol=1e-13)
        np.testing.assert_allclose(trend_delta.data, expected_delta.data, atol=1e-13)


class TestForward:
    @pytest.mark.parametrize(
        "d_model,d_ff,n_heads,l0",
        [(64, 256, 8, 3), (8, 32, 1, 16), (64, 256, 8, 4), (32, 128, 4, 6)],
    )
    def test_output_shape_hourly_configs(self, d_model, d_ff, n_heads, l0):
        cfg = toy_config(
            d_model=d_model,
            d_ff=d_ff,
            n_heads=n_heads,
            l0=l0,
            e_layers=2,
            d_layers=1,
            input_len=96,
            pred_len=96,
            d_x=7,
            d_y=7,
            decomp_kernel=25,
        )
        params = init_params(cfg, seed=14)
        enc_values, enc_cov, dec_cov = toy_window(cfg, seed=15)
        out = forward_arrays(
            Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg,
            OpCounter(),
        )
        assert out.data.shape == (96, 7)

    def test_zero_weights_give_bias_broadcast(self):
        cfg = toy_config()
        params = init_params(cfg, seed=16)
        zero_all(params)
        params.out_b.data[...] = np.array([1.5, -2.0])
        enc_values, enc_cov, dec_cov = toy_window(cfg, seed=17)
        out = forward_arrays(
            Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg,
            OpCounter(),
        )
        np.testing.assert_array_equal(
            out.data, np.tile([1.5, -2.0], (cfg.pred_len, 1))
        )

    def test_eval_mode_deterministic(self):
        cfg = toy_config(dropout=0.1)
        params = init_params(cfg, seed=18)
        enc_values, enc_cov, dec_cov = toy_window(cfg, seed=19)
        args = (Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg)
        a = forward_arrays(*args, OpCounter()).data
        b = forward_arrays(*args, OpCounter()).data
        assert np.array_equal(a, b)

    def test_training_dropout_seeded(self):
        cfg = toy_config(dropout=0.3)
        params = init_params(cfg, seed=20)
        enc_values, enc_cov, dec_cov = toy_window(cfg, seed=21)
        args = (Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg)
        a = forward_arrays(
            *args, OpCounter(), training=True, rng=np.random.default_rng(5)
        ).data
        b = forward_arrays(
            *args, OpCounter(), training=True, rng=np.random.default_rng(5)
        ).data
        c = forward_arrays(
            *args, OpCounter(), training=True, rng=np.random.default_rng(6)
        ).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_outputs_finite_for_bounded_inputs(self):
        cfg = toy_config()
        params = init_params(cfg, seed=22)
        rng = np.random.default_rng(23)
        enc_values = rng.uniform(-10, 10, size=(cfg.input_len, cfg.d_x))
        enc_cov = rng.uniform(-0.5, 0.5, size=(cfg.input_len, cfg.d_cov))
        dec_cov = rng.uniform(
            -0.5, 0.5, size=(cfg.input_len // 2 + cfg.pred_len, cfg.d_cov)
        )
        out = forward_arrays(
            Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg,
            OpCounter(),
        )
        assert np.all(np.isfinite(out.data))

    def test_batched_matches_single(self):
        cfg = toy_config()
        params = init_params(cfg, seed=24)
        rng = np.random.default_rng(25)
        B = 3
        enc_values = rng.normal(size=(B, cfg.input_len, cfg.d_x))
        enc_cov = rng.uniform(-0.5, 0.5, size=(B, cfg.input_len, cfg.d_cov))
        dec_cov = rng.uniform(
            -0.5, 0.5, size=(B, cfg.input_len // 2 + cfg.pred_len, cfg.d_cov)
        )
        batch_out = forward_arrays(
            Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg,
            OpCounter(),
        ).data
        for i in range(B):
            single = forward_arrays(
                Tensor(enc_values[i]), Tensor(enc_cov[i]), Tensor(dec_cov[i]),
                params, cfg, OpCounter(),
            ).data
            np.testing.assert_allclose(batch_out[i], single, atol=1e-12)

    def test_param_count_closed_form(self):
        for cfg in (toy_config(), toy_config(d_model=16, d_ff=64, n_heads=4,
                                             e_layers=2, d_layers=2, d_x=3, d_y=3)):
            params = init_params(cfg, seed=26)
            actual = sum(t.data.size for _, t in named_parameters(params))
            assert actual == param_count(cfg)

    def test_gradients_on_selected_parameters(self):
        cfg = toy_config()
        params = init_params(cfg, seed=27)
        enc_values, enc_cov, dec_cov = toy_window(cfg, seed=28)
        names = dict(named_parameters(params))
        chosen = [
            "enc_embed.w",
            "enc.0.mssc.wq",
            "dec.0.cross.wv",
            "dec.0.trend_w2",
            "out.w",
        ]
        arrays = [names[n].data for n in chosen]

        def loss(_):
            out = forward_arrays(
                Tensor(enc_values), Tensor(enc_cov), Tensor(dec_cov), params, cfg,
                OpCounter(),
            )
            return (out * out).mean()

        check_gradients(loss, arrays)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = toy_config()
        params = init_params(cfg, seed=29)
        extra = {"normalizer.mean": np.array([1.0, 2.0]),
                 "normalizer.std": np.array([3.0, 4.0])}
        path = tmp_path / "model.pfm"
        save_checkpoint(path, cfg, named_parameters(params), extra_tensors=extra)

        loaded_cfg, tensors = load_checkpoint(path)
        assert loaded_cfg == cfg
        for name, tensor in named_parameters(params):
            np.testing.assert_array_equal(tensors[name], tensor.data)
        np.testing.assert_array_equal(tensors["normalizer.mean"], extra["normalizer.mean"])

    def test_checksum_detects_corruption(self, tmp_path):
        cfg = toy_config()
        params = init_params(cfg, seed=30)
        path = tmp_path / "model.pfm"
        save_checkpoint(path, cfg, named_parameters(params))
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.pfm"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ParseError):
            load_checkpoint(path)


def test_forward_window_wrapper():
    from preformer.data import SeriesWindow

    cfg = toy_config()
    params = init_params(cfg, seed=31)
    enc_values, enc_cov, dec_cov = toy_window(cfg, seed=32)
    window = SeriesWindow(
        enc_values=enc_values,
        enc_cov=enc_cov,
        dec_cov=dec_cov,
        target=np.zeros((cfg.pred_len, cfg.d_y)),
    )
    out = forward(window, params, cfg, OpCounter())
    assert out.data.shape == (cfg.pred_len, cfg.d_y)

    wrong = SeriesWindow(
        enc_values=enc_values[:, :1],
        enc_cov=enc_cov,
        dec_cov=dec_cov,
        target=np.zeros((cfg.pred_len, cfg.d_y)),
    )
    with pytest.raises(ConfigMismatch):
        forward(wrong, params, cfg, OpCounter())
