import numpy as np
import pytest
import torch

from conftest import smooth_image, tiny_config
from glean.imaging.color import rgb_to_lab
from glean.imaging.core import from_tensor, to_tensor
from glean.models.assembly import PRESETS, ModelConfig, build, build_discriminator
from glean.models.decoder import ColorizationDecoder, Decoder, DirectEmitter
from glean.utils import ContractViolation


@pytest.mark.parametrize('factor', [8, 16, 32, 64])
def test_super_resolution_output_sizes(factor):
    model = build(tiny_config(in_size=4, out_size=4 * factor, decoder_channels=4))
    out = model(torch.rand(2, 3, 4, 4))
    assert tuple(out.shape) == (2, 3, 4 * factor, 4 * factor)


def test_glean_wiring():
    model = build(tiny_config(in_size=32, out_size=256, channel_base=256, channel_max=8, decoder_channels=4))
    assert model.encoder.chain is not None and len(model.encoder.chain.stages) == 3
    assert model.bank.fused_indices() == [0, 1, 2, 3]
    assert isinstance(model.decoder, Decoder)
    assert model.decoder.cfg.S == 3


def test_light_encoder_keeps_only_the_trunk():
    model = build(tiny_config(variant='light'))
    assert model.encoder.chain is None and model.encoder.head is None
    assert model.bank.block_indices() == [1, 2, 3]
    assert tuple(model(torch.rand(1, 3, 8, 8)).shape) == (1, 3, 32, 32)


def test_light_has_fewer_parameters_mostly_from_the_encoder():
    glean = build(tiny_config())
    light = build(tiny_config(variant='light'))
    count = lambda module: sum(p.numel() for p in module.parameters())
    assert count(light) < count(glean)
    assert count(glean.encoder) - count(light.encoder) > count(glean.bank) - count(light.bank)


def test_forward_is_deterministic():
    model = build(tiny_config())
    x = torch.rand(1, 3, 8, 8)
    torch.testing.assert_close(model(x), model(x), rtol=0, atol=0)


def test_gradients_flow_end_to_end():
    model = build(tiny_config()).double()
    x = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
    weights = torch.randn(1, 3, 32, 32, dtype=torch.float64)
    assert torch.autograd.gradcheck(lambda lr: (model(lr) * weights).sum(), (x,), eps=1e-6, atol=1e-4)


def test_input_size_mismatch_raises():
    with pytest.raises(ContractViolation):
        build(tiny_config())(torch.rand(1, 3, 16, 16))


def test_decoder_can_be_dropped():
    model = build(tiny_config(use_decoder=False))
    assert isinstance(model.decoder, DirectEmitter)
    assert tuple(model(torch.rand(1, 3, 8, 8)).shape) == (1, 3, 32, 32)


class TestColorization:

    def config(self, **overrides) -> ModelConfig:
        return tiny_config(task='colorization', in_size=16, out_size=16, **overrides)

    def test_first_conv_takes_luminance_and_decoder_emits_chroma(self):
        model = build(self.config())
        assert model.encoder.trunk.stem.in_channels == 1
        assert isinstance(model.decoder, ColorizationDecoder)
        assert tuple(model.forward_raw(torch.rand(1, 1, 16, 16)).shape) == (1, 2, 16, 16)

    def test_luminance_is_passed_through(self):
        model = build(self.config())
        L = torch.rand(2, 1, 16, 16)
        lab = model.forward_lab(L)
        torch.testing.assert_close(lab[:, :1], L * 100.0, rtol=0, atol=0)
        assert lab[:, 1:].min() >= -128 and lab[:, 1:].max() <= 127

    def test_neutral_chroma_keeps_luminance_after_rgb_conversion(self):
        model = build(self.config())
        emission = model.decoder.body[-1]
        with torch.no_grad():
            emission.weight.zero_()
            emission.bias.zero_()
        image = smooth_image(np.random.default_rng(0), 16)
        rgb = model.infer(image)
        expected = rgb_to_lab(image).L
        np.testing.assert_allclose(rgb_to_lab(rgb).L, expected, atol=0.5)

    def test_infer_is_the_clamped_forward(self):
        model = build(self.config())
        image = smooth_image(np.random.default_rng(1), 16)
        with torch.no_grad():
            expected = np.clip(from_tensor(model(to_tensor(model.prepare_input(image)))), 0.0, 1.0)
        np.testing.assert_array_equal(model.infer(image), expected)
        np.testing.assert_array_equal(model.infer(image), model.infer(image))

    def test_rgb_forward_stays_in_range(self):
        out = build(self.config())(torch.rand(1, 1, 16, 16))
        assert tuple(out.shape) == (1, 3, 16, 16)
        assert out.min() >= 0 and out.max() <= 1

    def test_resolution_change_is_rejected(self):
        with pytest.raises(ContractViolation):
            tiny_config(task='colorization', in_size=16, out_size=32)


class TestModelConfig:

    @pytest.mark.parametrize('overrides', [
        dict(variant='medium'), dict(task='denoise'), dict(out_size=8), dict(in_size=12),
        dict(variant='light', enc_feats_upto=0), dict(enc_feats_upto=2), dict(bank_taps_upto=3),
        dict(alpha_gen=-1.0),
    ])
    def test_inconsistent_settings_raise(self, overrides):
        with pytest.raises(ContractViolation):
            tiny_config(**overrides)

    def test_decoder_width_depends_on_the_variant(self):
        assert tiny_config().decoder_channels == 16
        assert tiny_config(variant='light').decoder_channels == 4

    def test_preset_seeds_defaults(self):
        cfg = ModelConfig.from_dict({'preset': 'replica', 'variant': 'light'})
        assert cfg.in_size == PRESETS['replica']['in_size'] and cfg.variant == 'light'
        assert (cfg.N, cfg.S, cfg.k) == (4, 4, 9)

    def test_unknown_keys_and_presets_raise(self):
        with pytest.raises(ContractViolation):
            ModelConfig.from_dict({'widht': 3})
        with pytest.raises(ContractViolation):
            ModelConfig.from_dict({'preset': 'huge'})

    def test_round_trips_through_a_dict(self):
        cfg = tiny_config(variant='light', bank_taps_upto=1)
        assert ModelConfig.from_dict(cfg.as_dict()) == cfg


class TestInfer:

    def test_super_resolution_needs_matching_input(self):
        model = build(tiny_config())
        assert model.infer(np.random.default_rng(0).random((8, 8, 3))).shape == (32, 32, 3)
        with pytest.raises(ContractViolation):
            model.infer(np.zeros((16, 16, 3)))

    def test_blind_inputs_are_resampled(self):
        model = build(tiny_config(task='blind'))
        out = model.infer(np.random.default_rng(0).random((5, 7, 3)))
        assert out.shape == (32, 32, 3)
        assert out.min() >= 0 and out.max() <= 1


def test_discriminator_scores_model_outputs():
    cfg = tiny_config()
    disc = build_discriminator(cfg)
    scores = disc(build(cfg)(torch.rand(3, 3, 8, 8)))
    assert tuple(scores.shape) == (3,)
    assert ((scores > 0) & (scores < 1)).all()
