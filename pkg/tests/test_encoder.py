import pytest
import torch

from glean.models.encoder import Encoder, EncoderConfig
from glean.utils import ContractViolation


def small_encoder(**overrides) -> Encoder:
    cfg = EncoderConfig(**{**dict(in_size=32, n_rrdb_blocks=1, base_channels=8, N=3, d_latent=8, k=7),
                           **overrides})
    return Encoder(cfg)


class TestRRDBExtract:

    def test_keeps_the_input_resolution(self):
        encoder = small_encoder()
        f0 = encoder.rrdb_extract(torch.rand(2, 3, 32, 32))
        assert tuple(f0.shape) == (2, 8, 32, 32)

    def test_zeroed_trunk_reduces_to_the_stem(self):
        encoder = small_encoder()
        with torch.no_grad():
            encoder.trunk.trunk.weight.zero_()
            encoder.trunk.trunk.bias.zero_()
        x = torch.rand(1, 3, 32, 32)
        torch.testing.assert_close(encoder.rrdb_extract(x), encoder.trunk.stem(x), rtol=0, atol=0)

    def test_activations_stay_finite(self):
        encoder = small_encoder()
        f0, pyramid, C = encoder(10 * torch.randn(2, 3, 32, 32))
        assert torch.isfinite(f0).all() and torch.isfinite(C).all()
        assert all(torch.isfinite(level).all() for level in pyramid.levels)

    def test_wrong_size_raises(self):
        with pytest.raises(ContractViolation):
            small_encoder().rrdb_extract(torch.rand(1, 3, 16, 16))

    def test_wrong_channel_count_raises(self):
        with pytest.raises(ContractViolation):
            small_encoder().rrdb_extract(torch.rand(1, 1, 32, 32))


class TestDownsampleChain:

    def test_resolutions_halve_down_to_4px(self):
        encoder = small_encoder()
        pyramid = encoder.downsample_chain(torch.rand(1, 8, 32, 32))
        assert pyramid.resolutions == [32, 16, 8, 4]
        assert [level.shape[1] for level in pyramid.levels] == [8, 16, 32, 64]

    def test_zero_depth_keeps_only_f0(self):
        encoder = small_encoder(in_size=4, N=0)
        f0 = torch.rand(1, 8, 4, 4)
        pyramid = encoder.downsample_chain(f0)
        assert pyramid.N == 0
        assert pyramid.levels[0] is f0

    def test_depth_too_large_is_rejected(self):
        with pytest.raises(ContractViolation):
            EncoderConfig(in_size=16, N=3)


class TestLatentHead:

    def test_shape_is_d_by_k(self):
        encoder = small_encoder()
        _, _, C = encoder(torch.rand(3, 3, 32, 32))
        assert tuple(C.shape) == (3, 8, 7)

    def test_zero_input_and_bias_give_zero_latents(self):
        encoder = small_encoder()
        with torch.no_grad():
            encoder.head.conv.bias.zero_()
            encoder.head.linear.bias.zero_()
        C = encoder.latent_head(torch.zeros(1, 64, 4, 4))
        assert torch.count_nonzero(C) == 0

    def test_is_affine(self):
        encoder = small_encoder().double()
        a, b = torch.rand(1, 64, 4, 4, dtype=torch.float64), torch.rand(1, 64, 4, 4, dtype=torch.float64)
        zero = encoder.latent_head(torch.zeros_like(a))
        lhs = encoder.latent_head(a + b) - zero
        rhs = (encoder.latent_head(a) - zero) + (encoder.latent_head(b) - zero)
        torch.testing.assert_close(lhs, rhs)

    def test_rejects_the_wrong_level(self):
        with pytest.raises(ContractViolation):
            small_encoder().latent_head(torch.zeros(1, 64, 8, 8))


def test_trunk_only_encoder_has_no_chain():
    encoder = small_encoder(full=False)
    f0, pyramid, C = encoder(torch.rand(1, 3, 32, 32))
    assert pyramid is None and C is None
    assert not any(name.startswith(('chain', 'head')) for name, _ in encoder.named_parameters())


def test_gradients_match_finite_differences():
    encoder = EncoderConfig(in_size=8, n_rrdb_blocks=1, base_channels=2, N=1, d_latent=2, k=2)
    encoder = Encoder(encoder).double()
    x = torch.rand(1, 3, 8, 8, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda lr: encoder(lr)[2], (x,), eps=1e-6, atol=1e-4)
