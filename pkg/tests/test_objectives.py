import math

import hypothesis.strategies as some
import pytest
import torch
from hypothesis import given

from glean.training.objectives import (EPSILON, NON_SATURATING, IdentityEmbedder, RandomConvEmbedder,
                                       adversarial_losses, make_embedder, mse_loss, perceptual_loss,
                                       total_generator_loss)
from glean.utils import ContractViolation


class TestMSE:

    def test_identical_images_give_zero(self):
        y = torch.rand(1, 3, 4, 4)
        assert float(mse_loss(y, y)) == 0.0

    def test_unit_offset_gives_one(self):
        y = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        assert float(mse_loss(y + 1, y)) == pytest.approx(1.0)

    def test_matches_brute_force(self):
        a, b = torch.rand(1, 3, 4, 4, dtype=torch.float64), torch.rand(1, 3, 4, 4, dtype=torch.float64)
        total = sum(float(a[0, c, i, j] - b[0, c, i, j]) ** 2
                    for c in range(3) for i in range(4) for j in range(4))
        assert float(mse_loss(a, b)) == pytest.approx(total / 48)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ContractViolation):
            mse_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


class TestPerceptual:

    def test_identity_embedder_reduces_to_mse(self):
        a, b = torch.rand(1, 3, 4, 4), torch.rand(1, 3, 4, 4)
        torch.testing.assert_close(perceptual_loss(a, b, IdentityEmbedder()), mse_loss(a, b))

    def test_identical_images_give_zero(self):
        y = torch.rand(1, 3, 8, 8)
        assert float(perceptual_loss(y, y, RandomConvEmbedder())) == 0.0

    def test_random_embedder_matches_brute_force(self):
        embedder = RandomConvEmbedder(seed=3).double()
        a, b = torch.rand(1, 3, 4, 4, dtype=torch.float64), torch.rand(1, 3, 4, 4, dtype=torch.float64)
        va, vb = embedder(a).flatten().tolist(), embedder(b).flatten().tolist()
        expected = sum((p - q) ** 2 for p, q in zip(va, vb)) / len(va)
        assert float(perceptual_loss(a, b, embedder)) == pytest.approx(expected)

    def test_random_embedder_is_reproducible_and_frozen(self):
        a, b = RandomConvEmbedder(seed=5), RandomConvEmbedder(seed=5)
        x = torch.rand(1, 3, 8, 8)
        torch.testing.assert_close(a(x), b(x), rtol=0, atol=0)
        assert not any(p.requires_grad for p in a.parameters())

    def test_unknown_embedder_raises(self):
        with pytest.raises(ContractViolation):
            make_embedder('alexnet')


class TestAdversarial:

    def test_even_odds(self):
        gen, disc = adversarial_losses(torch.tensor([0.5]), torch.tensor([0.5]))
        assert float(gen) == pytest.approx(math.log(0.5))
        assert float(disc) == pytest.approx(-2 * math.log(0.5))

    def test_fooling_nothing_gives_zero_generator_loss(self):
        gen, _ = adversarial_losses(torch.tensor([0.0]), torch.tensor([0.5]))
        assert float(gen) == pytest.approx(0.0, abs=1e-6)

    def test_boundaries_stay_finite(self):
        gen, disc = adversarial_losses(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]))
        assert torch.isfinite(gen) and torch.isfinite(disc)
        assert float(disc) <= -2 * math.log(EPSILON) + 1e-3

    @given(some.floats(0.01, 0.99), some.floats(0.01, 0.98))
    def test_disc_loss_falls_as_real_score_rises(self, fake, real):
        _, worse = adversarial_losses(torch.tensor([fake]), torch.tensor([real]))
        _, better = adversarial_losses(torch.tensor([fake]), torch.tensor([real + 0.01]))
        assert float(better) < float(worse)

    @given(some.floats(0.0, 1.0))
    def test_generator_loss_is_never_positive(self, fake):
        gen, _ = adversarial_losses(torch.tensor([fake]), torch.tensor([0.5]))
        assert float(gen) <= 0.0

    def test_non_saturating_variant(self):
        gen, _ = adversarial_losses(torch.tensor([0.25]), torch.tensor([0.5]), NON_SATURATING)
        assert float(gen) == pytest.approx(-math.log(0.25))

    def test_unknown_variant_raises(self):
        with pytest.raises(ContractViolation):
            adversarial_losses(torch.tensor([0.5]), torch.tensor([0.5]), 'wasserstein')


class TestTotal:

    def test_weighted_sum(self):
        assert float(total_generator_loss(1.0, 2.0, 3.0).total) == pytest.approx(1.05)

    def test_zero_weights_leave_the_mse(self):
        assert float(total_generator_loss(0.7, 2.0, -3.0, alpha_percep=0, alpha_gen=0).total) == pytest.approx(0.7)

    def test_zero_components(self):
        assert float(total_generator_loss(0.0, 0.0, 0.0).total) == 0.0

    @given(some.floats(0, 1), some.floats(0, 1))
    def test_linear_in_each_weight(self, a, b):
        one = float(total_generator_loss(1.0, 2.0, -3.0, alpha_percep=a, alpha_gen=b).total)
        two = float(total_generator_loss(1.0, 2.0, -3.0, alpha_percep=2 * a, alpha_gen=b).total)
        assert two - one == pytest.approx(2.0 * a, abs=1e-6)

    def test_breakdown_flags_non_finite_values(self):
        assert total_generator_loss(1.0, 2.0, -3.0).is_finite()
        assert not total_generator_loss(float('nan'), 2.0, -3.0).is_finite()


def test_loss_gradients_match_finite_differences():
    y = torch.rand(1, 3, 4, 4, dtype=torch.float64)
    embedder = RandomConvEmbedder(widths=(4, 4), seed=1).double()
    yhat = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)

    def objective(x):
        mse = mse_loss(x, y)
        percep = perceptual_loss(x, y, embedder)
        return total_generator_loss(mse, percep, torch.zeros((), dtype=torch.float64)).total

    assert torch.autograd.gradcheck(lambda x: mse_loss(x, y), (yhat,), eps=1e-6, rtol=1e-3)
    assert torch.autograd.gradcheck(lambda x: perceptual_loss(x, y, embedder), (yhat,), eps=1e-6, rtol=1e-3)
    assert torch.autograd.gradcheck(objective, (yhat,), eps=1e-6, rtol=1e-3)
