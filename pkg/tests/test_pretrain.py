import numpy as np
import pytest
import torch

from conftest import same_weights, tiny_config, tiny_train
from glean.models.assembly import build
from glean.simulation.data import ImageSet, ingest
from glean.training.checkpoint import load_bank, save_bank
from glean.training.pretrain import pretrain_bank, sample_images
from glean.training.trainer import NonFiniteLossError
from glean.utils import ContractViolation


def test_zero_steps_returns_the_initialization(image_folder):
    cfg = tiny_config()
    images = ingest(image_folder, cfg.out_size)
    bank, _, history = pretrain_bank(images, cfg, tiny_train(), steps=0, progress=False)
    again, _, _ = pretrain_bank(images, cfg, tiny_train(), steps=0, progress=False)
    assert history == []
    assert same_weights(bank, again)


def test_pretrained_bank_plugs_into_both_variants(image_folder, tmp_path):
    cfg = tiny_config()
    images = ingest(image_folder, cfg.out_size)
    bank, disc, history = pretrain_bank(images, cfg, tiny_train(), steps=2, progress=False)
    assert len(history) == 2
    assert tuple(sample_images(bank, 2).shape) == (2, 3, 32, 32)

    path = str(tmp_path / 'bank.pt')
    save_bank(path, bank, disc, {'out_size': 32})
    archive = load_bank(path)
    state = archive['bank']
    for variant in ('glean', 'light'):
        model = build(tiny_config(variant=variant))
        model.attach_bank(state, archive['manifest'])
        name = f"blocks.b{model.bank.block_indices()[-1]}.conv.weight"
        assert torch.equal(dict(model.bank.named_parameters())[name], state[name])


def test_samples_do_not_collapse(image_folder):
    cfg = tiny_config()
    images = ingest(image_folder, cfg.out_size)
    bank, _, history = pretrain_bank(images, cfg, tiny_train(), steps=4, progress=False)
    assert all(np.isfinite(value) for values in history for value in values.values())
    spread = sample_images(bank, 64, seed=1).std(dim=(0, 2, 3))
    assert bool((spread > 0.01).all())


def test_non_finite_loss_stops_before_any_update(monkeypatch):
    steps = []

    class RecordingAdam(torch.optim.Adam):
        def step(self, closure=None):
            steps.append(self)
            return super().step(closure)

    monkeypatch.setattr(torch.optim, 'Adam', RecordingAdam)
    images = ImageSet([np.full((32, 32, 3), np.nan)] * 2, ['a', 'b'])
    with pytest.raises(NonFiniteLossError) as error:
        pretrain_bank(images, tiny_config(), tiny_train(), steps=3, progress=False)
    assert error.value.step == 0
    assert steps == []


def test_wrong_image_size_raises(image_folder):
    images = ingest(image_folder, 16)
    with pytest.raises(ContractViolation):
        pretrain_bank(images, tiny_config(), tiny_train(), steps=1, progress=False)
