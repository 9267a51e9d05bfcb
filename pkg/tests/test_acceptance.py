"""
End-to-end runs on the desk preset (16 -> 128). These train for thousands of
steps and are skipped unless pytest is run with `-m slow`.
"""
import numpy as np
import pytest

from conftest import make_trainer, pairs, same_weights, write_folder
from glean.config import ExperimentSpec
from glean.models.assembly import ModelConfig, build
from glean.observatory.ablation import run_ablation
from glean.observatory.evaluation import bicubic_baseline, evaluate
from glean.simulation.data import ingest
from glean.training.checkpoint import load_checkpoint, restore, save_checkpoint
from glean.training.pretrain import pretrain_bank
from glean.training.trainer import TrainConfig

pytestmark = pytest.mark.slow


def desk(**overrides) -> ModelConfig:
    return ModelConfig.from_dict({'preset': 'desk', **overrides})


def desk_train(**overrides) -> TrainConfig:
    return TrainConfig(**{**dict(total_iters=5000, batch_size=8, seed=0, checkpoint_every=0), **overrides})


@pytest.fixture(scope='module')
def desk_folders(tmp_path_factory):
    root = tmp_path_factory.mktemp('desk')
    return write_folder(root / 'train', 500, 128, seed=0), write_folder(root / 'val', 20, 128, seed=1)


@pytest.fixture(scope='module')
def desk_bank(desk_folders):
    cfg = desk()
    bank, disc, _ = pretrain_bank(ingest(desk_folders[0], cfg.out_size), cfg, desk_train(), steps=500,
                                  progress=False)
    return bank.state_dict(), disc.state_dict()


def trained(cfg, train, folders, bank):
    trainer = make_trainer(cfg, train, seed=train.seed)
    trainer.model.attach_bank(bank[0])
    trainer.disc.load_state_dict(bank[1])
    history = trainer.fit(pairs(folders[0], cfg, seed=train.seed), progress=False)
    return trainer, history


def test_bank_stays_frozen_through_training(desk_folders, desk_bank):
    trainer, history = trained(desk(), desk_train(total_iters=200), desk_folders, desk_bank)
    assert len(history) == 200
    assert trainer.frozen_diff() == []


def test_glean_beats_bicubic_and_light_keeps_up(desk_folders, desk_bank):
    val = pairs(desk_folders[1], desk())
    baseline = bicubic_baseline(val).means['psnr']

    glean, _ = trained(desk(), desk_train(), desk_folders, desk_bank)
    light, _ = trained(desk(variant='light'), desk_train(), desk_folders, desk_bank)
    glean_psnr = evaluate(glean.model, val, ['psnr']).means['psnr']
    light_psnr = evaluate(light.model, val, ['psnr']).means['psnr']

    assert glean_psnr >= baseline + 0.5
    assert light_psnr >= glean_psnr - 0.5


def test_colorization_losses_stay_finite(desk_folders):
    cfg = desk(task='colorization', in_size=64, out_size=64)
    trainer = make_trainer(cfg, desk_train(total_iters=1000))
    history = trainer.fit(pairs(desk_folders[0], cfg), progress=False)
    assert all(np.isfinite(value) for values in history for value in values.values())
    assert trainer.frozen_diff() == []


def test_more_encoder_features_do_not_hurt(desk_folders, desk_bank):
    cfg = desk()
    spec = ExperimentSpec(model=cfg, train=desk_train(total_iters=2000), ablate='enc_feats', metrics=['psnr'])
    report = run_ablation(spec, pairs(desk_folders[0], cfg), pairs(desk_folders[1], cfg), desk_bank[0],
                          desk_bank[1], progress=False)
    values = [row['psnr'] for row in report.rows]
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    assert len(drops) <= 1 and all(drop <= 0.1 for drop in drops)


def test_same_seed_same_run(desk_folders, desk_bank, tmp_path):
    runs = []
    for name in ('a', 'b'):
        trainer, history = trained(desk(), desk_train(total_iters=500), desk_folders, desk_bank)
        path = str(tmp_path / f"{name}.pt")
        save_checkpoint(path, trainer.model, trainer.manifest, trainer.disc, trainer)
        runs.append((history, restore(load_checkpoint(path))))

    (history_a, (model_a, disc_a, _)), (history_b, (model_b, disc_b, _)) = runs
    assert history_a == history_b
    assert same_weights(model_a, model_b) and same_weights(disc_a, disc_b)

    image = ingest(desk_folders[1], 16)[0]
    np.testing.assert_array_equal(model_a.infer(image), model_b.infer(image))
    reloaded = build(desk())
    reloaded.load_state_dict(model_a.state_dict())
    np.testing.assert_array_equal(reloaded.infer(image), model_a.infer(image))
