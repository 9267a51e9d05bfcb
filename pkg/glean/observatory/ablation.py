"""
Ablation sweeps.

One toggle is swept while everything else stays fixed: the highest bank
block fusing encoder features (enc_feats), the highest decoder slot fusing
bank features (bank_taps), or the decoder itself. Every setting starts from
the same pre-trained bank, trains for the same budget and is scored on the
same validation set.
"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Tuple

import torch

from glean.models.assembly import ModelConfig, build, build_discriminator
from glean.models.latent_bank import LIGHT
from glean.observatory.evaluation import Report, evaluate
from glean.simulation.data import PairDataset
from glean.training.trainer import Trainer
from glean.utils import require, seed_everything

logger = logging.getLogger(__name__)


def ablation_settings(cfg: ModelConfig, toggle: str) -> List[Tuple[str, ModelConfig]]:
    """
    Model configs of a sweep, ordered by toggle level.

    Raises:
        ContractViolation for unknown toggles, or encoder-feature sweeps on
        LightGLEAN (which has no fusion).
    """
    if toggle == 'enc_feats':
        require(cfg.variant != LIGHT, "LightGLEAN has no encoder features to ablate")
        return [(f"enc_feats_upto={level}", replace(cfg, enc_feats_upto=level))
                for level in range(-1, cfg.N + 1)]
    if toggle == 'bank_taps':
        return [(f"bank_taps_upto={level}", replace(cfg, bank_taps_upto=level))
                for level in range(-1, cfg.S + 1)]
    require(toggle == 'decoder', f"Unknown ablation toggle: {toggle}")
    return [("use_decoder=False", replace(cfg, use_decoder=False)),
            ("use_decoder=True", replace(cfg, use_decoder=True))]


def run_ablation(spec, train_set: PairDataset, val_set: PairDataset,
                 bank: Optional[Dict[str, torch.Tensor]] = None,
                 disc_state: Optional[Dict[str, torch.Tensor]] = None,
                 bank_manifest: Optional[Dict[str, str]] = None,
                 progress: bool = True) -> Report:
    """
    Train and evaluate every setting of spec.ablate.

    Args:
        spec:       ExperimentSpec naming the toggle, model and training budget.
        train_set:  Training pairs.
        val_set:    Validation pairs.
        bank:       Pre-trained bank weights shared by all settings.
        disc_state: Co-trained discriminator weights, if any.
        bank_manifest: Digests the bank weights are checked against.

    Returns:
        A report with one row per setting (mean metrics), in toggle order.
    """
    require(spec.ablate is not None, "The experiment names no ablation toggle")
    report = Report(f"ablation: {spec.ablate}", list(spec.metrics))

    for label, cfg in ablation_settings(spec.model, spec.ablate):
        seed_everything(spec.train.seed)
        model = build(cfg)
        if bank is not None:
            model.attach_bank(bank, bank_manifest)
        disc = build_discriminator(cfg)
        if disc_state is not None:
            disc.load_state_dict(disc_state)

        trainer = Trainer(model, disc, spec.train)
        trainer.fit(train_set, progress=progress)
        means = evaluate(model, val_set, spec.metrics).means
        report.rows.append({'name': label, **means})
        logger.info("%s: %s", label, means)

    return report
