"""
Checkpoint archives.

A checkpoint is a torch-serialised dict holding a format tag and version,
the experiment config text, the parsed model config, network and optimizer
states, the step counter, RNG state and the frozen-weight manifest
(parameter name -> SHA-256). Loading re-hashes the frozen weights and
rejects archives whose manifest does not match.
"""
import logging
import os
from typing import Optional

import torch

from glean.models.assembly import GleanNet, ModelConfig, build, build_discriminator
from glean.models.latent_bank import FrozenManifest, core_manifest
from glean.utils import ContractViolation

logger = logging.getLogger(__name__)

FORMAT = 'glean-checkpoint'
BANK_FORMAT = 'glean-bank'
VERSION = 1


class CheckpointError(ContractViolation):
    """Raised for unreadable, corrupt or mismatched archives."""


def _write(path: str, payload: dict):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + '.tmp'
    torch.save(payload, tmp)
    os.replace(tmp, path)


def _read(path: str, expected_format: str) -> dict:
    try:
        payload = torch.load(path, map_location='cpu', weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f"No checkpoint at {path}")
    except Exception as e:
        raise CheckpointError(f"Unable to read checkpoint {path}: {e}")

    if not isinstance(payload, dict) or payload.get('format') != expected_format:
        raise CheckpointError(f"{path} is not a {expected_format} archive")
    if payload.get('version') != VERSION:
        raise CheckpointError(f"{path} has version {payload.get('version')}, expected {VERSION}")
    return payload


def save_checkpoint(path: str, model: GleanNet, manifest: FrozenManifest, disc=None, trainer=None,
                    config_text: str = ''):
    """
    Write a training checkpoint.

    Args:
        path:        Destination file; written atomically.
        model:       The restoration network.
        manifest:    Digests of the frozen bank weights.
        disc:        Discriminator, if any.
        trainer:     Trainer whose optimizer state, step and RNG state are kept.
        config_text: Experiment config, echoed verbatim.
    """
    payload = {
        'format': FORMAT,
        'version': VERSION,
        'config': config_text,
        'model_config': model.cfg.as_dict(),
        'model': model.state_dict(),
        'disc': disc.state_dict() if disc is not None else None,
        'manifest': dict(manifest),
        'step': 0,
        'rng': torch.get_rng_state(),
    }
    if trainer is not None:
        payload.update(trainer.state_dict())
    _write(path, payload)
    logger.info("Saved checkpoint %s (step %d)", path, payload['step'])


def load_checkpoint(path: str) -> dict:
    """
    Read and validate a training checkpoint.

    Raises:
        CheckpointError if the file is missing, corrupt or of another format.
    """
    payload = _read(path, FORMAT)
    for key in ('model_config', 'model', 'manifest'):
        if key not in payload:
            raise CheckpointError(f"{path} has no '{key}' entry")
    return payload


def restore(payload: dict, expected: Optional[ModelConfig] = None):
    """
    Rebuild the model (and discriminator, if stored) from a checkpoint.

    Returns:
        (model, disc, manifest); disc is None when the archive holds none.

    Raises:
        CheckpointError if `expected` differs from the stored model config, if
        the weights do not fit, or if frozen weights differ from the manifest.
    """
    stored = ModelConfig(**payload['model_config'])
    if expected is not None and expected.as_dict() != stored.as_dict():
        changed = sorted(k for k, v in expected.as_dict().items() if stored.as_dict().get(k) != v)
        raise CheckpointError(f"Checkpoint model config differs in: {changed}")

    model = build(stored)
    try:
        model.load_state_dict(payload['model'])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint weights do not fit the model: {e}")

    manifest = model.freeze_bank()
    problems = FrozenManifest(payload['manifest']).diff(dict(model.named_parameters()))
    problems += [f"unexpected: {name}" for name in manifest if name not in payload['manifest']]
    if problems:
        raise CheckpointError("Frozen weights do not match the manifest: " + ", ".join(problems))

    disc = None
    if payload.get('disc') is not None:
        disc = build_discriminator(stored)
        disc.load_state_dict(payload['disc'])

    return model, disc, manifest


def save_bank(path: str, bank, disc, bank_config: dict, config_text: str = ''):
    """Write a pre-trained latent bank with its discriminator and the digests of its core weights."""
    _write(path, {
        'format': BANK_FORMAT,
        'version': VERSION,
        'config': config_text,
        'bank_config': bank_config,
        'bank': bank.state_dict(),
        'disc': disc.state_dict(),
        'manifest': dict(core_manifest(bank)),
    })
    logger.info("Saved latent bank %s", path)


def load_bank(path: str) -> dict:
    """
    Read a pre-trained latent bank archive.

    Returns:
        The archive dict; 'bank' holds the generator state, 'disc' the
        co-trained discriminator state and 'manifest' the core digests.

    Raises:
        CheckpointError if the archive is unreadable or its weights differ
        from the manifest.
    """
    payload = _read(path, BANK_FORMAT)
    for key in ('bank', 'manifest'):
        if key not in payload:
            raise CheckpointError(f"{path} has no '{key}' entry")

    problems = FrozenManifest(payload['manifest']).diff(payload['bank'])
    if problems:
        raise CheckpointError("Bank weights do not match the manifest: " + ", ".join(problems))
    return payload
