"""
Experiment configuration.

An experiment is a YAML document with up to three sections:

    model:       ModelConfig fields, optionally seeded by `preset: desk|replica`
    train:       TrainConfig fields
    experiment:  data paths, degradation mode, ablation toggle, metrics

Unknown sections or keys are rejected. The raw text is kept so it can be
echoed into checkpoints and reports. GLEAN_SEED overrides train.seed.
"""
import os
from dataclasses import dataclass, field, fields
from typing import List, Mapping, Optional

import yaml

from glean.models.assembly import ModelConfig
from glean.observatory.evaluation import METRICS
from glean.simulation.data import BLIND
from glean.training.trainer import TrainConfig
from glean.utils import ContractViolation, require

SEED_VARIABLE = 'GLEAN_SEED'

SECTIONS = ('model', 'train', 'experiment')
DEGRADATIONS = ('bicubic', 'blind')
ABLATIONS = ('enc_feats', 'bank_taps', 'decoder')


@dataclass
class ExperimentSpec:
    """
    Attributes:
        model:          Network settings, including the ablation levels.
        train:          Optimisation settings.
        train_dir:      Folder of training images.
        val_dir:        Folder of validation images (disjoint from train_dir).
        degradation:    'bicubic' or 'blind'; must agree with the task.
        ablate:         Toggle swept by `ablate`: 'enc_feats', 'bank_taps' or 'decoder'.
        metrics:        Metrics reported by `eval` and `ablate`.
        out_dir:        Where checkpoints and reports go.
        pretrain_steps: Bank pre-training steps run by `pretrain`.
        text:           The YAML document this spec was parsed from.
    """
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_dir: Optional[str] = None
    val_dir: Optional[str] = None
    degradation: Optional[str] = None
    ablate: Optional[str] = None
    metrics: List[str] = field(default_factory=lambda: list(METRICS))
    out_dir: str = 'runs'
    pretrain_steps: int = 1000
    text: str = ''

    def __post_init__(self):
        expected = 'blind' if self.model.task == BLIND else 'bicubic'
        if self.degradation is None:
            self.degradation = expected
        require(self.degradation in DEGRADATIONS, f"Unknown degradation mode: {self.degradation}")
        require(self.degradation == expected,
                f"Degradation '{self.degradation}' does not fit task '{self.model.task}'")
        require(self.ablate is None or self.ablate in ABLATIONS,
                f"Unknown ablation: {self.ablate}, expected one of {ABLATIONS}")
        self.metrics = list(self.metrics)
        unknown = [m for m in self.metrics if m not in METRICS]
        require(not unknown, f"Unknown metrics: {unknown}")
        require(self.pretrain_steps >= 0, f"pretrain_steps must be >= 0, got {self.pretrain_steps}")
        if self.train_dir and self.val_dir:
            require(os.path.realpath(self.train_dir) != os.path.realpath(self.val_dir),
                    "Validation and training folders must differ")

    @property
    def task(self) -> str:
        return self.model.task

    @property
    def variant(self) -> str:
        return self.model.variant


def _section(document: Mapping, name: str) -> dict:
    values = document.get(name) or {}
    require(isinstance(values, Mapping), f"Section '{name}' must be a mapping")
    return dict(values)


def parse_experiment(text: str, environ: Optional[Mapping[str, str]] = None) -> ExperimentSpec:
    """
    Parse a YAML experiment description.

    Raises:
        ContractViolation on malformed YAML, unknown sections or keys, or
        invalid values.
    """
    environ = os.environ if environ is None else environ
    try:
        document = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ContractViolation(f"Invalid experiment YAML: {e}")
    require(isinstance(document, Mapping), "An experiment must be a YAML mapping")
    unknown = sorted(set(document) - set(SECTIONS))
    require(not unknown, f"Unknown config sections: {unknown}")

    train = _section(document, 'train')
    if environ.get(SEED_VARIABLE):
        try:
            train['seed'] = int(environ[SEED_VARIABLE])
        except ValueError:
            raise ContractViolation(f"{SEED_VARIABLE} must be an integer, got {environ[SEED_VARIABLE]!r}")

    experiment = _section(document, 'experiment')
    known = {f.name for f in fields(ExperimentSpec)} - {'model', 'train', 'text'}
    unknown = sorted(set(experiment) - known)
    require(not unknown, f"Unknown experiment settings: {unknown}")

    try:
        return ExperimentSpec(
            model=ModelConfig.from_dict(_section(document, 'model')),
            train=TrainConfig.from_dict(train),
            text=text,
            **experiment,
        )
    except ContractViolation:
        raise
    except (TypeError, ValueError) as e:
        raise ContractViolation(f"Invalid experiment settings: {e}")


def load_experiment(path: str, environ: Optional[Mapping[str, str]] = None) -> ExperimentSpec:
    """Read and parse an experiment file."""
    require(os.path.isfile(path), f"No config file at {path}")
    with open(path) as fd:
        return parse_experiment(fd.read(), environ)
