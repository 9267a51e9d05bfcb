"""
Evaluation harness.

Scores restored images against ground truth with PSNR and with the cosine
similarity of embeddings from an injected embedding network, and writes an
aligned text table plus a JSON-lines sidecar with one record per image.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from glean.imaging.core import clamp, from_tensor, psnr, resize_to, to_tensor
from glean.simulation.data import SR, PairDataset
from glean.training.objectives import RandomConvEmbedder
from glean.utils import require

logger = logging.getLogger(__name__)

METRICS = ('psnr', 'cosine')


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two flattened arrays; 0 if either is zero."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    require(u.shape == v.shape, f"Cosine needs equal sizes, got {u.size} and {v.size}")
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0:
        return 0.0
    return float(np.dot(u, v) / norm)


@dataclass
class Report:
    """
    Per-image metric rows and their means.

    Attributes:
        title:   Table heading (e.g. the experiment config echo).
        metrics: Metric names, in column order.
        rows:    One dict per image with 'name' and a value per metric.
        means:   Mean of every metric over the rows.
    """
    title: str
    metrics: List[str]
    rows: List[Dict] = field(default_factory=list)

    @property
    def means(self) -> Dict[str, float]:
        return {m: float(np.mean([row[m] for row in self.rows])) for m in self.metrics} if self.rows else {}

    def table(self) -> str:
        """Aligned plain-text table, one line per image and a closing mean line."""
        width = max([len('mean')] + [len(str(row['name'])) for row in self.rows])
        header = f"{'image':<{width}}" + "".join(f"{m:>12}" for m in self.metrics)
        lines = [self.title, header, '-' * len(header)] if self.title else [header, '-' * len(header)]
        for row in self.rows:
            lines.append(f"{row['name']:<{width}}" + "".join(f"{row[m]:>12.4f}" for m in self.metrics))
        lines.append('-' * len(header))
        means = self.means
        lines.append(f"{'mean':<{width}}" + "".join(f"{means.get(m, float('nan')):>12.4f}" for m in self.metrics))
        return "\n".join(lines)

    def write(self, path: str):
        """Write `path` (table) and `path` with a .jsonl suffix (records)."""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w') as fd:
            fd.write(self.table() + "\n")
        with open(os.path.splitext(path)[0] + '.jsonl', 'w') as fd:
            for row in self.rows:
                fd.write(json.dumps(row) + "\n")
        logger.info("Wrote report %s", path)


def score(outputs: Sequence[np.ndarray], targets: Sequence[np.ndarray], names: Sequence[str],
          metrics: Sequence[str] = METRICS, embedder: Optional[torch.nn.Module] = None,
          title: str = '') -> Report:
    """
    Score (H, W, C) outputs against targets.

    Raises:
        ContractViolation on unknown metrics or mismatched lengths.
    """
    unknown = [m for m in metrics if m not in METRICS]
    require(not unknown, f"Unknown metrics: {unknown}, expected a subset of {METRICS}")
    require(len(outputs) == len(targets) == len(names),
            f"Need as many outputs, targets and names, got {len(outputs)}, {len(targets)}, {len(names)}")
    if 'cosine' in metrics and embedder is None:
        embedder = RandomConvEmbedder()

    report = Report(title, list(metrics))
    for name, output, target in zip(names, outputs, targets):
        row = {'name': name}
        if 'psnr' in metrics:
            row['psnr'] = psnr(output, target)
        if 'cosine' in metrics:
            with torch.no_grad():
                u = embedder(to_tensor(output)).numpy()
                v = embedder(to_tensor(target)).numpy()
            row['cosine'] = cosine_similarity(u, v)
        report.rows.append(row)
    return report


def restore_all(model, dataset: PairDataset) -> List[np.ndarray]:
    """Run the model over every pair of the dataset, clamped to [0, 1]."""
    model.eval()
    outputs = []
    with torch.no_grad():
        for i in range(len(dataset)):
            lr, _ = dataset.pair(i, 0, i)
            outputs.append(clamp(from_tensor(model(to_tensor(lr).to(model.device)))))
    return outputs


def evaluate(model, dataset: PairDataset, metrics: Sequence[str] = METRICS,
             embedder: Optional[torch.nn.Module] = None, title: str = '') -> Report:
    """Per-image and mean metrics of `model` over a validation set."""
    outputs = restore_all(model, dataset)
    targets = [dataset.pair(i, 0, i)[1] for i in range(len(dataset))]
    report = score(outputs, targets, dataset.images.names, metrics, embedder, title)
    logger.info("Evaluated %d images: %s", len(outputs), report.means)
    return report


def bicubic_baseline(dataset: PairDataset, metrics: Sequence[str] = ('psnr',),
                     embedder: Optional[torch.nn.Module] = None) -> Report:
    """Metrics of plain bicubic upsampling of the super-resolution inputs."""
    require(dataset.task == SR, f"The bicubic baseline needs a super-resolution set, got {dataset.task}")
    outputs, targets = [], []
    for i in range(len(dataset)):
        lr, hr = dataset.pair(i, 0, i)
        outputs.append(clamp(resize_to(lr, hr.shape[:2], 'bicubic')))
        targets.append(hr)
    return score(outputs, targets, dataset.images.names, metrics, embedder, 'bicubic')
