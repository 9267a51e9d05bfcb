"""
Parameter and FLOP accounting.

FLOPs are multiply-accumulates of every convolution (plain or modulated) and
linear map in one forward pass of one image; 1 MAC counts as 1 FLOP.
Element-wise operations, activations, resampling and pixel shuffles are not
counted. Large configurations can be profiled on the `meta` device, which
propagates shapes without allocating weights or activations.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import torch
import torch.nn as nn

from glean.models.assembly import GleanNet, ModelConfig, build
from glean.models.blocks import ModulatedConv2d

logger = logging.getLogger(__name__)

COMPONENTS = ('encoder', 'generator', 'fusion', 'decoder')


def count_parameters(module: nn.Module) -> int:
    """Number of weight elements (trainable or not)."""
    return sum(p.numel() for p in module.parameters())


def layer_macs(module: nn.Module, inputs, output) -> int:
    """MACs of one call of a convolution or linear layer, per sample."""
    if isinstance(module, nn.Conv2d):
        batch = output.shape[0]
        kh, kw = module.kernel_size
        per_output = (module.in_channels // module.groups) * kh * kw
        return output.numel() // batch * per_output
    if isinstance(module, ModulatedConv2d):
        batch = output.shape[0]
        return output.numel() // batch * module.in_channels * module.kernel_size ** 2
    if isinstance(module, nn.Linear):
        batch = output.shape[0]
        return output.numel() // batch * module.in_features
    return 0


def count_macs(module: nn.Module, *inputs, forward=None) -> Dict[str, int]:
    """
    MACs per named sub-module for one forward pass.

    Args:
        module:  Network to profile.
        inputs:  Forward arguments (batch of one, or per-sample counts are taken).
        forward: Callable used instead of module(*inputs).

    Returns:
        Qualified module name -> MACs of that module.
    """
    counts = {}
    handles = []
    for name, sub in module.named_modules():
        if isinstance(sub, (nn.Conv2d, nn.Linear, ModulatedConv2d)):
            def hook(m, args, out, name=name):
                counts[name] = counts.get(name, 0) + layer_macs(m, args, out)
            handles.append(sub.register_forward_hook(hook))
    try:
        with torch.no_grad():
            (forward or module)(*inputs)
    finally:
        for handle in handles:
            handle.remove()
    return counts


def component_of(name: str) -> str:
    """Component a qualified parameter or module name belongs to."""
    if name.startswith('encoder'):
        return 'encoder'
    if name.startswith('bank'):
        return 'fusion' if '.fusion' in name else 'generator'
    return 'decoder'


@dataclass
class ComplexityReport:
    """
    Attributes:
        params: Parameters per component (encoder, generator, fusion, decoder).
                'generator' holds the bank core plus the LightGLEAN adapter
                and shared latents; 'fusion' the fusion convolutions.
        flops:  MACs per component for one forward pass of one image.
    """
    params: Dict[str, int] = field(default_factory=dict)
    flops: Dict[str, int] = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(self.params.values())

    @property
    def total_flops(self) -> int:
        return sum(self.flops.values())

    def reduction(self, reference: 'ComplexityReport') -> Tuple[float, float]:
        """Fractional (params, flops) reduction of this report relative to `reference`."""
        return (1.0 - self.total_params / reference.total_params,
                1.0 - self.total_flops / reference.total_flops)

    def table(self) -> str:
        lines = [f"{'component':<12}{'params':>16}{'GFLOPs':>12}"]
        for name in COMPONENTS:
            lines.append(f"{name:<12}{self.params.get(name, 0):>16,}{self.flops.get(name, 0) / 1e9:>12.3f}")
        lines.append(f"{'total':<12}{self.total_params:>16,}{self.total_flops / 1e9:>12.3f}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {'params': dict(self.params), 'flops': dict(self.flops),
                'total_params': self.total_params, 'total_flops': self.total_flops}


def complexity(model: GleanNet) -> ComplexityReport:
    """Itemised parameter and FLOP counts of a built model."""
    params = {name: 0 for name in COMPONENTS}
    for name, p in model.named_parameters():
        params[component_of(name)] += p.numel()

    first = next(model.parameters())
    size = model.cfg.in_size
    x = torch.zeros(1, model.cfg.in_channels, size, size, device=first.device, dtype=first.dtype)
    flops = {name: 0 for name in COMPONENTS}
    for name, macs in count_macs(model, x, forward=model.forward_raw).items():
        flops[component_of(name)] += macs

    return ComplexityReport(params, flops)


def profile(cfg: ModelConfig, device: str = 'meta') -> ComplexityReport:
    """Build a model for `cfg` on `device` (shape-only by default) and count it."""
    with torch.device(device):
        model = build(cfg)
    report = complexity(model)
    logger.info("%s %d->%d: %d params, %.3f GFLOPs", cfg.variant, cfg.in_size, cfg.out_size,
                report.total_params, report.total_flops / 1e9)
    return report
