import torch
import torch.nn as nn

from conftest import tiny_config
from glean.models.assembly import ModelConfig, build
from glean.observatory.complexity import (COMPONENTS, ComplexityReport, complexity, component_of,
                                          count_macs, count_parameters, profile)


def test_single_convolution_hand_count():
    conv = nn.Conv2d(8, 8, kernel_size=3, padding=1)
    assert count_parameters(conv) == 3 * 3 * 8 * 8 + 8 == 584
    macs = count_macs(conv, torch.zeros(1, 8, 16, 16))
    assert macs == {'': 16 * 16 * 8 * 3 * 3 * 8}


def test_linear_layers_are_counted():
    net = nn.Sequential(nn.Flatten(), nn.Linear(12, 5))
    assert count_macs(net, torch.zeros(1, 3, 2, 2)) == {'1': 60}


def test_components_cover_every_parameter():
    model = build(tiny_config())
    report = complexity(model)
    assert set(report.params) == set(COMPONENTS)
    assert report.total_params == count_parameters(model)
    assert report.params['fusion'] > 0 and report.flops['fusion'] > 0


def test_light_has_no_fusion_cost():
    report = complexity(build(tiny_config(variant='light')))
    assert report.params['fusion'] == 0 and report.flops['fusion'] == 0


def test_component_names():
    assert component_of('encoder.trunk.stem.weight') == 'encoder'
    assert component_of('bank.blocks.b0.fusion.weight') == 'fusion'
    assert component_of('bank.blocks.b0.conv.weight') == 'generator'
    assert component_of('bank.latents') == 'generator'
    assert component_of('decoder.emit.weight') == 'decoder'


def test_doubling_the_output_increases_flops():
    previous = 0
    for out_size in (16, 32, 64, 128):
        flops = profile(tiny_config(out_size=out_size), device='cpu').total_flops
        assert flops > previous
        previous = flops


def test_meta_profile_matches_a_real_build():
    cfg = tiny_config()
    real, meta = profile(cfg, device='cpu'), profile(cfg)
    assert real.params == meta.params and real.flops == meta.flops


def test_light_reduction_at_full_scale():
    glean = profile(ModelConfig.from_dict({'preset': 'replica'}))
    light = profile(ModelConfig.from_dict({'preset': 'replica', 'variant': 'light'}))
    params, flops = light.reduction(glean)
    assert params >= 0.6
    assert flops >= 0.5


def test_report_table_lists_all_components():
    report = ComplexityReport(params={'encoder': 10, 'decoder': 5}, flops={'encoder': 2 * 10**9})
    table = report.table()
    assert all(name in table for name in COMPONENTS)
    assert report.as_dict()['total_params'] == 15
    assert report.reduction(ComplexityReport({'encoder': 30}, {'encoder': 4 * 10**9})) == (0.5, 0.5)
