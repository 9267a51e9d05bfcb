"""
GLEAN CLI.

Sub-commands: pretrain, train, infer, degrade, eval, colorize, ablate and
complexity. Contract violations exit with status 2, other failures with 1.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from typing import List, Optional

from glean import VERSION
from glean.config import load_experiment
from glean.imaging.io import list_images, read_image, write_png
from glean.models.assembly import COLORIZATION, build, build_discriminator
from glean.models.latent_bank import GLEAN, LIGHT
from glean.observatory.ablation import run_ablation
from glean.observatory.complexity import profile
from glean.observatory.evaluation import bicubic_baseline, evaluate
from glean.simulation.data import SR, PairDataset, disjoint, ingest, to_rgb
from glean.simulation.degradation import DegradationParams, degrade, sample_params
from glean.training.checkpoint import load_bank, load_checkpoint, restore, save_bank, save_checkpoint
from glean.training.pretrain import pretrain_bank
from glean.training.trainer import Trainer
from glean.utils import ContractViolation, item_rng, require, seed_everything

logger = logging.getLogger('glean')

HEADER = r"""
      _____ _      ______          _   _
     / ____| |    |  ____|   /\   | \ | |
    | |  __| |    | |__     /  \  |  \| |
    | | |_ | |    |  __|   / /\ \ | . ` |
    | |__| | |____| |____ / ____ \| |\  |
     \_____|______|______/_/    \_\_| \_|

     v%s
""" % VERSION


def banner():
    print(65 * '=', end='')
    print(HEADER, end='')
    print(65 * '=')


def output_path(directory: str, source: str) -> str:
    stem = os.path.splitext(os.path.basename(source))[0]
    return os.path.join(directory, stem + '.png')


def attach_pretrained_bank(model, disc, path: Optional[str]):
    if not path:
        logger.warning("No pre-trained bank given; the latent bank keeps its random initialization")
        return
    archive = load_bank(path)
    model.attach_bank(archive['bank'], archive['manifest'])
    if archive.get('disc') is not None:
        disc.load_state_dict(archive['disc'])


def cmd_pretrain(args) -> int:
    spec = load_experiment(args.config)
    data = args.data or spec.train_dir
    require(data is not None, "No training folder given (--data or experiment.train_dir)")
    seed_everything(spec.train.seed)

    steps = spec.pretrain_steps if args.steps is None else args.steps
    images = ingest(data, spec.model.out_size)
    bank, disc, history = pretrain_bank(images, spec.model, spec.train, steps, progress=not args.quiet)

    out = args.out or os.path.join(spec.out_dir, 'bank.pt')
    save_bank(out, bank, disc, asdict(bank.cfg), spec.text)
    if history:
        logger.info("Final losses: %s", history[-1])
    print(f"=> Latent bank written to {out}")
    return 0


def cmd_train(args) -> int:
    spec = load_experiment(args.config)
    require(spec.train_dir is not None, "experiment.train_dir is required for training")
    seed_everything(spec.train.seed)

    if args.resume:
        payload = load_checkpoint(args.resume)
        model, disc, manifest = restore(payload, spec.model)
        if disc is None:
            disc = build_discriminator(spec.model)
        trainer = Trainer(model, disc, spec.train, manifest=manifest)
        trainer.load_state_dict(payload)
        logger.info("Resuming %s at step %d", args.resume, trainer.step)
    else:
        model = build(spec.model)
        disc = build_discriminator(spec.model)
        attach_pretrained_bank(model, disc, args.bank or spec.model.bank_checkpoint)
        trainer = Trainer(model, disc, spec.train)

    train_images = ingest(spec.train_dir, spec.model.out_size)
    dataset = PairDataset(train_images, spec.task, spec.model.in_size, spec.train.seed, spec.train.workers)

    out = args.out or os.path.join(spec.out_dir, 'checkpoint.pt')

    def checkpoint(t):
        save_checkpoint(out, t.model, t.manifest, t.disc, t, spec.text)

    trainer.fit(dataset, on_checkpoint=checkpoint, progress=not args.quiet)

    problems = trainer.frozen_diff()
    require(not problems, f"Frozen bank weights changed during training: {problems}")

    if spec.val_dir:
        val_images = ingest(spec.val_dir, spec.model.out_size)
        require(disjoint(train_images, val_images), "Validation images overlap the training images")
        val = PairDataset(val_images, spec.task, spec.model.in_size, spec.train.seed)
        print(evaluate(model, val, spec.metrics, title=f"validation after {trainer.step} steps").table())
    print(f"=> Checkpoint written to {out}")
    return 0


def restored_model(path: str):
    model, _, _ = restore(load_checkpoint(path))
    model.eval()
    return model


def cmd_infer(args, model=None) -> int:
    if model is None:
        model = restored_model(args.ckpt)
    os.makedirs(args.out, exist_ok=True)
    sources = list_images(args.input)
    require(len(sources) > 0, f"No images in {args.input}")
    for source in sources:
        write_png(output_path(args.out, source), model.infer(read_image(source)))
    print(f"=> {len(sources)} images written to {args.out}")
    return 0


def cmd_colorize(args) -> int:
    model = restored_model(args.ckpt)
    require(model.cfg.task == COLORIZATION, f"{args.ckpt} is not a colorization model")
    return cmd_infer(args, model)


def cmd_degrade(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    sources = list_images(args.input)
    require(len(sources) > 0, f"No images in {args.input}")
    fixed = {name: getattr(args, name) for name in ('sigma', 'r', 'delta', 'q')
             if getattr(args, name) is not None}

    with open(os.path.join(args.out, 'params.jsonl'), 'w') as fd:
        for index, source in enumerate(sources):
            rng = item_rng(args.seed, index)
            params = DegradationParams(**{**sample_params(rng).as_dict(), **fixed})
            degraded = degrade(to_rgb(read_image(source)), params, rng)
            write_png(output_path(args.out, source), degraded)
            fd.write(json.dumps({'name': os.path.basename(source), **params.as_dict()}) + "\n")
    print(f"=> {len(sources)} degraded images written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    payload = load_checkpoint(args.ckpt)
    model, _, _ = restore(payload)
    cfg = model.cfg
    metrics = [m.strip() for m in args.metrics.split(',') if m.strip()]

    val = PairDataset(ingest(args.val, cfg.out_size), cfg.task, cfg.in_size, args.seed)
    title = "\n".join("# " + line for line in payload.get('config', '').splitlines())
    report = evaluate(model, val, metrics, title=title)
    print(report.table())
    if cfg.task == SR:
        print(bicubic_baseline(val, [m for m in metrics if m == 'psnr'] or ['psnr']).table())
    if args.report:
        report.write(args.report)
    return 0


def cmd_ablate(args) -> int:
    spec = load_experiment(args.config)
    require(spec.train_dir and spec.val_dir, "Ablations need experiment.train_dir and experiment.val_dir")
    seed_everything(spec.train.seed)

    bank, disc_state, manifest = None, None, None
    path = args.bank or spec.model.bank_checkpoint
    if path:
        archive = load_bank(path)
        bank, disc_state, manifest = archive['bank'], archive.get('disc'), archive['manifest']

    train = PairDataset(ingest(spec.train_dir, spec.model.out_size), spec.task, spec.model.in_size,
                        spec.train.seed, spec.train.workers)
    val = PairDataset(ingest(spec.val_dir, spec.model.out_size), spec.task, spec.model.in_size, spec.train.seed)
    report = run_ablation(spec, train, val, bank, disc_state, manifest, progress=not args.quiet)
    print(report.table())
    report.write(args.report or os.path.join(spec.out_dir, f"ablation_{spec.ablate}.txt"))
    return 0


def cmd_complexity(args) -> int:
    spec = load_experiment(args.config)
    report = profile(spec.model, args.device)
    print(f"{spec.model.variant} {spec.model.in_size} -> {spec.model.out_size}")
    print(report.table())

    if args.compare:
        other = LIGHT if spec.model.variant == GLEAN else GLEAN
        other_cfg = replace(spec.model, variant=other, enc_feats_upto=None, decoder_channels=None)
        other_report = profile(other_cfg, args.device)
        print(f"\n{other} {other_cfg.in_size} -> {other_cfg.out_size}")
        print(other_report.table())
        light, full = (report, other_report) if other == GLEAN else (other_report, report)
        params, flops = light.reduction(full)
        print(f"\nLightGLEAN reduction: params {100 * params:.1f}%, FLOPs {100 * flops:.1f}%")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='GLEAN CLI')
    parser.add_argument('--verbose', action='store_true', help="Debug logging.")
    parser.add_argument('--quiet', action='store_true', help="No banner and no progress bars.")
    subparsers = parser.add_subparsers(dest='mode')

    pretrain_args = subparsers.add_parser('pretrain', help="Pre-train the latent bank.")
    pretrain_args.add_argument('--config', required=True, help="Experiment YAML.")
    pretrain_args.add_argument('--data', help="Image folder (defaults to experiment.train_dir).")
    pretrain_args.add_argument('--steps', type=int, help="Overrides experiment.pretrain_steps.")
    pretrain_args.add_argument('--out', help="Bank archive to write.")

    train_args = subparsers.add_parser('train', help="Train a restoration model.")
    train_args.add_argument('--config', required=True, help="Experiment YAML.")
    train_args.add_argument('--resume', help="Checkpoint to resume from.")
    train_args.add_argument('--bank', help="Pre-trained bank archive.")
    train_args.add_argument('--out', help="Checkpoint to write.")

    for name, helptext in (('infer', "Restore a folder of images."), ('colorize', "Colorize a folder of images.")):
        sub = subparsers.add_parser(name, help=helptext)
        sub.add_argument('--ckpt', required=True, help="Model checkpoint.")
        sub.add_argument('--in', dest='input', required=True, help="Input image folder.")
        sub.add_argument('--out', required=True, help="Output folder.")

    degrade_args = subparsers.add_parser('degrade', help="Synthesize degraded images.")
    degrade_args.add_argument('--in', dest='input', required=True, help="Input image folder.")
    degrade_args.add_argument('--out', required=True, help="Output folder.")
    degrade_args.add_argument('--seed', type=int, default=0)
    degrade_args.add_argument('--sigma', type=float, help="Fixed blur sigma.")
    degrade_args.add_argument('--r', type=float, help="Fixed downsampling factor.")
    degrade_args.add_argument('--delta', type=float, help="Fixed noise level (8-bit units).")
    degrade_args.add_argument('--q', type=int, help="Fixed JPEG quality.")

    eval_args = subparsers.add_parser('eval', help="Evaluate a checkpoint.")
    eval_args.add_argument('--ckpt', required=True, help="Model checkpoint.")
    eval_args.add_argument('--val', required=True, help="Validation image folder.")
    eval_args.add_argument('--metrics', default='psnr,cosine', help="Comma separated metrics.")
    eval_args.add_argument('--seed', type=int, default=0, help="Seed of blind degradations.")
    eval_args.add_argument('--report', help="Write the table here (plus a .jsonl sidecar).")

    ablate_args = subparsers.add_parser('ablate', help="Sweep an ablation toggle.")
    ablate_args.add_argument('--config', required=True, help="Experiment YAML.")
    ablate_args.add_argument('--bank', help="Pre-trained bank archive.")
    ablate_args.add_argument('--report', help="Report path.")

    complexity_args = subparsers.add_parser('complexity', help="Count parameters and FLOPs.")
    complexity_args.add_argument('--config', required=True, help="Experiment YAML.")
    complexity_args.add_argument('--compare', action='store_true', help="Also profile the other variant.")
    complexity_args.add_argument('--device', default='meta', help="Device to build the model on.")

    return parser


COMMANDS = {
    'pretrain': cmd_pretrain,
    'train': cmd_train,
    'infer': cmd_infer,
    'degrade': cmd_degrade,
    'eval': cmd_eval,
    'colorize': cmd_colorize,
    'ablate': cmd_ablate,
    'complexity': cmd_complexity,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    if not args.quiet:
        banner()

    if args.mode not in COMMANDS:
        print(f"Unknown mode: {args.mode}. Stopping.")
        parser.print_help()
        return 2

    try:
        return COMMANDS[args.mode](args)
    except ContractViolation as e:
        logger.error("%s", e)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as e:
        logger.exception("%s failed: %s", args.mode, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
