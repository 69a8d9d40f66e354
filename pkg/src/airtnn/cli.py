"""Command-line interface: gen-data, train, eval, sweep, verify."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import nn
from .channel import ChannelConfig, IDEAL_CHANNEL
from .dataset import SPLITS, generate, load_dataset, save_dataset
from .errors import FormatError, TrainingDivergedError
from .harness import (
    ExperimentConfig,
    _NS_DATA,
    _NS_TRAIN,
    config_from_flat,
    read_flat_file,
    run_sweep,
)
from .seeding import sub_seed
from .verify import run_checks


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key-value config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=("airtnn", "airgnn", "tnn", "gnn"))
    p.add_argument("--delta", type=float, help="Rayleigh fading scale")
    p.add_argument("--snr-db", type=float, help="per-round SNR in dB")
    p.add_argument("--taps", type=int, help="communication rounds per branch (P)")
    p.add_argument("--layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-realizations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airtnn",
        description="Topological neural networks over the air: data, training, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and write the dataset splits")
    _add_common(p)

    p = sub.add_parser("train", help="train one model, write checkpoint and history")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--data", type=Path, help="directory with data_{split}.txt files")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset file to score")
    p.add_argument("--ideal-channel", action="store_true")

    p = sub.add_parser("sweep", help="run the six-curve comparison sweep")
    _add_common(p)
    _add_model_flags(p)

    p = sub.add_parser("verify", help="run the built-in invariant/oracle checks")
    _add_common(p)
    return parser


def load_experiment_config(args) -> ExperimentConfig:
    flat = read_flat_file(args.config) if args.config else {}
    config = config_from_flat(flat)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=str(args.out))
    for attr, key in (
        ("arch", "arch"),
        ("delta", "fixed_delta"),
        ("snr_db", "fixed_snr_db"),
        ("taps", "taps"),
        ("layers", "n_layers"),
        ("epochs", "epochs"),
        ("eval_realizations", "n_eval_realizations"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            config = replace(config, **{key: value})
    return config


def _load_or_generate_splits(config: ExperimentConfig, data_dir: Path | None):
    if data_dir is not None:
        return {split: load_dataset(data_dir / f"data_{split}.txt") for split in SPLITS}
    dataset_cfg = replace(config.dataset, seed=sub_seed(config.seed, _NS_DATA))
    return generate(dataset_cfg)


def cmd_gen_data(args) -> int:
    config = load_experiment_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = _load_or_generate_splits(config, None)
    for split in SPLITS:
        path = out / f"data_{split}.txt"
        save_dataset(splits[split], path)
        print(f"wrote {path} ({len(splits[split])} samples)")
    return 0


def cmd_train(args) -> int:
    config = load_experiment_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = _load_or_generate_splits(config, args.data)
    ctx = nn.ShiftContext.from_complex(splits["train"].complex)

    arch = config.arch
    spec = config.model_spec(arch)
    channel = ChannelConfig(fading_scale=config.fixed_delta, snr_db=config.fixed_snr_db,
                            snr_reference=config.snr_reference)
    tcfg = nn.TrainConfig(lr=config.lr, batch_size=config.batch_size, epochs=config.epochs,
                          channel=channel, seed=sub_seed(config.seed, _NS_TRAIN, 0, 0))
    result = nn.train(spec, ctx, splits["train"].x, splits["train"].y, tcfg,
                      splits["val"].x, splits["val"].y)
    ckpt = out / f"{arch}_checkpoint.txt"
    nn.save_checkpoint(ckpt, spec, result.params)
    with open(out / f"{arch}_history.csv", "w") as fh:
        nn.write_history_csv(fh, result.history)
    final = [row for row in result.history if row[1] == "train"][-1]
    print(f"wrote {ckpt}; final train loss {final[2]:.4f} acc {final[3]:.4f}")
    return 0


def cmd_eval(args) -> int:
    config = load_experiment_config(args)
    spec, params = nn.load_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    ctx = nn.ShiftContext.from_complex(data.complex)
    if args.ideal_channel:
        channel = IDEAL_CHANNEL
    else:
        channel = ChannelConfig(fading_scale=config.fixed_delta,
                                snr_db=config.fixed_snr_db,
                                snr_reference=config.snr_reference)
    result = nn.evaluate(spec, ctx, params, data.x, data.y, channel,
                         n_realizations=config.n_eval_realizations, seed=config.seed)
    std = float(result.per_realization.std())
    print(f"accuracy {result.accuracy!r} std {std!r} realizations {result.per_realization.size}")
    return 0


def cmd_sweep(args) -> int:
    config = load_experiment_config(args)
    result = run_sweep(config)
    print(f"wrote {Path(config.out_dir) / 'results.csv'} ({len(result.rows)} rows)")
    return 0


def cmd_verify(args) -> int:
    return 0 if run_checks() else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "sweep": cmd_sweep,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except (FileNotFoundError, FormatError, TrainingDivergedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
