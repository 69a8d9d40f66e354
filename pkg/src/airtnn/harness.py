"""Experiment orchestration: datasets, the six comparison curves, CSV output.

A sweep varies either the fading scale (delta) or the SNR while the other
stays fixed. Air models are retrained at every sweep point so training-time
channel statistics match test-time (a single frozen model is available via
retrain_per_point = false); tnn/gnn are trained once under ideal communication
and evaluated both ideally and under the sweep-point channel. Every run writes
a results CSV plus a manifest that is itself a valid config file: rerunning
`sweep` on the manifest reproduces the CSV byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, nn
from .channel import ChannelConfig, IDEAL_CHANNEL
from .dataset import SPLITS, DatasetConfig, generate, save_dataset
from .errors import FormatError, TrainingDivergedError
from .seeding import sub_seed

MODELS = ("airtnn", "airgnn", "tnn", "gnn")

# Namespaces for derived seeds.
_NS_DATA = 100
_NS_TRAIN = 200
_NS_EVAL = 300

DELTA_GRID = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
SNR_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    sweep_axis: str = "delta"  # or "snr"
    sweep_grid: tuple[float, ...] = DELTA_GRID
    fixed_delta: float = 1.0
    fixed_snr_db: float = 20.0
    arch: str = "airtnn"
    n_layers: int = 2
    taps: int = 2
    hidden: int = 32
    readout_hidden: int = 32
    nonlinearity: str = "relu"
    pooling: str = "flatten"
    snr_reference: str = "empirical"
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 30
    n_eval_realizations: int = 20
    retrain_per_point: bool = True
    seed: int = 0
    out_dir: str = "runs/sweep"

    def __post_init__(self):
        if self.sweep_axis not in ("delta", "snr"):
            raise ValueError("sweep_axis must be 'delta' or 'snr'")
        if not self.sweep_grid:
            raise ValueError("sweep_grid must be nonempty")
        fixed = self.fixed_snr_db if self.sweep_axis == "delta" else self.fixed_delta
        if not math.isfinite(fixed):
            raise ValueError("the fixed counterpart value must be finite")

    def model_spec(self, arch: str) -> nn.ModelSpec:
        return nn.ModelSpec(
            arch=arch, n_layers=self.n_layers, taps=self.taps, in_features=1,
            hidden=self.hidden, readout_hidden=self.readout_hidden,
            n_classes=self.dataset.n_classes, nonlinearity=self.nonlinearity,
            pooling=self.pooling,
        )

    def point_channel(self, value: float) -> ChannelConfig:
        if self.sweep_axis == "delta":
            return ChannelConfig(fading_scale=value, snr_db=self.fixed_snr_db,
                                 snr_reference=self.snr_reference)
        return ChannelConfig(fading_scale=self.fixed_delta, snr_db=value,
                             snr_reference=self.snr_reference)


@dataclass(frozen=True)
class SweepRow:
    model: str
    regime: str  # "air", "ideal", "noisy"
    sweep_axis: str
    sweep_value: float
    accuracy_mean: float
    accuracy_std: float
    seed: int


@dataclass(eq=False)
class SweepResult:
    config: ExperimentConfig
    rows: list[SweepRow]
    status: str = "ok"

    def csv_text(self) -> str:
        lines = ["model,regime,sweep_axis,sweep_value,accuracy_mean,accuracy_std,seed"]
        for r in self.rows:
            lines.append(
                f"{r.model},{r.regime},{r.sweep_axis},{r.sweep_value!r},"
                f"{r.accuracy_mean!r},{r.accuracy_std!r},{r.seed}"
            )
        return "\n".join(lines) + "\n"


def _train_model(config: ExperimentConfig, ctx, splits, arch: str,
                 channel: ChannelConfig, seed: int) -> nn.TrainResult:
    spec = config.model_spec(arch)
    cfg = nn.TrainConfig(lr=config.lr, batch_size=config.batch_size,
                         epochs=config.epochs, channel=channel, seed=seed)
    return nn.train(spec, ctx, splits["train"].x, splits["train"].y, cfg,
                    splits["val"].x, splits["val"].y)


def run_sweep(config: ExperimentConfig, write_outputs: bool = True) -> SweepResult:
    """Train and evaluate the six comparison curves over the sweep grid.

    Outputs under config.out_dir: the dataset splits, one checkpoint and
    history CSV per trained model, results.csv, and manifest.txt. On a
    training abort the rows finished so far are flushed and the manifest is
    marked failed before the error propagates.
    """
    out = Path(config.out_dir)
    if write_outputs:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)

    dataset_cfg = replace(config.dataset, seed=sub_seed(config.seed, _NS_DATA))
    splits = generate(dataset_cfg)
    ctx = nn.ShiftContext.from_complex(splits["train"].complex)
    if write_outputs:
        for split in SPLITS:
            save_dataset(splits[split], out / f"data_{split}.txt")

    result = SweepResult(config=config, rows=[])

    def save_model(tag: str, spec, train_result) -> None:
        if not write_outputs:
            return
        nn.save_checkpoint(out / "checkpoints" / f"{tag}.txt", spec, train_result.params)
        with open(out / "checkpoints" / f"{tag}_history.csv", "w") as fh:
            nn.write_history_csv(fh, train_result.history)

    try:
        ideal_models = {}
        for mi, arch in enumerate(("tnn", "gnn")):
            tr = _train_model(config, ctx, splits, arch, IDEAL_CHANNEL,
                              sub_seed(config.seed, _NS_TRAIN, 0, MODELS.index(arch)))
            ideal_models[arch] = tr
            save_model(f"{arch}_ideal", config.model_spec(arch), tr)

        air_models: dict[str, nn.TrainResult] = {}
        if not config.retrain_per_point:
            base = ChannelConfig(fading_scale=config.fixed_delta,
                                 snr_db=config.fixed_snr_db,
                                 snr_reference=config.snr_reference)
            for arch in ("airtnn", "airgnn"):
                tr = _train_model(config, ctx, splits, arch, base,
                                  sub_seed(config.seed, _NS_TRAIN, 0, MODELS.index(arch)))
                air_models[arch] = tr
                save_model(f"{arch}_frozen", config.model_spec(arch), tr)

        x_test, y_test = splits["test"].x, splits["test"].y
        for pi, value in enumerate(config.sweep_grid):
            point = config.point_channel(value)
            for arch in ("airtnn", "airgnn"):
                if config.retrain_per_point:
                    tr = _train_model(config, ctx, splits, arch, point,
                                      sub_seed(config.seed, _NS_TRAIN, 1 + pi,
                                               MODELS.index(arch)))
                    save_model(f"{arch}_{config.sweep_axis}{value:g}", config.model_spec(arch), tr)
                else:
                    tr = air_models[arch]
                ev = nn.evaluate(config.model_spec(arch), ctx, tr.params, x_test, y_test,
                                 point, n_realizations=config.n_eval_realizations,
                                 seed=sub_seed(config.seed, _NS_EVAL, pi, MODELS.index(arch)))
                result.rows.append(SweepRow(arch, "air", config.sweep_axis, float(value),
                                            ev.accuracy, float(ev.per_realization.std()),
                                            config.seed))
            for arch in ("tnn", "gnn"):
                spec = config.model_spec(arch)
                params = ideal_models[arch].params
                ev_i = nn.evaluate(spec, ctx, params, x_test, y_test, IDEAL_CHANNEL)
                result.rows.append(SweepRow(arch, "ideal", config.sweep_axis, float(value),
                                            ev_i.accuracy, 0.0, config.seed))
                ev_n = nn.evaluate(spec, ctx, params, x_test, y_test, point,
                                   n_realizations=config.n_eval_realizations,
                                   seed=sub_seed(config.seed, _NS_EVAL, pi,
                                                 10 + MODELS.index(arch)))
                result.rows.append(SweepRow(arch, "noisy", config.sweep_axis, float(value),
                                            ev_n.accuracy, float(ev_n.per_realization.std()),
                                            config.seed))
    except Exception as exc:
        result.status = f"failed: {exc}"
        if write_outputs:
            (out / "results.csv").write_text(result.csv_text())
            (out / "manifest.txt").write_text(manifest_text(result))
        raise

    if write_outputs:
        (out / "results.csv").write_text(result.csv_text())
        (out / "manifest.txt").write_text(manifest_text(result))
    return result


# ---------------------------------------------------------------------------
# Flat key-value config files; the manifest is one with extra metadata keys.

_META_KEYS = ("status", "code_version", "rows")

_DATASET_KEY_PREFIX = ""  # dataset keys live in the same flat namespace


def config_to_flat(config: ExperimentConfig) -> dict[str, str]:
    flat: dict[str, str] = {}
    for f in fields(DatasetConfig):
        if f.name == "seed":
            flat["dataset_seed"] = str(config.dataset.seed)
        else:
            flat[f.name] = str(getattr(config.dataset, f.name))
    flat.update({
        "sweep_axis": config.sweep_axis,
        "sweep_grid": " ".join(repr(float(v)) for v in config.sweep_grid),
        "fixed_delta": repr(config.fixed_delta),
        "fixed_snr_db": repr(config.fixed_snr_db),
        "arch": config.arch,
        "layers": str(config.n_layers),
        "taps": str(config.taps),
        "hidden": str(config.hidden),
        "readout_hidden": str(config.readout_hidden),
        "nonlinearity": config.nonlinearity,
        "pooling": config.pooling,
        "snr_reference": config.snr_reference,
        "lr": repr(config.lr),
        "batch_size": str(config.batch_size),
        "epochs": str(config.epochs),
        "eval_realizations": str(config.n_eval_realizations),
        "retrain_per_point": str(config.retrain_per_point).lower(),
        "seed": str(config.seed),
        "out": config.out_dir,
    })
    return flat


def config_from_flat(flat: dict[str, str]) -> ExperimentConfig:
    flat = dict(flat)
    for key in _META_KEYS:
        flat.pop(key, None)

    def take(key, conv, default):
        if key in flat:
            return conv(flat.pop(key))
        return default

    d = DatasetConfig()
    dataset = DatasetConfig(
        n_nodes=take("n_nodes", int, d.n_nodes),
        n_communities=take("n_communities", int, d.n_communities),
        p_intra=take("p_intra", float, d.p_intra),
        p_inter=take("p_inter", float, d.p_inter),
        n_train=take("n_train", int, d.n_train),
        n_val=take("n_val", int, d.n_val),
        n_test=take("n_test", int, d.n_test),
        spikes_per_sample=take("spikes_per_sample", int, d.spikes_per_sample),
        spike_variance=take("spike_variance", float, d.spike_variance),
        max_diffusion=take("max_diffusion", int, d.max_diffusion),
        diffusion_snr_db=take("diffusion_snr_db", float, d.diffusion_snr_db),
        diffusion_kind=take("diffusion_kind", str, d.diffusion_kind),
        n_classes=take("n_classes", int, d.n_classes),
        seed=take("dataset_seed", int, d.seed),
    )
    e = ExperimentConfig()
    config = ExperimentConfig(
        dataset=dataset,
        sweep_axis=take("sweep_axis", str, e.sweep_axis),
        sweep_grid=take("sweep_grid", lambda s: tuple(float(v) for v in s.split()),
                        e.sweep_grid),
        fixed_delta=take("fixed_delta", float, e.fixed_delta),
        fixed_snr_db=take("fixed_snr_db", float, e.fixed_snr_db),
        arch=take("arch", str, e.arch),
        n_layers=take("layers", int, e.n_layers),
        taps=take("taps", int, e.taps),
        hidden=take("hidden", int, e.hidden),
        readout_hidden=take("readout_hidden", int, e.readout_hidden),
        nonlinearity=take("nonlinearity", str, e.nonlinearity),
        pooling=take("pooling", str, e.pooling),
        snr_reference=take("snr_reference", str, e.snr_reference),
        lr=take("lr", float, e.lr),
        batch_size=take("batch_size", int, e.batch_size),
        epochs=take("epochs", int, e.epochs),
        n_eval_realizations=take("eval_realizations", int, e.n_eval_realizations),
        retrain_per_point=take("retrain_per_point", lambda s: s.lower() == "true",
                               e.retrain_per_point),
        seed=take("seed", int, e.seed),
        out_dir=take("out", str, e.out_dir),
    )
    if flat:
        raise FormatError(f"unknown config keys: {', '.join(sorted(flat))}")
    return config


def manifest_text(result: SweepResult) -> str:
    lines = [
        "# sweep manifest; also a valid --config file for bitwise reruns",
        f"status {result.status}",
        f"code_version {__version__}",
        f"rows {len(result.rows)}",
    ]
    for key, value in config_to_flat(result.config).items():
        lines.append(f"{key} {value}")
    return "\n".join(lines) + "\n"


def read_flat_file(path) -> dict[str, str]:
    """Parse a flat key-value file: 'key value' per line, # comments."""
    flat: dict[str, str] = {}
    with open(path) as fh:
        for no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            key, _, value = text.partition(" ")
            if not value:
                raise FormatError(f"expected 'key value', got {text!r}", line=no)
            flat[key] = value.strip()
    return flat


def load_config(path) -> ExperimentConfig:
    return config_from_flat(read_flat_file(path))
