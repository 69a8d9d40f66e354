"""Synthetic source-localization dataset over an SBM cell complex.

Each sample plants eta spikes on edges of one class of the edge partition,
adds them to a smooth base signal built from random node and polygon signals,
diffuses tau rounds with the normalized lower shift, and adds measurement
noise. The label is the class the spikes came from. One complex is shared by
all splits; every sample owns a derived RNG stream so regeneration is
bit-identical and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .errors import DatasetError, FormatError
from .seeding import rng_from
from .topology import (
    CellComplex2,
    ShiftKind,
    edge_partition,
    lift_to_complex,
    read_complex,
    sbm_generate,
    shift_operator,
    spectral_norm,
    write_complex,
)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetConfig:
    n_nodes: int = 70
    n_communities: int = 10
    p_intra: float = 0.9
    p_inter: float = 0.01
    n_train: int = 1000
    n_val: int = 200
    n_test: int = 200
    spikes_per_sample: int = 5       # eta
    spike_variance: float = 10.0     # psi
    max_diffusion: int = 5           # tau drawn uniformly from 1..max_diffusion
    diffusion_snr_db: float = 40.0
    diffusion_kind: str = ShiftKind.LOWER_ADJACENCY.value
    n_classes: int = 11              # 10 intra classes, or 11 with the inter class
    seed: int = 0

    def __post_init__(self):
        if self.spikes_per_sample < 1:
            raise DatasetError("spikes_per_sample must be >= 1")
        if not self.spike_variance > 0:
            raise DatasetError("spike_variance must be positive")
        if self.max_diffusion < 1:
            raise DatasetError("max_diffusion must be >= 1")
        if self.n_classes not in (self.n_communities, self.n_communities + 1):
            raise DatasetError("n_classes must be n_communities or n_communities + 1")

    def split_sizes(self) -> dict[str, int]:
        return {"train": self.n_train, "val": self.n_val, "test": self.n_test}


@dataclass(eq=False)
class SourceLocSample:
    x: np.ndarray
    label: int
    tau: int


@dataclass(eq=False)
class SourceLocDataset:
    """One split: signals x (n, N1), labels y, diffusion orders tau."""

    config: DatasetConfig
    complex: CellComplex2
    split: str
    x: np.ndarray
    y: np.ndarray
    tau: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> SourceLocSample:
        return SourceLocSample(x=self.x[i], label=int(self.y[i]), tau=int(self.tau[i]))


def base_signal(complex_: CellComplex2, rng: np.random.Generator) -> np.ndarray:
    """Smooth edge signal from node and polygon signals: B1^T x0 + B2 x2.

    Both latent signals are zero-mean Gaussian with variance 1/N1.
    """
    n1 = complex_.n_edges
    sd = math.sqrt(1.0 / n1)
    x0 = rng.normal(0.0, sd, complex_.n_nodes)
    x2 = rng.normal(0.0, sd, complex_.n_polygons)
    return complex_.B1.T.astype(np.float64) @ x0 + complex_.B2.astype(np.float64) @ x2


def inject_spikes(
    partition: np.ndarray,
    label: int,
    n_spikes: int,
    variance: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Spike vector: n_spikes edges of class `label`, intensities N(0, variance).

    Sources are chosen without replacement; each gets its own intensity draw.
    """
    candidates = np.flatnonzero(partition == label)
    if candidates.size < n_spikes:
        raise DatasetError(
            f"class {label} has {candidates.size} candidate edges, need {n_spikes}")
    chosen = rng.choice(candidates, size=n_spikes, replace=False)
    spikes = np.zeros(partition.shape[0])
    spikes[chosen] = rng.normal(0.0, math.sqrt(variance), n_spikes)
    return spikes


def diffuse(
    signal: np.ndarray,
    tau: int,
    snr_db: float,
    sbar: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """tau rounds of normalized diffusion plus AWGN at the given SNR.

    sbar must already be the shift divided by its largest eigenvalue; the
    noise reference power is the empirical power of the diffused signal.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    out = np.asarray(signal, dtype=np.float64)
    for _ in range(tau):
        out = sbar @ out
    if math.isinf(snr_db):
        return out
    p_ref = float(np.mean(np.square(out)))
    if p_ref == 0.0:
        p_ref = 1.0
    sigma = math.sqrt(p_ref * 10.0 ** (-snr_db / 10.0))
    return out + rng.normal(0.0, 1.0, out.shape) * sigma


def normalized_shift(complex_: CellComplex2, kind: ShiftKind | str) -> np.ndarray:
    op = shift_operator(complex_, kind)
    lam = spectral_norm(op)
    if lam == 0.0:
        raise DatasetError(f"{ShiftKind(kind).value} operator is zero; cannot normalize")
    return op.matrix / lam


def build_complex(config: DatasetConfig) -> CellComplex2:
    graph = sbm_generate(config.n_nodes, config.n_communities, config.p_intra,
                         config.p_inter, rng_from(config.seed, seeding.DATASET, 0))
    return lift_to_complex(graph)


def generate(config: DatasetConfig,
             complex_: CellComplex2 | None = None) -> dict[str, SourceLocDataset]:
    """Generate the train/val/test splits.

    The complex is built once (or passed in); each sample uses its own stream
    derived from (seed, split, sample index). Class and diffusion order are
    uniform draws; classes are balanced only in expectation.
    """
    if complex_ is None:
        complex_ = build_complex(config)
    partition = edge_partition(complex_)
    sizes = np.bincount(partition, minlength=config.n_classes)
    for c in range(config.n_classes):
        if sizes[c] < config.spikes_per_sample:
            raise DatasetError(
                f"class {c} has only {sizes[c]} edges; need >= {config.spikes_per_sample}")
    sbar = normalized_shift(complex_, config.diffusion_kind)

    out: dict[str, SourceLocDataset] = {}
    n1 = complex_.n_edges
    for split_idx, split in enumerate(SPLITS):
        n = config.split_sizes()[split]
        x = np.zeros((n, n1))
        y = np.zeros(n, dtype=np.int64)
        tau = np.zeros(n, dtype=np.int64)
        for i in range(n):
            rng = rng_from(config.seed, seeding.DATASET, 1 + split_idx, i)
            c = int(rng.integers(config.n_classes))
            t = int(rng.integers(1, config.max_diffusion + 1))
            base = base_signal(complex_, rng)
            spikes = inject_spikes(partition, c, config.spikes_per_sample,
                                   config.spike_variance, rng)
            x[i] = diffuse(base + spikes, t, config.diffusion_snr_db, sbar, rng)
            y[i] = c
            tau[i] = t
        out[split] = SourceLocDataset(config=config, complex=complex_, split=split,
                                      x=x, y=y, tau=tau)
    return out


# ---------------------------------------------------------------------------
# Serialization: one file per split, embedding the config echo and complex.

FORMAT_DATASET = "airtnn-dataset v1"

_CONFIG_FIELDS = [f for f in DatasetConfig.__dataclass_fields__]


def save_dataset(dataset: SourceLocDataset, path) -> None:
    cfg = dataset.config
    with open(path, "w") as fh:
        fh.write(FORMAT_DATASET + "\n")
        fh.write(f"split {dataset.split}\n")
        for name in _CONFIG_FIELDS:
            fh.write(f"config {name} {getattr(cfg, name)!r}\n")
        fh.write("[complex]\n")
        write_complex(fh, dataset.complex)
        fh.write(f"[samples] {len(dataset)}\n")
        for i in range(len(dataset)):
            values = " ".join(repr(float(v)) for v in dataset.x[i])
            fh.write(f"sample {dataset.y[i]} {dataset.tau[i]} {values}\n")


def _parse_config(pairs: dict[str, str]) -> DatasetConfig:
    kwargs = {}
    for name in _CONFIG_FIELDS:
        if name not in pairs:
            raise FormatError(f"dataset file missing config key {name!r}")
        raw = pairs[name]
        typ = DatasetConfig.__dataclass_fields__[name].type
        if typ == "int":
            kwargs[name] = int(raw)
        elif typ == "float":
            kwargs[name] = float(raw)
        else:
            kwargs[name] = raw.strip("'\"")
    return DatasetConfig(**kwargs)


def load_dataset(path) -> SourceLocDataset:
    with open(path) as fh:
        lines = list(enumerate(fh.read().splitlines(), start=1))
    if not lines or lines[0][1] != FORMAT_DATASET:
        got = lines[0][1] if lines else ""
        raise FormatError(f"unsupported dataset header {got!r}", line=1)

    i = 1
    split = None
    config_pairs: dict[str, str] = {}
    while i < len(lines) and lines[i][1] != "[complex]":
        no, text = lines[i]
        parts = text.split(maxsplit=2)
        if parts[0] == "split" and len(parts) == 2:
            split = parts[1]
        elif parts[0] == "config" and len(parts) == 3:
            config_pairs[parts[1]] = parts[2]
        else:
            raise FormatError(f"unexpected record {text!r}", line=no)
        i += 1
    if split not in SPLITS:
        raise FormatError(f"bad or missing split {split!r}")
    config = _parse_config(config_pairs)
    if i >= len(lines):
        raise FormatError("missing [complex] section", line=len(lines))
    i += 1

    body = []
    while i < len(lines) and not lines[i][1].startswith("[samples]"):
        body.append(lines[i])
        i += 1
    complex_ = read_complex(iter(body))
    if i >= len(lines):
        raise FormatError("missing [samples] section", line=len(lines))
    no, text = lines[i]
    try:
        n = int(text.split()[1])
    except (IndexError, ValueError):
        raise FormatError("expected '[samples] N'", line=no) from None
    i += 1

    n1 = complex_.n_edges
    x = np.zeros((n, n1))
    y = np.zeros(n, dtype=np.int64)
    tau = np.zeros(n, dtype=np.int64)
    for s in range(n):
        if i >= len(lines):
            raise FormatError(f"expected {n} samples, file ends after {s}", line=len(lines))
        no, text = lines[i]
        parts = text.split()
        if len(parts) != 3 + n1 or parts[0] != "sample":
            raise FormatError("malformed sample record", line=no)
        y[s] = int(parts[1])
        tau[s] = int(parts[2])
        x[s] = [float(v) for v in parts[3:]]
        i += 1
    return SourceLocDataset(config=config, complex=complex_, split=split, x=x, y=y, tau=tau)
