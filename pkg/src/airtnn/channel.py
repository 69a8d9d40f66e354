"""Fading/noise channel sampling and the over-the-air shift recursion.

One communication round multiplies the transmitted signal by a matrix of
per-link Rayleigh fading gains (nonzero exactly on the neighborhood support)
and adds AWGN at the receiving cells. Gains are constant within a round,
independent across links, and redrawn for every round, layer, and sample.

Signals are arrays of shape (..., n_cells, n_features); any leading axes are
independent episodes that get independent channel draws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class ChannelConfig:
    """Rayleigh scale, per-round SNR and the reference-power convention.

    snr_db may be math.inf for a fading-only channel. ideal=True short-circuits
    everything to unit gains and zero noise.
    """

    fading_scale: float = 1.0
    snr_db: float = 20.0
    ideal: bool = False
    snr_reference: str = "empirical"  # or "unit"

    def __post_init__(self):
        if not self.ideal and not self.fading_scale > 0:
            raise ValueError("fading_scale must be positive")
        if self.snr_reference not in ("empirical", "unit"):
            raise ValueError("snr_reference must be 'empirical' or 'unit'")


IDEAL_CHANNEL = ChannelConfig(ideal=True)


@dataclass(eq=False)
class AirShiftRealization:
    """One sampled communication round: gains on the support plus AWGN."""

    gains: np.ndarray  # (..., n_cells, n_cells), zero off the support
    noise: np.ndarray  # (..., n_cells, n_features)
    round_index: int = 1


@dataclass(eq=False)
class ShiftSequence:
    """Signals after 0..P air shifts; shifts[0] is the untouched input."""

    shifts: list[np.ndarray]
    neighborhood: str = LOWER
    realizations: list[AirShiftRealization] = field(default_factory=list)

    @property
    def order(self) -> int:
        return len(self.shifts) - 1


def noise_sigma(cfg: ChannelConfig, signal: np.ndarray) -> float:
    """AWGN standard deviation for one round at the configured SNR.

    The reference power is 1 ('unit') or the empirical mean square of the
    transmitted signal ('empirical'); an all-zero signal falls back to the
    unit reference.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0:
        raise ValueError("signal must be nonempty")
    if cfg.ideal or math.isinf(cfg.snr_db):
        return 0.0
    if cfg.snr_reference == "unit":
        p_ref = 1.0
    else:
        p_ref = float(np.mean(np.square(signal)))
        if p_ref == 0.0:
            logger.warning("all-zero signal under empirical SNR reference; using unit power")
            p_ref = 1.0
    return math.sqrt(p_ref * 10.0 ** (-cfg.snr_db / 10.0))


def _noise_sigma_batched(cfg: ChannelConfig, signal: np.ndarray) -> np.ndarray:
    """Per-episode sigma, shaped to broadcast against (..., n_cells, n_features)."""
    if cfg.ideal or math.isinf(cfg.snr_db):
        return np.zeros(signal.shape[:-2] + (1, 1))
    if cfg.snr_reference == "unit":
        p_ref = np.ones(signal.shape[:-2] + (1, 1))
    else:
        p_ref = np.mean(np.square(signal), axis=(-2, -1), keepdims=True)
        if np.any(p_ref == 0.0):
            logger.warning("all-zero signal under empirical SNR reference; using unit power")
            p_ref = np.where(p_ref == 0.0, 1.0, p_ref)
    return np.sqrt(p_ref * 10.0 ** (-cfg.snr_db / 10.0))


def sample_realization(
    support: np.ndarray,
    cfg: ChannelConfig,
    sigma,
    n_features: int,
    rng: np.random.Generator,
    n_cells: int | None = None,
    batch_shape: tuple[int, ...] = (),
    round_index: int = 1,
) -> AirShiftRealization:
    """Draw one round of fading gains and noise.

    Gains at (i, j) and (j, i) are independent draws (no link reciprocity).
    Draw order is fixed (gains first, then noise) so equal seeds give
    bit-identical realizations. sigma may be a scalar or a per-episode array.
    """
    support = np.asarray(support, dtype=np.int64).reshape(-1, 2)
    if n_cells is None:
        n_cells = int(support.max()) + 1 if support.size else 0
    rows, cols = support[:, 0], support[:, 1]
    gains = np.zeros(batch_shape + (n_cells, n_cells))
    noise_shape = batch_shape + (n_cells, n_features)
    if cfg.ideal:
        gains[..., rows, cols] = 1.0
        noise = np.zeros(noise_shape)
    else:
        gains[..., rows, cols] = rng.rayleigh(cfg.fading_scale, batch_shape + (rows.shape[0],))
        noise = rng.standard_normal(noise_shape) * sigma
    return AirShiftRealization(gains=gains, noise=noise, round_index=round_index)


def air_shift(x: np.ndarray, realization: AirShiftRealization) -> np.ndarray:
    """One noisy shift: gains @ x + noise."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-2] != realization.gains.shape[-1]:
        raise ValueError(
            f"signal has {x.shape[-2]} cells, gains expect {realization.gains.shape[-1]}"
        )
    if realization.noise.shape[-2:] != (x.shape[-2], x.shape[-1]):
        raise ValueError("noise shape does not match the signal")
    return np.matmul(realization.gains, x) + realization.noise


def multi_shift(
    x: np.ndarray,
    support: np.ndarray,
    order: int,
    cfg: ChannelConfig,
    rng: np.random.Generator | None = None,
    n_cells: int | None = None,
    neighborhood: str = LOWER,
    realizations: list[AirShiftRealization] | None = None,
    trace=None,
) -> ShiftSequence:
    """Recursively air-shift a signal `order` times with fresh rounds.

    Each round draws a new realization (fading constant within the round,
    i.i.d. across rounds) and injects noise, including rounds whose input is
    already noisy. Passing `realizations` replays recorded rounds instead of
    sampling; `trace` optionally logs every sampled round to a text stream.
    """
    if order < 0:
        raise ValueError("shift order must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if n_cells is None:
        n_cells = x.shape[-2]
    shifts = [x]
    used: list[AirShiftRealization] = []
    for p in range(1, order + 1):
        if realizations is not None:
            r = realizations[p - 1]
        else:
            if rng is None and not cfg.ideal:
                raise ValueError("an rng is required to sample realizations")
            sigma = _noise_sigma_batched(cfg, shifts[-1])
            r = sample_realization(
                support, cfg, sigma, x.shape[-1],
                rng if rng is not None else np.random.default_rng(0),
                n_cells=n_cells, batch_shape=x.shape[:-2], round_index=p,
            )
            if trace is not None:
                write_realization(trace, r)
        shifts.append(air_shift(shifts[-1], r))
        used.append(r)
    return ShiftSequence(shifts=shifts, neighborhood=neighborhood, realizations=used)


def ideal_sequence(x: np.ndarray, matrix: np.ndarray, order: int,
                   neighborhood: str = LOWER) -> ShiftSequence:
    """Noiseless shift sequence [x, Sx, ..., S^P x] for a fixed operator."""
    x = np.asarray(x, dtype=np.float64)
    shifts = [x]
    for _ in range(order):
        shifts.append(np.matmul(matrix, shifts[-1]))
    return ShiftSequence(shifts=shifts, neighborhood=neighborhood)


# ---------------------------------------------------------------------------
# Optional realization trace, for offline oracle cross-checks.

def write_realization(fh, r: AirShiftRealization) -> None:
    if r.gains.ndim != 2:
        raise ValueError("traces are only written for single-episode realizations")
    fh.write(f"round {r.round_index}\n")
    rows, cols = np.nonzero(r.gains)
    for i, j in zip(rows, cols):
        fh.write(f"g {i} {j} {float(r.gains[i, j])!r}\n")
    for i in range(r.noise.shape[0]):
        fh.write("n " + " ".join(repr(float(v)) for v in r.noise[i]) + "\n")


def read_realizations(fh, n_cells: int, n_features: int) -> list[AirShiftRealization]:
    out: list[AirShiftRealization] = []
    gains = noise = None
    noise_row = 0
    for line in fh:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "round":
            gains = np.zeros((n_cells, n_cells))
            noise = np.zeros((n_cells, n_features))
            noise_row = 0
            out.append(AirShiftRealization(gains=gains, noise=noise,
                                           round_index=int(parts[1])))
        elif parts[0] == "g":
            gains[int(parts[1]), int(parts[2])] = float(parts[3])
        elif parts[0] == "n":
            noise[noise_row] = [float(v) for v in parts[1:]]
            noise_row += 1
    return out
