"""Over-the-air topological filters, layered networks, and training.

A layer filters the input over both edge neighborhoods with P+1 taps per
branch: the p-th tap weights the signal after p communication rounds, so under
fading/noise the filter output is y = sum_p x^(lower,p) W_p^(lower) +
sum_p x^(upper,p) W_p^(upper), followed by a pointwise nonlinearity. The p = 0
tap always applies to the untouched input. With an ideal channel the rounds
collapse to powers of the fixed shift operator and the layer reduces to a
standard cell-complex convolution.

Architectures: "airtnn" (both branches, channel at train time), "airgnn"
(lower branch only, channel at train time), "tnn"/"gnn" (same branch choices,
ideal channel at train time). At evaluation time any architecture can be run
under any channel configuration.

Gradients are exact reverse-mode derivatives of the softmax cross-entropy
with the sampled gains and noise held fixed, computed by hand over the layer
caches (no autodiff framework).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .channel import (
    LOWER,
    UPPER,
    ChannelConfig,
    IDEAL_CHANNEL,
    ShiftSequence,
    ideal_sequence,
    multi_shift,
)
from .errors import FormatError, TrainingDivergedError
from .seeding import rng_from
from .topology import CellComplex2, ShiftKind, ShiftOperator, shift_operator, spectral_norm

ARCHS = ("airtnn", "airgnn", "tnn", "gnn")


@dataclass(eq=False)
class ShiftContext:
    """The two shift operators a model runs on.

    The operator matrices drive ideal (noiseless) shifts; their supports are
    where channel gains live. upper is None only when no model in play needs
    the upper branch.
    """

    lower: ShiftOperator
    upper: ShiftOperator | None

    _lower_norm: float | None = field(default=None, repr=False)
    _upper_norm: float | None = field(default=None, repr=False)

    @classmethod
    def from_complex(
        cls,
        complex_: CellComplex2,
        lower_kind: ShiftKind | str = ShiftKind.LOWER_ADJACENCY,
        upper_kind: ShiftKind | str = ShiftKind.UPPER_ADJACENCY,
    ) -> "ShiftContext":
        return cls(
            lower=shift_operator(complex_, lower_kind),
            upper=shift_operator(complex_, upper_kind),
        )

    @property
    def n_cells(self) -> int:
        return self.lower.n_cells

    def lower_norm(self) -> float:
        """lambda_max of the lower operator, cached; used to scale init."""
        if self._lower_norm is None:
            self._lower_norm = spectral_norm(self.lower, tol=1e-8)
        return self._lower_norm

    def upper_norm(self) -> float:
        if self._upper_norm is None:
            self._upper_norm = spectral_norm(self.upper, tol=1e-8) if self.upper is not None else 0.0
        return self._upper_norm


@dataclass
class ModelSpec:
    """Architecture hyperparameters; see module docstring for arch names."""

    arch: str = "airtnn"
    n_layers: int = 2
    taps: int = 2
    in_features: int = 1
    hidden: int | tuple[int, ...] = 32
    readout_hidden: int = 32
    n_classes: int = 11
    nonlinearity: str = "relu"  # or "tanh"
    pooling: str = "flatten"  # or "mean" / "max"

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.n_layers < 1 or self.taps < 0:
            raise ValueError("need n_layers >= 1 and taps >= 0")
        if self.nonlinearity not in ("relu", "tanh"):
            raise ValueError("nonlinearity must be 'relu' or 'tanh'")
        if self.pooling not in ("flatten", "mean", "max"):
            raise ValueError("pooling must be 'flatten', 'mean' or 'max'")

    @property
    def uses_upper(self) -> bool:
        return self.arch in ("airtnn", "tnn")

    @property
    def air_trained(self) -> bool:
        return self.arch in ("airtnn", "airgnn")

    def widths(self) -> list[int]:
        """Feature widths entering each layer plus the final conv width."""
        hidden = self.hidden
        if isinstance(hidden, int):
            hidden = (hidden,) * self.n_layers
        hidden = tuple(int(h) for h in hidden)
        if len(hidden) != self.n_layers:
            raise ValueError("hidden widths must match n_layers")
        return [self.in_features, *hidden]


def _gamma(name: str):
    if name == "relu":
        return lambda z: np.maximum(z, 0.0)
    return np.tanh


def _gamma_prime(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    return 1.0 - np.square(y)


@dataclass(eq=False)
class LayerParams:
    """Filter taps of one layer: (P+1, F_in, F_out) per branch."""

    w_lower: np.ndarray
    w_upper: np.ndarray | None


@dataclass(eq=False)
class ReadoutParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(eq=False)
class ModelParams:
    layers: list[LayerParams]
    readout: ReadoutParams

    def named_leaves(self) -> list[tuple[str, np.ndarray]]:
        """All weight arrays in their fixed declared order."""
        out = []
        for i, lp in enumerate(self.layers):
            out.append((f"layer{i}.w_lower", lp.w_lower))
            if lp.w_upper is not None:
                out.append((f"layer{i}.w_upper", lp.w_upper))
        r = self.readout
        out += [("readout.w1", r.w1), ("readout.b1", r.b1),
                ("readout.w2", r.w2), ("readout.b2", r.b2)]
        return out

    def leaves(self) -> list[np.ndarray]:
        return [a for _, a in self.named_leaves()]

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[LayerParams(lp.w_lower.copy(),
                                None if lp.w_upper is None else lp.w_upper.copy())
                    for lp in self.layers],
            readout=ReadoutParams(self.readout.w1.copy(), self.readout.b1.copy(),
                                  self.readout.w2.copy(), self.readout.b2.copy()),
        )


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        layers=[LayerParams(np.zeros_like(lp.w_lower),
                            None if lp.w_upper is None else np.zeros_like(lp.w_upper))
                for lp in params.layers],
        readout=ReadoutParams(*(np.zeros_like(a) for a in
                                (params.readout.w1, params.readout.b1,
                                 params.readout.w2, params.readout.b2))),
    )


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.leaves()])


def vector_to_params(vec: np.ndarray, template: ModelParams) -> ModelParams:
    out = template.copy()
    pos = 0
    for a in out.leaves():
        a[...] = vec[pos:pos + a.size].reshape(a.shape)
        pos += a.size
    if pos != vec.size:
        raise ValueError("vector length does not match parameter count")
    return out


def init_params(spec: ModelSpec, rng: np.random.Generator, n_cells: int,
                tap_gain: float = 1.0, tap_gain_upper: float | None = None) -> ModelParams:
    """Draw initial weights.

    Filter taps get per-tap standard deviation 1 / (tap_gain^p * sqrt(fan)),
    where fan counts taps and branches; tap_gain should estimate the per-hop
    signal amplification of the raw shift so all taps start with comparable
    output scale (the upper branch may amplify differently). Readout weights
    are Glorot normal, biases zero.
    """
    widths = spec.widths()
    tap_gain = max(float(tap_gain), 1.0)
    tap_gain_upper = tap_gain if tap_gain_upper is None else max(float(tap_gain_upper), 1.0)
    n_branches = 2 if spec.uses_upper else 1
    layers = []
    for f_in, f_out in zip(widths[:-1], widths[1:]):
        fan = f_in * (spec.taps + 1) * n_branches
        scale = (1.0 / (np.sqrt(fan) * tap_gain ** np.arange(spec.taps + 1)))[:, None, None]
        w_lower = rng.standard_normal((spec.taps + 1, f_in, f_out)) * scale
        w_upper = None
        if spec.uses_upper:
            scale_u = (1.0 / (np.sqrt(fan) * tap_gain_upper ** np.arange(spec.taps + 1)))[:, None, None]
            w_upper = rng.standard_normal((spec.taps + 1, f_in, f_out)) * scale_u
        layers.append(LayerParams(w_lower=w_lower, w_upper=w_upper))

    f = widths[-1] * n_cells if spec.pooling == "flatten" else widths[-1]
    h, k = spec.readout_hidden, spec.n_classes
    w1 = rng.standard_normal((f, h)) * math.sqrt(2.0 / (f + h))
    w2 = rng.standard_normal((h, k)) * math.sqrt(2.0 / (h + k))
    readout = ReadoutParams(w1=w1, b1=np.zeros(h), w2=w2, b2=np.zeros(k))
    return ModelParams(layers=layers, readout=readout)


# ---------------------------------------------------------------------------
# Forward pass.

@dataclass(eq=False)
class LayerCache:
    x: np.ndarray
    seq_lower: ShiftSequence
    seq_upper: ShiftSequence | None
    z: np.ndarray
    y: np.ndarray


@dataclass(eq=False)
class ReadoutCache:
    y_in: np.ndarray
    pooled: np.ndarray
    argmax: np.ndarray | None
    z1: np.ndarray
    a1: np.ndarray
    logits: np.ndarray


@dataclass(eq=False)
class ForwardCache:
    layers: list[LayerCache]
    readout: ReadoutCache


def layer_sequences(
    x: np.ndarray,
    spec: ModelSpec,
    ctx: ShiftContext,
    cfg: ChannelConfig,
    rng: np.random.Generator | None = None,
    draws: dict | None = None,
) -> tuple[ShiftSequence, ShiftSequence | None]:
    """Build the lower (and, for *tnn archs, upper) shift sequences for x.

    Ideal configs use noiseless powers of the operator matrices; otherwise
    every round samples fresh fading and noise from rng, or replays the
    recorded realizations in `draws`.
    """
    p = spec.taps
    if cfg.ideal:
        seq_l = ideal_sequence(x, ctx.lower.matrix, p, LOWER)
        seq_u = ideal_sequence(x, ctx.upper.matrix, p, UPPER) if spec.uses_upper else None
        return seq_l, seq_u
    reals_l = draws["lower"] if draws is not None else None
    seq_l = multi_shift(x, ctx.lower.support, p, cfg, rng,
                        n_cells=ctx.n_cells, neighborhood=LOWER, realizations=reals_l)
    seq_u = None
    if spec.uses_upper:
        reals_u = draws["upper"] if draws is not None else None
        seq_u = multi_shift(x, ctx.upper.support, p, cfg, rng,
                            n_cells=ctx.n_cells, neighborhood=UPPER, realizations=reals_u)
    return seq_l, seq_u


def airtf_apply(seq_lower: ShiftSequence, seq_upper: ShiftSequence | None,
                params: LayerParams) -> np.ndarray:
    """Tap-weighted sum of the multi-shifted signals (the filter itself)."""
    taps = params.w_lower.shape[0]
    if len(seq_lower.shifts) != taps or (
            seq_upper is not None and len(seq_upper.shifts) != taps):
        raise ValueError("sequence length does not match tap count")
    if seq_lower.shifts[0].shape[-1] != params.w_lower.shape[1]:
        raise ValueError("input feature width does not match filter taps")
    y = np.matmul(seq_lower.shifts[0], params.w_lower[0])
    for p in range(1, taps):
        y += np.matmul(seq_lower.shifts[p], params.w_lower[p])
    if params.w_upper is not None:
        if seq_upper is None:
            raise ValueError("upper taps present but no upper sequence")
        for p in range(taps):
            y += np.matmul(seq_upper.shifts[p], params.w_upper[p])
    return y


def layer_forward(
    x: np.ndarray,
    params: LayerParams,
    spec: ModelSpec,
    ctx: ShiftContext,
    cfg: ChannelConfig,
    rng: np.random.Generator | None = None,
    draws: dict | None = None,
) -> LayerCache:
    seq_l, seq_u = layer_sequences(x, spec, ctx, cfg, rng, draws)
    z = airtf_apply(seq_l, seq_u, params)
    y = _gamma(spec.nonlinearity)(z)
    return LayerCache(x=x, seq_lower=seq_l, seq_upper=seq_u, z=z, y=y)


def readout_forward(y: np.ndarray, params: ReadoutParams, spec: ModelSpec) -> ReadoutCache:
    """Collapse the cell axis, one hidden dense layer, linear class scores.

    "flatten" keeps per-cell features (the readout sees where energy sits);
    "mean"/"max" pool them into permutation-invariant statistics.
    """
    argmax = None
    if spec.pooling == "flatten":
        pooled = y.reshape(y.shape[:-2] + (-1,))
    elif spec.pooling == "mean":
        pooled = np.mean(y, axis=-2)
    else:
        argmax = np.argmax(y, axis=-2)
        pooled = np.take_along_axis(y, argmax[..., None, :], axis=-2)[..., 0, :]
    z1 = np.matmul(pooled, params.w1) + params.b1
    a1 = _gamma(spec.nonlinearity)(z1)
    logits = np.matmul(a1, params.w2) + params.b2
    return ReadoutCache(y_in=y, pooled=pooled, argmax=argmax, z1=z1, a1=a1, logits=logits)


def model_forward(
    params: ModelParams,
    spec: ModelSpec,
    ctx: ShiftContext,
    x: np.ndarray,
    cfg: ChannelConfig,
    rng: np.random.Generator | None = None,
    draws: list[dict] | None = None,
    want_cache: bool = False,
):
    """Full forward pass; x has shape (..., n_cells, in_features).

    draws, when given, is one dict per layer with recorded realizations under
    keys "lower"/"upper"; the pass is then fully deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    caches = []
    h = x
    for i, lp in enumerate(params.layers):
        cache = layer_forward(h, lp, spec, ctx, cfg, rng,
                              draws[i] if draws is not None else None)
        caches.append(cache)
        h = cache.y
    rc = readout_forward(h, params.readout, spec)
    if want_cache:
        return rc.logits, ForwardCache(layers=caches, readout=rc)
    return rc.logits


def draw_channel(
    spec: ModelSpec,
    ctx: ShiftContext,
    x: np.ndarray,
    params: ModelParams,
    cfg: ChannelConfig,
    rng: np.random.Generator,
) -> list[dict]:
    """Record one full set of realizations by running a throwaway forward.

    Useful to freeze the channel, e.g. for finite-difference gradient checks.
    """
    _, cache = model_forward(params, spec, ctx, x, cfg, rng, want_cache=True)
    draws = []
    for lc in cache.layers:
        draws.append({
            "lower": lc.seq_lower.realizations,
            "upper": lc.seq_upper.realizations if lc.seq_upper is not None else None,
        })
    return draws


# ---------------------------------------------------------------------------
# Loss and backward pass.

def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Per-sample softmax cross-entropy (max-subtracted for stability).

    Returns (losses, probs); probs feed the backward pass.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    total = np.sum(exp, axis=-1, keepdims=True)
    probs = exp / total
    lse = np.log(total[..., 0])
    picked = np.take_along_axis(shifted, labels[..., None], axis=-1)[..., 0]
    return lse - picked, probs


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k)[labels]


def _outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum of outer products over all leading axes: (..., f), (..., g) -> (f, g)."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _sum_leading(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1]).sum(axis=0)


def model_backward(
    params: ModelParams,
    spec: ModelSpec,
    ctx: ShiftContext,
    cache: ForwardCache,
    probs: np.ndarray,
    labels: np.ndarray,
) -> ModelParams:
    """Gradients of the batch-mean cross-entropy w.r.t. every weight.

    The recorded gains and noise in the cache are treated as constants; the
    shift recursion is unwound with transposed gain matrices.
    """
    rc = cache.readout
    n_batch = int(np.prod(probs.shape[:-1])) or 1
    dlogits = (probs - _one_hot(labels, probs.shape[-1])) / n_batch

    grads = zeros_like_params(params)
    gr = grads.readout
    gr.w2 += _outer_sum(rc.a1, dlogits)
    gr.b2 += _sum_leading(dlogits)
    da1 = np.matmul(dlogits, params.readout.w2.T)
    dz1 = da1 * _gamma_prime(spec.nonlinearity, rc.z1, rc.a1)
    gr.w1 += _outer_sum(rc.pooled, dz1)
    gr.b1 += _sum_leading(dz1)
    dpooled = np.matmul(dz1, params.readout.w1.T)

    n_cells = rc.y_in.shape[-2]
    if spec.pooling == "flatten":
        dy = dpooled.reshape(rc.y_in.shape)
    elif spec.pooling == "mean":
        dy = np.broadcast_to(dpooled[..., None, :] / n_cells, rc.y_in.shape).copy()
    else:
        dy = np.zeros_like(rc.y_in)
        np.put_along_axis(dy, rc.argmax[..., None, :], dpooled[..., None, :], axis=-2)

    for lc, lp, glp in zip(reversed(cache.layers), reversed(params.layers),
                           reversed(grads.layers)):
        dz = dy * _gamma_prime(spec.nonlinearity, lc.z, lc.y)
        dx = np.zeros_like(lc.x)
        for seq, w, gw in (
            (lc.seq_lower, lp.w_lower, glp.w_lower),
            (lc.seq_upper, lp.w_upper, glp.w_upper),
        ):
            if w is None:
                continue
            taps = w.shape[0]
            dshift = [None] * taps
            for p in range(taps):
                gw[p] += _outer_sum(seq.shifts[p], dz)
                dshift[p] = np.matmul(dz, w[p].T)
            for p in range(taps - 1, 0, -1):
                gains = (seq.realizations[p - 1].gains if seq.realizations
                         else (ctx.lower if seq.neighborhood == LOWER else ctx.upper).matrix)
                dshift[p - 1] += np.matmul(np.swapaxes(gains, -1, -2), dshift[p])
            dx += dshift[0]
        dy = dx
    return grads


def loss_and_grads(params, spec, ctx, x, labels, cfg, rng=None, draws=None):
    """Batch-mean loss, accuracy, and gradients in one pass."""
    logits, cache = model_forward(params, spec, ctx, x, cfg, rng, draws, want_cache=True)
    losses, probs = cross_entropy(logits, labels)
    grads = model_backward(params, spec, ctx, cache, probs, labels)
    acc = float(np.mean(np.argmax(logits, axis=-1) == labels))
    return float(np.mean(losses)), acc, grads


# ---------------------------------------------------------------------------
# ADAM and the training loop.

@dataclass
class TrainConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in params.leaves()],
                   v=[np.zeros_like(a) for a in params.leaves()])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              cfg: TrainConfig) -> None:
    """Standard bias-corrected ADAM update, in place."""
    state.t += 1
    b1t = 1.0 - cfg.beta1 ** state.t
    b2t = 1.0 - cfg.beta2 ** state.t
    for a, g, m, v in zip(params.leaves(), grads.leaves(), state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        a -= cfg.lr * (m / b1t) / (np.sqrt(v / b2t) + cfg.eps)


def prepare_inputs(x: np.ndarray, n_cells: int) -> np.ndarray:
    """Accept (n, n_cells) or (n, n_cells, F) sample arrays."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == n_cells:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1] != n_cells:
        raise ValueError(f"expected (n, {n_cells}) or (n, {n_cells}, F) inputs, got {x.shape}")
    return x


@dataclass(eq=False)
class TrainResult:
    params: ModelParams
    history: list[tuple[int, str, float, float]]  # (epoch, split, loss, accuracy)


def train(
    spec: ModelSpec,
    ctx: ShiftContext,
    x_train: np.ndarray,
    y_train: np.ndarray,
    cfg: TrainConfig,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> TrainResult:
    """ADAM training with fresh channel draws at every step.

    tnn/gnn train under an ideal channel regardless of cfg.channel; air archs
    resample fading and noise per sample, layer, and round at each step. Fully
    deterministic for a fixed cfg.seed. Raises TrainingDivergedError on a
    non-finite loss.
    """
    x_train = prepare_inputs(x_train, ctx.n_cells)
    y_train = np.asarray(y_train, dtype=np.int64)
    if x_train.shape[0] == 0:
        raise ValueError("training set is empty")
    channel = cfg.channel if spec.air_trained else IDEAL_CHANNEL

    tap_gain = ctx.lower_norm()
    tap_gain_upper = ctx.upper_norm() if spec.uses_upper else None
    if spec.air_trained and not channel.ideal:
        fading_mean = channel.fading_scale * math.sqrt(math.pi / 2.0)
        tap_gain *= fading_mean
        if tap_gain_upper is not None:
            tap_gain_upper *= fading_mean
    params = init_params(spec, rng_from(cfg.seed, seeding.MODEL_INIT),
                         n_cells=ctx.n_cells, tap_gain=tap_gain,
                         tap_gain_upper=tap_gain_upper)

    state = AdamState.for_params(params)
    shuffle_rng = rng_from(cfg.seed, seeding.TRAIN_SHUFFLE)
    channel_rng = rng_from(cfg.seed, seeding.TRAIN_CHANNEL)
    val_rng = rng_from(cfg.seed, seeding.VAL_CHANNEL)

    n = x_train.shape[0]
    history: list[tuple[int, str, float, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        hit_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, acc, grads = loss_and_grads(
                params, spec, ctx, x_train[idx], y_train[idx], channel, channel_rng)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, step {start // cfg.batch_size}")
            adam_step(params, grads, state, cfg)
            loss_sum += loss * idx.size
            hit_sum += acc * idx.size
        history.append((epoch, "train", loss_sum / n, hit_sum / n))

        if x_val is not None and y_val is not None and len(y_val):
            xv = prepare_inputs(x_val, ctx.n_cells)
            yv = np.asarray(y_val, dtype=np.int64)
            logits = model_forward(params, spec, ctx, xv, channel, val_rng)
            losses, _ = cross_entropy(logits, yv)
            vacc = float(np.mean(np.argmax(logits, axis=-1) == yv))
            history.append((epoch, "val", float(np.mean(losses)), vacc))
    return TrainResult(params=params, history=history)


# ---------------------------------------------------------------------------
# Evaluation.

EVAL_CHUNK = 256  # fixed episode chunk so draw order never depends on callers


@dataclass(eq=False)
class EvalResult:
    accuracy: float
    per_realization: np.ndarray  # (n_realizations,), singleton for ideal


def evaluate(
    spec: ModelSpec,
    ctx: ShiftContext,
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    cfg: ChannelConfig,
    n_realizations: int = 20,
    seed: int = 0,
) -> EvalResult:
    """Accuracy under a channel config.

    Ideal configs use one deterministic pass. Otherwise every sample is
    classified under n_realizations independent channel draws and accuracy is
    the mean over samples x realizations; each realization index gets its own
    derived stream, so results do not depend on evaluation order.
    """
    x = prepare_inputs(x, ctx.n_cells)
    y = np.asarray(y, dtype=np.int64)

    def pass_accuracy(rng):
        hits = 0
        for start in range(0, x.shape[0], EVAL_CHUNK):
            logits = model_forward(params, spec, ctx, x[start:start + EVAL_CHUNK], cfg, rng)
            hits += int(np.sum(np.argmax(logits, axis=-1) == y[start:start + EVAL_CHUNK]))
        return hits / x.shape[0]

    if cfg.ideal:
        acc = pass_accuracy(None)
        return EvalResult(accuracy=acc, per_realization=np.array([acc]))
    accs = np.array([pass_accuracy(rng_from(seed, seeding.EVAL, r))
                     for r in range(n_realizations)])
    return EvalResult(accuracy=float(np.mean(accs)), per_realization=accs)


def predict(params, spec, ctx, x, cfg, seed: int = 0) -> np.ndarray:
    """Class labels for x; air configs use one seeded realization."""
    x = prepare_inputs(x, ctx.n_cells)
    rng = None if cfg.ideal else rng_from(seed, seeding.EVAL, 0)
    logits = model_forward(params, spec, ctx, x, cfg, rng)
    return np.argmax(logits, axis=-1)


# ---------------------------------------------------------------------------
# Checkpoints: versioned text, spec echo, flat weight arrays in order.

FORMAT_CHECKPOINT = "airtnn-checkpoint v1"
_VALUES_PER_LINE = 8


def write_checkpoint(fh, spec: ModelSpec, params: ModelParams) -> None:
    fh.write(FORMAT_CHECKPOINT + "\n")
    hidden = spec.hidden if isinstance(spec.hidden, tuple) else (spec.hidden,) * spec.n_layers
    fh.write(f"arch {spec.arch}\n")
    fh.write(f"n_layers {spec.n_layers}\n")
    fh.write(f"taps {spec.taps}\n")
    fh.write(f"in_features {spec.in_features}\n")
    fh.write("hidden " + " ".join(str(h) for h in hidden) + "\n")
    fh.write(f"readout_hidden {spec.readout_hidden}\n")
    fh.write(f"n_classes {spec.n_classes}\n")
    fh.write(f"nonlinearity {spec.nonlinearity}\n")
    fh.write(f"pooling {spec.pooling}\n")
    for name, arr in params.named_leaves():
        fh.write(f"tensor {name} " + " ".join(str(d) for d in arr.shape) + "\n")
        flat = arr.ravel()
        for start in range(0, flat.size, _VALUES_PER_LINE):
            chunk = flat[start:start + _VALUES_PER_LINE]
            fh.write(" ".join(repr(float(v)) for v in chunk) + "\n")
    fh.write("end\n")


def save_checkpoint(path, spec: ModelSpec, params: ModelParams) -> None:
    with open(path, "w") as fh:
        write_checkpoint(fh, spec, params)


def load_checkpoint(path) -> tuple[ModelSpec, ModelParams]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FORMAT_CHECKPOINT:
        raise FormatError(f"unsupported checkpoint header {lines[0] if lines else ''!r}", line=1)
    fields: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("tensor "):
        key, _, value = lines[i].partition(" ")
        fields[key] = value
        i += 1
    try:
        spec = ModelSpec(
            arch=fields["arch"],
            n_layers=int(fields["n_layers"]),
            taps=int(fields["taps"]),
            in_features=int(fields["in_features"]),
            hidden=tuple(int(h) for h in fields["hidden"].split()),
            readout_hidden=int(fields["readout_hidden"]),
            n_classes=int(fields["n_classes"]),
            nonlinearity=fields["nonlinearity"],
            pooling=fields["pooling"],
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint missing field {exc}") from None

    tensors: dict[str, np.ndarray] = {}
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if parts[0] != "tensor":
            raise FormatError(f"expected tensor record, got {lines[i]!r}", line=i + 1)
        name = parts[1]
        shape = tuple(int(d) for d in parts[2:])
        size = int(np.prod(shape)) if shape else 1
        values: list[float] = []
        i += 1
        while len(values) < size:
            if i >= len(lines):
                raise FormatError("unexpected end of checkpoint", line=i)
            values.extend(float(v) for v in lines[i].split())
            i += 1
        tensors[name] = np.array(values, dtype=np.float64).reshape(shape)
    if i >= len(lines):
        raise FormatError("checkpoint has no end marker", line=len(lines))

    layers = []
    for li in range(spec.n_layers):
        w_lower = tensors[f"layer{li}.w_lower"]
        w_upper = tensors.get(f"layer{li}.w_upper")
        layers.append(LayerParams(w_lower=w_lower, w_upper=w_upper))
    readout = ReadoutParams(w1=tensors["readout.w1"], b1=tensors["readout.b1"],
                            w2=tensors["readout.w2"], b2=tensors["readout.b2"])
    return spec, ModelParams(layers=layers, readout=readout)


def write_history_csv(fh, history) -> None:
    fh.write("epoch,split,loss,accuracy\n")
    for epoch, split, loss, acc in history:
        fh.write(f"{epoch},{split},{loss!r},{acc!r}\n")
