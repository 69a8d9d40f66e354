"""Built-in invariant and oracle checks, runnable via `airtnn verify`.

Quick self-contained versions of the core correctness properties; the full
test suite lives with the source tree, this runs anywhere the package is
installed.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .channel import ChannelConfig, IDEAL_CHANNEL, multi_shift
from .seeding import rng_from
from .topology import lift_to_complex, sbm_generate, shift_operator, spectral_norm


def _small_complex(seed=0):
    graph = sbm_generate(12, 3, 0.9, 0.1, rng_from(seed, 901))
    return lift_to_complex(graph)


def check_structure():
    for seed in range(10):
        cc = _small_complex(seed)
        if np.any(cc.B1 @ cc.B2):
            return False, f"B1 B2 != 0 at seed {seed}"
        expected = cc.n_edges - cc.n_nodes + 1
        if cc.n_polygons != expected:
            return False, f"polygon count {cc.n_polygons} != {expected} at seed {seed}"
    return True, "10 complexes: B1 B2 = 0, basis size = E - V + 1"


def check_spectral_norm():
    cc = _small_complex()
    worst = 0.0
    for kind in ("lower_adjacency", "lower_laplacian", "upper_laplacian"):
        op = shift_operator(cc, kind)
        exact = float(np.max(np.abs(np.linalg.eigvalsh(op.matrix))))
        est = spectral_norm(op, tol=1e-12)
        worst = max(worst, abs(est - exact) / max(exact, 1e-12))
    ok = worst < 1e-8
    return ok, f"max relative error vs dense eigensolver {worst:.2e}"


def check_expansion():
    cc = _small_complex()
    op = shift_operator(cc, "lower_adjacency")
    cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
    x = rng_from(3, 902).standard_normal((cc.n_edges, 2))
    seq = multi_shift(x, op.support, 3, cfg, rng_from(4, 903))
    worst = 0.0
    for p in range(1, 4):
        acc = x.copy()
        for r in seq.realizations[:p]:
            acc = r.gains @ acc
        for i in range(1, p):
            t = seq.realizations[i - 1].noise.copy()
            for r in seq.realizations[i:p]:
                t = r.gains @ t
            acc = acc + t
        acc = acc + seq.realizations[p - 1].noise
        err = np.max(np.abs(seq.shifts[p] - acc)) / max(np.max(np.abs(acc)), 1e-12)
        worst = max(worst, err)
    ok = worst <= 1e-10
    return ok, f"recursion vs closed form, worst relative error {worst:.2e}"


def check_ideal_limit():
    cc = _small_complex()
    ctx = nn.ShiftContext.from_complex(cc)
    spec_air = nn.ModelSpec(arch="airtnn", n_layers=2, taps=2, hidden=4,
                            readout_hidden=4, n_classes=3)
    spec_tnn = nn.ModelSpec(arch="tnn", n_layers=2, taps=2, hidden=4,
                            readout_hidden=4, n_classes=3)
    params = nn.init_params(spec_air, rng_from(5, 904), n_cells=ctx.n_cells, tap_gain=3.0)
    x = rng_from(6, 905).standard_normal((4, ctx.n_cells, 1))
    a = nn.model_forward(params, spec_air, ctx, x, IDEAL_CHANNEL)
    b = nn.model_forward(params, spec_tnn, ctx, x, IDEAL_CHANNEL)
    diff = float(np.max(np.abs(a - b)))
    return diff <= 1e-12, f"airtnn(ideal) vs tnn forward, max diff {diff:.2e}"


def check_gradients():
    cc = _small_complex()
    ctx = nn.ShiftContext.from_complex(cc)
    spec = nn.ModelSpec(arch="airtnn", n_layers=2, taps=2, hidden=3,
                        readout_hidden=4, n_classes=3, nonlinearity="tanh")
    params = nn.init_params(spec, rng_from(7, 906), n_cells=ctx.n_cells, tap_gain=3.0)
    cfg = ChannelConfig(fading_scale=1.0, snr_db=10.0)
    x = rng_from(8, 907).standard_normal((2, ctx.n_cells, 1))
    labels = np.array([0, 2])
    draws = nn.draw_channel(spec, ctx, x, params, cfg, rng_from(9, 908))
    _, _, grads = nn.loss_and_grads(params, spec, ctx, x, labels, cfg, draws=draws)

    vec = nn.params_to_vector(params)
    gvec = nn.params_to_vector(grads)
    h = 1e-5

    def loss_at(v):
        p = nn.vector_to_params(v, params)
        logits = nn.model_forward(p, spec, ctx, x, cfg, draws=draws)
        losses, _ = nn.cross_entropy(logits, labels)
        return float(np.mean(losses))

    rng = rng_from(10, 909)
    picks = rng.choice(vec.size, size=min(60, vec.size), replace=False)
    worst = 0.0
    for k in picks:
        vp = vec.copy(); vp[k] += h
        vm = vec.copy(); vm[k] -= h
        fd = (loss_at(vp) - loss_at(vm)) / (2 * h)
        rel = abs(fd - gvec[k]) / max(abs(fd), abs(gvec[k]), 1e-8)
        worst = max(worst, rel)
    return worst <= 1e-4, f"finite differences on {picks.size} weights, worst {worst:.2e}"


def check_determinism():
    cc = _small_complex()
    ctx = nn.ShiftContext.from_complex(cc)
    rng = rng_from(11, 910)
    x = rng.standard_normal((30, ctx.n_cells))
    y = rng.integers(0, 3, 30)
    spec = nn.ModelSpec(arch="airtnn", n_layers=1, taps=1, hidden=4,
                        readout_hidden=4, n_classes=3)
    cfg = nn.TrainConfig(lr=0.01, batch_size=8, epochs=3,
                         channel=ChannelConfig(1.0, 10.0), seed=3)
    h1 = nn.train(spec, ctx, x, y, cfg).history
    h2 = nn.train(spec, ctx, x, y, cfg).history
    return h1 == h2, "two identical trainings give bit-identical histories"


CHECKS = [
    ("structure", check_structure),
    ("spectral-norm", check_spectral_norm),
    ("recursion-expansion", check_expansion),
    ("ideal-limit", check_ideal_limit),
    ("gradients", check_gradients),
    ("determinism", check_determinism),
]


def run_checks(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        all_ok = all_ok and ok
    return all_ok
