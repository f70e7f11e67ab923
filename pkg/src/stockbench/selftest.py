"""Quick self-verification: gradient checks for every registered op, metric
and attention oracles, and windowing arithmetic. Meant to finish in seconds
as a smoke check of a deployed installation (``bench selftest``)."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .attention import (
    AttentionInputs,
    ProbSparseConfig,
    causal_mask,
    full_attention,
    probsparse_attention,
    sparsity_measure_exact,
)
from .autodiff import Tensor, finite_diff_check
from .data import make_windows
from .metrics import mae, mse


def _grad_cases():
    rng = np.random.default_rng(0)

    def with_self_product(op):
        return lambda t: ad.tsum(ad.mul(op(t), op(t)))

    return [
        ("matmul", lambda t: ad.tsum(ad.matmul(t, Tensor(rng.normal(size=(4, 3))))), (3, 4)),
        ("add", with_self_product(lambda t: ad.add(t, Tensor(rng.normal(size=(3, 4))))), (3, 4)),
        ("mul", lambda t: ad.tsum(ad.mul(t, Tensor(rng.normal(size=(3, 4))))), (3, 4)),
        ("scale", lambda t: ad.tsum(ad.scale(t, -1.7)), (3, 4)),
        ("relu", with_self_product(ad.relu), (3, 4)),
        ("gelu", with_self_product(ad.gelu), (3, 4)),
        ("tanh", with_self_product(ad.tanh), (3, 4)),
        ("sigmoid", with_self_product(ad.sigmoid), (3, 4)),
        ("softmax", lambda t: ad.tsum(ad.mul(ad.softmax_lastdim(t), Tensor(np.arange(6.0)))), (6,)),
        (
            "layer_norm",
            with_self_product(
                lambda t: ad.layer_norm(t, Tensor(np.linspace(0.5, 2, 8)), Tensor(np.zeros(8)), 1e-5)
            ),
            (4, 8),
        ),
        ("mean", with_self_product(lambda t: ad.tmean(t, axis=-1)), (3, 4)),
    ]


def run(log=print) -> bool:
    """Run all checks; returns True when everything passes."""
    rng = np.random.default_rng(42)
    ok = True

    def check(name: str, passed: bool, detail: str = ""):
        nonlocal ok
        ok = ok and passed
        log(f"[{'PASS' if passed else 'FAIL'}] {name}{': ' + detail if detail and not passed else ''}")

    for name, fn, shape in _grad_cases():
        x = rng.normal(size=shape)
        if name == "relu":
            x = np.where(np.abs(x) < 1e-3, x + 0.01, x)
        report = finite_diff_check(fn, Tensor(x), tol=1e-4)
        check(f"gradient {name}", report.passed, str(report))

    # metrics against loop oracles
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 50))
        y, yhat = rng.normal(size=n), rng.normal(size=n)
        loop_mae = sum(abs(a - b) for a, b in zip(y, yhat)) / n
        loop_mse = sum((a - b) ** 2 for a, b in zip(y, yhat)) / n
        worst = max(worst, abs(mae(y, yhat) - loop_mae), abs(mse(y, yhat) - loop_mse))
    check("metric oracles", worst <= 1e-12, f"max deviation {worst:.2e}")

    # sparse attention reduces to full attention when nothing is dropped
    max_dev = 0.0
    for trial in range(5):
        L = int(rng.integers(4, 17))
        inp = AttentionInputs(
            q=Tensor(rng.normal(size=(L, 8))),
            k=Tensor(rng.normal(size=(L, 8))),
            v=Tensor(rng.normal(size=(L, 8))),
            n_heads=2,
        )
        cfg = ProbSparseConfig(sample_factor=100.0, top_factor=100.0, rng_seed=trial)
        dev = np.abs(probsparse_attention(inp, cfg).data - full_attention(inp).data).max()
        max_dev = max(max_dev, dev)
    check("sparse/full attention equivalence", max_dev <= 1e-10, f"max deviation {max_dev:.2e}")

    # concentration measure is nonnegative and exact for uniform scores
    keys = rng.normal(size=(16, 4))
    measure = sparsity_measure_exact(np.zeros(4), keys)
    check("sparsity measure uniform case", abs(measure - math.log(16)) <= 1e-12)

    counts_ok = True
    for L in (1, 3, 8, 32):
        counts_ok = counts_ok and causal_mask(L).sum() == L * (L + 1) // 2
    check("causal mask counts", counts_ok)

    windows_ok = True
    for w in (5, 10, 15):
        for h in (1, 5, 10):
            ds = make_windows(np.arange(60.0), w, h)
            windows_ok = windows_ok and len(ds) == 60 - w - h + 1
    check("window arithmetic", windows_ok)

    log("selftest " + ("PASSED" if ok else "FAILED"))
    return ok
