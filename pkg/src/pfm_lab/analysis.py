"""Numerical checks of the mathematical properties behind PFMs.

* rectified responses of a kernel and a scaled copy are linearly
  independent functions exactly when the scale is negative;
* without the ReLU, a full-rank bank reproduces any 3x3 convolution;
* with the ReLU, a sign pair acts as a switch between two weights.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .dashes import generate, oracle_accuracy, oracle_score
from .filters import (FilterBank, Kernel3x3, make_edge_line_bank, make_translating_bank,
                      select_subset, spanned_dimensions)
from .layers import PFM, switch_eval
from .models import (TOY_VARIANTS, build_counting_graph, build_toy, position_weight_counts,
                     set_toy_oracle_weights, trainable_count)
from .rng import Xoshiro256

# millions of trainable parameters, 200-class head
REFERENCE_COUNTS_M = {2: 2.7, 4: 5.2, 8: 10.1, 9: 11.3, 13: 16.2, 18: 22.4, 0: 11.3}
TOY_COUNTS = {"pfm": 2, "cnn": 36, "pfm_norelu": 12}


class InconclusiveError(ValueError):
    """The sampled responses cannot decide linear (in)dependence."""


@dataclass
class IndependenceReport:
    a: float
    sample_count: int
    numeric_rank: int
    singular_values: tuple

    @property
    def verdict(self):
        return "independent" if self.numeric_rank == 2 else "dependent"


def _kernel_values(k):
    return np.asarray(getattr(k, "values", k), dtype=np.float64)


def relu_independence_check(w1, a, samples=1000, seed=0, patch=5, rtol=1e-9):
    """Sample ``(ReLU(w1 * x)[m, n], ReLU(a w1 * x)[m, n])`` over random patches.

    Inputs are uniform [-1, 1] patches; ``(m, n)`` is the center pixel. The
    numeric rank of the resulting ``samples x 2`` matrix (singular values
    above ``rtol`` times the largest) is 2 iff the two functions are
    independent on the sample.
    """
    w1 = _kernel_values(w1)
    if not np.any(w1):
        raise ValueError("w1 must be nonzero")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = Xoshiro256(seed)
    x = rng.uniform_array((samples, 1, patch, patch))
    kernels = np.stack([w1, a * w1])[:, None]
    c = patch // 2
    y = ag.conv2d(x, kernels, stride=1, padding=1).data[:, :, c, c]
    m = np.maximum(y, 0.0)
    if not m[:, 0].any() or not m[:, 1].any():
        raise InconclusiveError(f"a response column is identically zero (a={a})")
    sv = np.linalg.svd(m, compute_uv=False)
    rank = int(np.sum(sv > rtol * sv[0]))
    return IndependenceReport(float(a), samples, rank, tuple(sv))


def representability_check(bank, target):
    """Least-squares weights with ``sum_l w_l h_l ~= target``.

    Returns ``(residual, weights)``; the residual is the largest absolute
    elementwise error of the reconstructed kernel.
    """
    basis = bank.values.reshape(len(bank), 9).T
    t = _kernel_values(target).reshape(9)
    weights, *_ = np.linalg.lstsq(basis, t, rcond=None)
    residual = float(np.abs(basis @ weights - t).max())
    return residual, weights


def reparametrized_conv_error(bank, target, x):
    """Max deviation between a ReLU-free PFM whose 1x1 weights are solved
    from ``target[C, 3, 3]`` and a direct convolution with ``target``."""
    target = np.asarray(target, dtype=np.float64)
    c = target.shape[0]
    pfm = PFM(c, 1, bank, use_relu=False, batch_norm=False)
    weights = np.stack([representability_check(bank, target[ch])[1] for ch in range(c)])
    pfm.set_mixing(weights)
    got = pfm(ag.Tensor(x)).data
    want = ag.conv2d(x, target[None], stride=1, padding=1).data
    return float(np.abs(got - want).max())


def sign_pair_bank(w1, a):
    w1 = _kernel_values(w1)
    return FilterBank((Kernel3x3(w1, "derived", 1), Kernel3x3(a * w1, "derived", 2)))


def switch_property_check(w1, a, q11, q12, trials=1000, seed=0, size=6):
    """Max deviation between a ReLU PFM on ``{w1, a w1}`` with weights
    ``(q11, q12)`` and the piecewise switch formula, over random inputs."""
    if a >= 0:
        raise ValueError("a must be negative")
    pfm = PFM(1, 1, sign_pair_bank(w1, a), use_relu=True, batch_norm=False)
    pfm.set_mixing([q11, q12])
    x = Xoshiro256(seed).uniform_array((trials, 1, size, size))
    got = pfm(ag.Tensor(x)).data
    want = switch_eval(w1, a, q11, q12, x)
    return float(np.abs(got - want).max())


def numerical_gradient(fn, x, eps=1e-5):
    """Central finite differences of scalar ``fn()`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = fn()
        flat[i] = old - eps
        lo = fn()
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _check_toy_counts():
    counts = {v: trainable_count(build_toy(v)) for v in TOY_VARIANTS}
    return counts == TOY_COUNTS, f"{counts}"


def _check_toy_oracle():
    ds = generate(7, 1024)
    acc = oracle_accuracy(ds)
    additive = all(oracle_score(img) == 24 * (img.n_horizontal - img.n_vertical) for img in ds)
    X, _ = ds.to_arrays()
    scores = np.array([oracle_score(img) for img in ds])
    worst = 0.0
    for v in TOY_VARIANTS:
        model = set_toy_oracle_weights(build_toy(v))
        worst = max(worst, float(np.abs(model.logits(X)[:, 1] - scores).max()))
    ok = acc == 1.0 and additive and worst < 1e-9
    return ok, f"oracle accuracy {acc}, additive={additive}, toy-vs-oracle max dev {worst:.2e}"


def _check_representability():
    bank = make_edge_line_bank(9)
    rng = Xoshiro256(11)
    worst_res, worst_conv = 0.0, 0.0
    for _ in range(100):
        target = rng.uniform_array((2, 3, 3))
        x = rng.uniform_array((1, 2, 7, 7))
        worst_res = max(worst_res, representability_check(bank, target[0])[0])
        worst_conv = max(worst_conv, reparametrized_conv_error(bank, target, x))
    ok = worst_res < 1e-9 and worst_conv < 1e-10
    return ok, f"max kernel residual {worst_res:.2e}, max conv error {worst_conv:.2e}"


def _check_independence():
    rng = Xoshiro256(5)
    bad = []
    for trial in range(10):
        w1 = rng.uniform_array((3, 3))
        for a in (0.5, 1.0, 2.0, -0.5, -1.0, -2.0):
            rep = relu_independence_check(w1, a, samples=1000, seed=trial)
            if rep.numeric_rank != (2 if a < 0 else 1):
                bad.append((trial, a, rep.numeric_rank))
    return not bad, "ranks 1 for a>0 and 2 for a<0" if not bad else f"mismatches {bad}"


def _check_switch():
    rng = Xoshiro256(3)
    worst = 0.0
    for trial in range(5):
        w1 = rng.uniform_array((3, 3))
        a = -rng.uniform(0.1, 3.0)
        q11, q12 = rng.uniform(-3, 3), rng.uniform(-3, 3)
        worst = max(worst, switch_property_check(w1, a, q11, q12, trials=1000, seed=trial))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def _check_filter_bank():
    bank = make_edge_line_bank(18)
    mean_free = all(abs(k.values.sum()) < 1e-12 and abs(np.abs(k.values).sum() - 1) < 1e-12
                    for k in bank if k.tag in ("edge", "line"))
    paired = all(np.array_equal(bank.kernel(i + 9).values, -bank.kernel(i).values) for i in range(1, 10))
    nine = make_edge_line_bank(9)
    dims = (spanned_dimensions(nine), spanned_dimensions(FilterBank(nine.kernels[:8])),
            spanned_dimensions(select_subset(bank, "rank4")), spanned_dimensions(make_translating_bank()))
    ok = mean_free and paired and dims == (9, 8, 4, 9)
    return ok, f"mean-free/L1={mean_free}, sign pairs={paired}, spans={dims}"


def _check_counts():
    got = {}
    for size in (2, 4, 8, 9, 13, 18):
        got[size] = trainable_count(build_counting_graph("pfnet18", size, 200)) / 1e6
    got[0] = trainable_count(build_counting_graph("resnet18", 0, 200)) / 1e6
    worst = max(abs(got[k] - REFERENCE_COUNTS_M[k]) / REFERENCE_COUNTS_M[k] for k in got)
    same = (position_weight_counts(build_counting_graph("pfnet18", 9, 200))
            == position_weight_counts(build_counting_graph("resnet18", 0, 200)))
    detail = ", ".join(f"{k}:{v:.2f}M" for k, v in got.items())
    return worst < 0.05 and same, f"{detail}; worst rel. dev {worst:.3f}; 9-filter positions equal={same}"


CHECKS = (
    ("toy parameter counts", _check_toy_counts),
    ("toy oracle", _check_toy_oracle),
    ("representability without ReLU", _check_representability),
    ("ReLU independence", _check_independence),
    ("sign-pair switch", _check_switch),
    ("filter bank invariants", _check_filter_bank),
    ("PFNet18 parameter counts", _check_counts),
)


def run_checks():
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
