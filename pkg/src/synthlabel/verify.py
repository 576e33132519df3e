"""Numerical verification: gradient checks and loss oracles in one sweep.

Every differentiable op is checked against central differences, and the
contrastive loss is additionally compared with a brute-force loop
implementation plus one closed-form batch.  The CLI ``grad-check``
subcommand prints these results and fails on any red line; the test suite
asserts the same sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .contrastive import ContrastiveBatch, nt_xent_loss, nt_xent_value
from .seeds import rng_from
from .tensor import Tensor

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-10
CLOSED_FORM_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: max err {self.error:.3e} (tol {self.tolerance:.0e})"


def _weighted(fn: Callable[[Tensor], Tensor], w: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Reduce an op to a scalar with fixed weights, so every output element
    contributes its own term to the checked gradient."""
    return lambda t: T.sum_all(T.mul(fn(t), Tensor(w)))


def _away_from_kink(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with |x| >= 0.2: central differences step 1e-5, so piecewise
    ops need points safely off their breakpoints."""
    return rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _distinct_grid(rng: np.random.Generator, shape) -> np.ndarray:
    """All entries >= 0.05 apart: max_pool2d argmaxes must not flip under
    the finite-difference perturbation."""
    flat = rng.permutation(int(np.prod(shape))).astype(np.float64) * 0.05
    return flat.reshape(shape)


def op_grad_checks(seed: int = 0) -> list[CheckResult]:
    """grad_check every differentiable op; one entry per (op, argument)."""
    rng = rng_from(seed, "verify-ops")
    checks: list[tuple[str, Callable[[Tensor], Tensor], np.ndarray]] = []

    a34 = rng.standard_normal((3, 4))
    b34 = rng.standard_normal((3, 4))
    w34 = rng.standard_normal((3, 4))
    checks.append(("add (wrt a)", _weighted(lambda t: T.add(t, Tensor(b34)), w34), a34))
    checks.append(("add (wrt b)", _weighted(lambda t: T.add(Tensor(a34), t), w34), b34))
    checks.append(("mul (wrt a)", _weighted(lambda t: T.mul(t, Tensor(b34)), w34), a34))
    checks.append(("mul (wrt b)", _weighted(lambda t: T.mul(Tensor(a34), t), w34), b34))
    checks.append(("scale", _weighted(lambda t: T.scale(t, -1.7), w34), a34))
    checks.append(("shift", _weighted(lambda t: T.shift(t, 0.37), w34), a34))
    checks.append(
        ("reshape", _weighted(lambda t: T.reshape(t, (12,)), rng.standard_normal(12)), a34)
    )
    checks.append(
        ("transpose", _weighted(T.transpose, rng.standard_normal((4, 3))), a34)
    )
    checks.append(("sum_all", T.sum_all, a34))
    checks.append(("mean_reduce", T.mean_reduce, a34))

    kinky = _away_from_kink(rng, (3, 4))
    checks.append(("relu", _weighted(T.relu, w34), kinky))
    checks.append(("leaky_relu", _weighted(lambda t: T.leaky_relu(t, 0.1), w34), kinky))

    a65 = rng.standard_normal((6, 5))
    checks.append(("batch_center", _weighted(T.batch_center, rng.standard_normal((6, 5))), a65))

    x_sp = rng.standard_normal((2, 3, 4, 4))
    checks.append(("mean_spatial", _weighted(T.mean_spatial, rng.standard_normal((2, 3))), x_sp))

    ma = rng.standard_normal((3, 4))
    mb = rng.standard_normal((4, 5))
    w35 = rng.standard_normal((3, 5))
    checks.append(("matmul (wrt a)", _weighted(lambda t: T.matmul(t, Tensor(mb)), w35), ma))
    checks.append(("matmul (wrt b)", _weighted(lambda t: T.matmul(Tensor(ma), t), w35), mb))

    x46 = rng.standard_normal((4, 6))
    b6 = rng.standard_normal(6)
    w46 = rng.standard_normal((4, 6))
    checks.append(("add_bias (wrt x)", _weighted(lambda t: T.add_bias(t, Tensor(b6)), w46), x46))
    checks.append(("add_bias (wrt b)", _weighted(lambda t: T.add_bias(Tensor(x46), t), w46), b6))

    xc = rng.standard_normal((2, 3, 8, 8))
    kc = rng.standard_normal((4, 3, 3, 3)) * 0.5
    for stride, out_hw in ((1, 6), (2, 3)):
        wz = rng.standard_normal((2, 4, out_hw, out_hw))
        checks.append(
            (
                f"conv2d stride={stride} (wrt x)",
                _weighted(lambda t, s=stride: T.conv2d(t, Tensor(kc), stride=s), wz),
                xc,
            )
        )
        checks.append(
            (
                f"conv2d stride={stride} (wrt kernel)",
                _weighted(lambda t, s=stride: T.conv2d(Tensor(xc), t, stride=s), wz),
                kc,
            )
        )

    xp = _distinct_grid(rng, (2, 3, 6, 6))
    checks.append(
        ("max_pool2d", _weighted(lambda t: T.max_pool2d(t, 2), rng.standard_normal((2, 3, 3, 3))), xp)
    )

    xb = rng.standard_normal((4, 2, 3, 3))
    gamma = rng.uniform(0.5, 1.5, size=2)
    beta = rng.standard_normal(2)
    wb = rng.standard_normal((4, 2, 3, 3))
    frozen = [rng.standard_normal(2) * 0.1, rng.uniform(0.5, 1.5, size=2)]
    for mode, training in (("train", True), ("eval", False)):
        # fresh running stats per call: the train path writes them in place

        def bn_x(t: Tensor, tr=training) -> Tensor:
            return T.batch_norm2d(
                t, Tensor(gamma), Tensor(beta),
                [frozen[0].copy(), frozen[1].copy()], training=tr,
            )

        def bn_gamma(t: Tensor, tr=training) -> Tensor:
            return T.batch_norm2d(
                Tensor(xb), t, Tensor(beta),
                [frozen[0].copy(), frozen[1].copy()], training=tr,
            )

        def bn_beta(t: Tensor, tr=training) -> Tensor:
            return T.batch_norm2d(
                Tensor(xb), Tensor(gamma), t,
                [frozen[0].copy(), frozen[1].copy()], training=tr,
            )

        checks.append((f"batch_norm2d {mode} (wrt x)", _weighted(bn_x, wb), xb))
        checks.append((f"batch_norm2d {mode} (wrt gamma)", _weighted(bn_gamma, wb), gamma))
        checks.append((f"batch_norm2d {mode} (wrt beta)", _weighted(bn_beta, wb), beta))

    logits = rng.standard_normal((5, 3))
    labels = rng.integers(0, 3, size=5)
    checks.append(
        ("softmax_cross_entropy", lambda t: T.softmax_cross_entropy(t, labels), logits)
    )

    z46 = rng.standard_normal((4, 6))
    checks.append(
        ("l2_normalize_rows", _weighted(T.l2_normalize_rows, rng.standard_normal((4, 6))), z46)
    )

    z_nt = rng.standard_normal((8, 8))  # N=4 pairs, dim 8
    checks.append(
        (
            "nt_xent_loss (N=4, dim 8, tau=0.5)",
            lambda t: nt_xent_loss(ContrastiveBatch(z=t, n_pairs=4), 0.5),
            z_nt,
        )
    )

    return [
        CheckResult(name=name, error=T.grad_check(fn, point), tolerance=GRAD_TOL)
        for name, fn, point in checks
    ]


def brute_force_nt_xent(z: np.ndarray, temperature: float) -> float:
    """Textbook double loop: cosine similarities, explicit softmax per row,
    partner of row i is i XOR 1 (views of one sample sit adjacent)."""
    n2 = z.shape[0]
    norms = [math.sqrt(float(row @ row)) for row in z]
    total = 0.0
    for i in range(n2):
        sims = [
            float(z[i] @ z[k]) / (norms[i] * norms[k]) / temperature
            for k in range(n2)
        ]
        denom = sum(math.exp(sims[k]) for k in range(n2) if k != i)
        total += -math.log(math.exp(sims[i ^ 1]) / denom)
    return total / n2


def loss_oracle_checks(seed: int = 0, n_batches: int = 100) -> list[CheckResult]:
    """nt_xent_loss vs the brute-force loop on random batches, plus the
    closed-form batch: orthonormal rows make every similarity equal, so each
    row's loss is log(2N - 1) regardless of temperature."""
    rng = rng_from(seed, "verify-oracle")
    worst = 0.0
    for _ in range(n_batches):
        n_pairs = int(rng.integers(2, 9))
        dim = int(rng.integers(3, 17))
        temperature = float(rng.uniform(0.1, 2.0))
        z = rng.standard_normal((2 * n_pairs, dim))
        got = nt_xent_value(z, temperature)
        want = brute_force_nt_xent(z, temperature)
        worst = max(worst, abs(got - want))
    results = [
        CheckResult(
            name=f"nt_xent_loss vs brute force ({n_batches} random batches)",
            error=worst,
            tolerance=ORACLE_TOL,
        )
    ]

    eye = np.eye(4)  # N=2 pairs, orthonormal: loss must be ln 3 exactly
    err = abs(nt_xent_value(eye, 0.5) - math.log(3.0))
    results.append(
        CheckResult(
            name="nt_xent_loss equal-similarity batch = ln 3",
            error=err,
            tolerance=CLOSED_FORM_TOL,
        )
    )
    return results


def run_all(seed: int = 0) -> list[CheckResult]:
    return op_grad_checks(seed) + loss_oracle_checks(seed)
