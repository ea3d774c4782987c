"""Projected stochastic gradient descent over a linear family, swept across
bias penalization coefficients.

For each coefficient omega the objective is either the convex blend
``(1 - omega) * L + omega * B`` or the Lagrangian ``L + omega * B``, where L
is the performance loss (cross-entropy against labels, or a distillation
divergence against the base model) and B a differentiable bias estimator.
Each omega warm-starts from the best stored snapshot of the previous one,
re-scored under the new coefficient.  Per-group bias batches are drawn with
replacement so the estimator sees balanced groups regardless of prevalence,
and every step projects theta back into its box by coordinate clamping.

Base scores and encoder columns are computed once, outside this module; the
inner loop only ever indexes the cached arrays of the family.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._util import PROB_EPS, fmt_float, sigmoid
from .estimators import BiasEstimatorSpec, EstimatorBatch, bias_value_and_grad
from .linear_family import LinearFamily

_LOSSES = ("cross-entropy", "distill")
_FORMS = ("penalized", "lagrangian")


@dataclass
class SweepConfig:
    omegas: np.ndarray = None      # nondecreasing; default j/20 for j=0..20
    learning_rate: float = 0.01
    n_epochs: int = 20
    n_batches: int = 10
    n_perf: int = 1024
    n_bias: int = 1024
    objective: str = "penalized"
    loss: str = "cross-entropy"
    seed: int = 0

    def __post_init__(self):
        if self.omegas is None:
            self.omegas = default_omegas()
        self.omegas = np.asarray(self.omegas, dtype=float).ravel()
        if np.any(self.omegas < 0) or np.any(np.diff(self.omegas) < 0):
            raise ValueError("omegas must be nonnegative and nondecreasing")
        if self.learning_rate <= 0 or self.n_perf < 1 or self.n_bias < 1:
            raise ValueError("rates and batch sizes must be positive")
        if self.objective not in _FORMS:
            raise ValueError(f"unknown objective form {self.objective!r}")
        if self.loss not in _LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


def default_omegas(scale: float = 1.0, count: int = 21) -> np.ndarray:
    """The ladder (scale/20) * j for j = 0..count-1."""
    return scale / 20.0 * np.arange(count)


def loss_bias_ratio_scale(family, spec, labels, groups) -> float:
    """Base-model cross-entropy divided by its bias estimate; the customary
    scale for the omega ladder when the two terms live on different orders."""
    theta0 = family.zero_theta()
    loss = _full_loss(family, theta0, labels, "cross-entropy")
    batch = EstimatorBatch.full(groups)
    bias, _ = bias_value_and_grad(spec, family, theta0, batch, need_grad=False)
    return float(loss / max(bias, 1e-12))


def distill_loss(p, q) -> float:
    """Bernoulli Kullback-Leibler divergence of p from q, clamped inside
    [1e-7, 1 - 1e-7]; zero exactly when p equals q and nonnegative always."""
    p = np.clip(np.asarray(p, dtype=float), 1e-7, 1.0 - 1e-7)
    q = np.clip(np.asarray(q, dtype=float), 1e-7, 1.0 - 1e-7)
    return float(np.mean(p * (np.log(p) - np.log(q)) + (1 - p) * (np.log1p(-p) - np.log1p(-q))))


def _loss_weight(objective: str, omega: float) -> float:
    return 1.0 - omega if objective == "penalized" else 1.0


def _loss_and_grad(family, theta, rows, labels, loss_kind):
    """Performance loss and gradient on a row batch.

    cross-entropy: mean CE of sigmoid(f_theta) against labels; gradient is
    the mean of (sigma(f) - y) * (-w).
    distill: mean Bernoulli KL of sigma(f_theta) from sigma(f_*); gradient
    follows the same chain through the student probabilities.
    """
    W = family.encoder_matrix[rows]
    raw = family.base_scores[rows] - W @ theta
    p = sigmoid(raw)
    if loss_kind == "cross-entropy":
        y = labels[rows]
        pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
        value = float(-np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc)))
        grad = ((p - y) @ (-W)) / rows.size
        return value, grad
    teacher = sigmoid(family.base_scores[rows])
    pc = np.clip(p, 1e-7, 1.0 - 1e-7)
    qc = np.clip(teacher, 1e-7, 1.0 - 1e-7)
    value = float(np.mean(pc * (np.log(pc) - np.log(qc)) + (1 - pc) * (np.log1p(-pc) - np.log1p(-qc))))
    dldp = np.log(pc) - np.log1p(-pc) - (np.log(qc) - np.log1p(-qc))
    grad = ((dldp * p * (1 - p)) @ (-W)) / rows.size
    return value, grad


def _full_loss(family, theta, labels, loss_kind) -> float:
    rows = np.arange(family.n_records)
    value, _ = _loss_and_grad(family, theta, rows, labels, loss_kind)
    return value


def penalized_objective(
    family: LinearFamily,
    spec: BiasEstimatorSpec,
    theta,
    omega: float,
    perf_batch,
    bias_batch: EstimatorBatch,
    labels=None,
    objective: str = "penalized",
    loss: str = "cross-entropy",
    rng=None,
):
    """Objective value and analytic gradient on explicit batches.

    Value is ``weight_L * L + omega * B`` with ``weight_L`` set by the
    objective form.
    """
    theta = np.asarray(theta, dtype=float)
    perf_batch = np.asarray(perf_batch, dtype=np.intp).ravel()
    if perf_batch.size == 0:
        raise ValueError("empty performance batch")
    if loss == "cross-entropy" and labels is None:
        raise ValueError("cross-entropy loss needs labels")
    l_value, l_grad = _loss_and_grad(family, theta, perf_batch, labels, loss)
    b_value, b_grad = bias_value_and_grad(spec, family, theta, bias_batch, rng=rng)
    wl = _loss_weight(objective, omega)
    return wl * l_value + omega * b_value, wl * l_grad + omega * b_grad


@dataclass
class TraceRow:
    omega: float
    epoch: int
    theta: np.ndarray
    train_loss: float
    train_bias: float


@dataclass
class MitigationTrace:
    rows: list = field(default_factory=list)

    def append(self, omega, epoch, theta, train_loss, train_bias):
        self.rows.append(TraceRow(float(omega), int(epoch), np.array(theta), train_loss, train_bias))

    def to_csv(self, path):
        if self.rows:
            width = self.rows[0].theta.size
        else:
            width = 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["omega", "epoch"] + [f"theta_{j}" for j in range(width)] + ["train_loss", "train_bias_estimate"]
            )
            for row in self.rows:
                writer.writerow(
                    [fmt_float(row.omega), row.epoch]
                    + [fmt_float(v) for v in row.theta]
                    + [fmt_float(row.train_loss), fmt_float(row.train_bias)]
                )


def sgd_sweep(
    family: LinearFamily,
    spec: BiasEstimatorSpec,
    config: SweepConfig,
    labels,
    groups,
    theta_mask=None,
):
    """Run the omega sweep; returns (candidates, trace).

    ``candidates`` holds one ``(omega, theta)`` pair per coefficient: the
    stored snapshot with the lowest full-data objective under that omega.
    ``trace`` records every per-epoch snapshot with its full-data loss and
    bias estimate.  ``theta_mask`` freezes coordinates where it is False.
    """
    labels = np.asarray(labels, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    if labels.size != family.n_records or groups.size != family.n_records:
        raise ValueError("labels/groups must align with the family rows")
    rows0 = np.flatnonzero(groups == 0)
    rows1 = np.flatnonzero(groups == 1)
    if rows0.size == 0 or rows1.size == 0:
        raise ValueError("both groups need at least one record")
    if theta_mask is not None:
        theta_mask = np.asarray(theta_mask, dtype=bool).ravel()
        if theta_mask.size != family.n_params:
            raise ValueError("theta mask length mismatch")

    rng = np.random.default_rng(config.seed)
    n = family.n_records
    full_batch = EstimatorBatch(rows0, rows1, np.arange(n))

    def full_scores(theta):
        loss = _full_loss(family, theta, labels, config.loss)
        bias, _ = bias_value_and_grad(spec, family, theta, full_batch, need_grad=False)
        return loss, bias

    trace = MitigationTrace()
    candidates = []
    # snapshots of the previous omega: (theta, full loss, full bias)
    previous = []
    theta = family.clip_theta(family.zero_theta())
    loss0, bias0 = full_scores(theta)
    start_snapshot = (theta.copy(), loss0, bias0)

    for omega in config.omegas:
        pool = previous if previous else [start_snapshot]
        scores = [_loss_weight(config.objective, omega) * l + omega * b for (_, l, b) in pool]
        theta = pool[int(np.argmin(scores))][0].copy()
        current = []
        for epoch in range(config.n_epochs):
            for _ in range(config.n_batches):
                perf = rng.choice(n, size=config.n_perf, replace=True)
                bias_batch = EstimatorBatch(
                    rng.choice(rows0, size=config.n_bias, replace=True),
                    rng.choice(rows1, size=config.n_bias, replace=True),
                    rng.choice(n, size=config.n_bias, replace=True),
                )
                _, grad = penalized_objective(
                    family,
                    spec,
                    theta,
                    omega,
                    perf,
                    bias_batch,
                    labels=labels,
                    objective=config.objective,
                    loss=config.loss,
                    rng=rng,
                )
                if theta_mask is not None:
                    grad = np.where(theta_mask, grad, 0.0)
                theta = family.clip_theta(theta - config.learning_rate * grad)
            loss, bias = full_scores(theta)
            trace.append(omega, epoch, theta, loss, bias)
            current.append((theta.copy(), loss, bias))
        if current:
            wl = _loss_weight(config.objective, omega)
            best = int(np.argmin([wl * l + omega * b for (_, l, b) in current]))
            candidates.append((float(omega), current[best][0].copy()))
            previous = current
        else:
            candidates.append((float(omega), theta.copy()))
    return candidates, trace
