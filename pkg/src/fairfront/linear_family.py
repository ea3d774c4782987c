"""Linear post-processing families around a trained base model.

A family member is ``f(x; theta) = f_*(x) - theta . w(x)`` where the encoder
row ``w(x)`` has a leading constant 1.  The family is linear in theta, so
gradients exist even when the base model itself is a step function (e.g. a
tree ensemble).  For classification the raw score is pushed through the
logistic link before thresholding, and the chain rule picks up the usual
``u (1 - u)`` factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import sigmoid

DEFAULT_BOX_HALF_WIDTH = 10.0


@dataclass
class LinearFamily:
    base_scores: np.ndarray       # (n,) raw score f_*(x) per record
    encoder_matrix: np.ndarray    # (n, m+1); column 0 identically 1
    theta_box: np.ndarray = None  # (m+1, 2) closed coordinate bounds
    link: str = "logistic"        # logistic -> probabilities; identity -> raw

    def __post_init__(self):
        self.base_scores = np.asarray(self.base_scores, dtype=float).ravel()
        self.encoder_matrix = np.asarray(self.encoder_matrix, dtype=float)
        if self.encoder_matrix.ndim != 2:
            raise ValueError("encoder matrix must be 2-D")
        if self.encoder_matrix.shape[0] != self.base_scores.size:
            raise ValueError("encoder rows must match record count")
        if not np.allclose(self.encoder_matrix[:, 0], 1.0):
            raise ValueError("first encoder column must be identically 1")
        if not np.all(np.isfinite(self.encoder_matrix)):
            raise ValueError("non-finite encoder value")
        if self.link not in ("identity", "logistic"):
            raise ValueError(f"unknown link {self.link!r}")
        if self.theta_box is None:
            b = DEFAULT_BOX_HALF_WIDTH
            self.theta_box = np.column_stack(
                (np.full(self.n_params, -b), np.full(self.n_params, b))
            )
        self.theta_box = np.asarray(self.theta_box, dtype=float)
        if self.theta_box.shape != (self.n_params, 2):
            raise ValueError("theta box must be (m+1, 2)")
        if np.any(self.theta_box[:, 0] > self.theta_box[:, 1]):
            raise ValueError("empty theta box interval")

    @property
    def n_params(self) -> int:
        return self.encoder_matrix.shape[1]

    @property
    def n_records(self) -> int:
        return self.base_scores.size

    def zero_theta(self) -> np.ndarray:
        return np.zeros(self.n_params)

    def clip_theta(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.theta_box[:, 0], self.theta_box[:, 1])

    def raw_scores(self, theta, rows=None) -> np.ndarray:
        """Raw family score ``f_*(x) - theta . w(x)`` on the selected rows."""
        theta = np.asarray(theta, dtype=float)
        if rows is None:
            return self.base_scores - self.encoder_matrix @ theta
        return self.base_scores[rows] - self.encoder_matrix[rows] @ theta

    def scores(self, theta, rows=None) -> np.ndarray:
        """Link-space score: probability for logistic, raw otherwise."""
        raw = self.raw_scores(theta, rows)
        return sigmoid(raw) if self.link == "logistic" else raw

    def scores_and_grad(self, theta, rows=None):
        """Link-space scores and their Jacobian versus theta.

        Returns ``(u, du)`` with ``u`` of shape (k,) and ``du`` of shape
        (k, m+1) holding d u_i / d theta_j.
        """
        W = self.encoder_matrix if rows is None else self.encoder_matrix[rows]
        raw = (self.base_scores if rows is None else self.base_scores[rows]) - W @ np.asarray(
            theta, dtype=float
        )
        if self.link == "logistic":
            u = sigmoid(raw)
            du = -W * (u * (1.0 - u))[:, None]
        else:
            u = raw
            du = -W
        return u, du
