"""Smooth relaxations of the Heaviside step and the relaxed empirical CDF.

A relaxation family r_s is a nondecreasing [0, 1]-valued surrogate for the
indicator 1{z > 0} with Lipschitz constant growing like the scale s.  The
relaxed CDF ``1 - mean_i r_s(z_i - t)`` is Lipschitz in t and differentiable
through the scores, which is what makes threshold-averaged bias metrics
amenable to gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import sigmoid

_KINDS = ("ramp", "logistic", "shifted-logistic")


@dataclass(frozen=True)
class RelaxationFamily:
    """Step surrogate r_s.

    ramp              clamp(s*z, 0, 1); exact Lipschitz constant s, r_s(0)=0.
    logistic          sigmoid(s*z); infinitely smooth, r_s(0)=1/2.
    shifted-logistic  sigmoid(s*(z - 1/sqrt(s))); smooth with r_s(0) -> 0.
    """

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown relaxation kind {self.kind!r}; expected one of {_KINDS}")
        if not self.scale > 0:
            raise ValueError("relaxation scale must be positive")

    @property
    def smooth(self) -> bool:
        return self.kind != "ramp"

    def r(self, z):
        z = np.asarray(z, dtype=float)
        s = self.scale
        if self.kind == "ramp":
            return np.clip(s * z, 0.0, 1.0)
        if self.kind == "logistic":
            return sigmoid(s * z)
        return sigmoid(s * z - np.sqrt(s))

    def r_prime(self, z):
        z = np.asarray(z, dtype=float)
        s = self.scale
        if self.kind == "ramp":
            return np.where((s * z > 0.0) & (s * z < 1.0), s, 0.0)
        if self.kind == "logistic":
            v = sigmoid(s * z)
        else:
            v = sigmoid(s * z - np.sqrt(s))
        return s * v * (1.0 - v)

    def r_and_prime(self, z):
        """Value and derivative in one pass (the derivative reuses the value)."""
        r = self.r(z)
        s = self.scale
        if self.kind == "ramp":
            return r, np.where((r > 0.0) & (r < 1.0), s, 0.0)
        return r, s * r * (1.0 - r)


def ramp(scale: float) -> RelaxationFamily:
    return RelaxationFamily("ramp", scale)


def logistic(scale: float) -> RelaxationFamily:
    return RelaxationFamily("logistic", scale)


def shifted_logistic(scale: float) -> RelaxationFamily:
    return RelaxationFamily("shifted-logistic", scale)


def relaxed_cdf(scores, t, family: RelaxationFamily):
    """Relaxed CDF ``1 - mean_i r_s(z_i - t)`` at thresholds ``t``.

    Nondecreasing and Lipschitz in ``t`` with the family's constant; converges
    to the empirical CDF as the scale grows (at atoms the ramp converges to
    F(t) while the plain logistic converges to F(t) - P(Z=t)/2).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("empty scores")
    t = np.asarray(t, dtype=float)
    vals = 1.0 - family.r(scores[None, :] - np.atleast_1d(t)[:, None]).mean(axis=1)
    return float(vals[0]) if t.ndim == 0 else vals
