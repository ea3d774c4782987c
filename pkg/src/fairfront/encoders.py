"""Encoder construction for post-processing families.

Encoders are fixed, demographically blind columns w_j(x) whose linear
combination corrects a trained model.  Three constructions are provided:

* additive polynomial corrections per feature (monomial or Legendre basis),
* principal components of the per-tree outputs of a boosted ensemble,
* exact marginal Shapley attributions of the base model.

Every construction freezes enough state (affine ranges, PCA loadings,
Shapley background) to re-evaluate the same columns on new records, and the
non-constant columns carry a stored unit-variance scale so optimization is
well conditioned while coefficients remain reportable in original units.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .gbdt import Ensemble, per_tree_outputs
from .linear_family import LinearFamily

PCA_ROW_CAP = 50_000
EXACT_SHAPLEY_MAX_FEATURES = 16
DEFAULT_BACKGROUND_SIZE = 256
_ZERO_VAR = 1e-15


@dataclass
class ExplanationSet:
    """Per-record, per-feature attributions plus the reference expectation."""

    values: np.ndarray   # (records, features)
    reference: float

    def totals(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass
class EncoderMatrix:
    """Named encoder columns with column 0 identically one.

    ``centers`` are construction-time centering constants (zero where the
    construction does not center); ``scales`` are the stored standard
    deviations used to standardize the optimization columns.  ``provenance``
    carries everything needed to rebuild the columns on new records.
    """

    columns: np.ndarray
    names: list
    provenance: dict
    centers: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=float)
        if self.columns.ndim != 2:
            raise ValueError("encoder columns must form a matrix")
        if not np.allclose(self.columns[:, 0], 1.0):
            raise ValueError("column 0 must be identically 1")
        if not np.all(np.isfinite(self.columns)):
            raise ValueError("non-finite encoder column")
        if len(self.names) != self.columns.shape[1]:
            raise ValueError("one name per column required")

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]

    def standardized_columns(self) -> np.ndarray:
        return self.columns / self.scales[None, :]

    def original_theta(self, theta) -> np.ndarray:
        """Map a parameter fit on standardized columns to original units."""
        return np.asarray(theta, dtype=float) / self.scales

    def to_linear_family(self, base_scores, link="logistic", theta_box=None) -> LinearFamily:
        return LinearFamily(base_scores, self.standardized_columns(), theta_box, link)

    def reevaluate(self, X, model=None, predict=None) -> "EncoderMatrix":
        """Rebuild the same columns on new records from the frozen state."""
        kind = self.provenance["kind"]
        if kind == "additive":
            return _additive_from_state(np.asarray(X, dtype=float), self.provenance, self)
        if kind == "tree-pca":
            if model is None:
                raise ValueError("tree-pca re-evaluation needs the ensemble")
            return _tree_pca_from_state(model, np.asarray(X, dtype=float), self.provenance, self)
        if kind == "shapley":
            fn = predict if predict is not None else (model.predict_raw if model else None)
            if fn is None:
                raise ValueError("shapley re-evaluation needs the model")
            return _shapley_from_state(fn, np.asarray(X, dtype=float), self.provenance, self)
        if kind == "combined":
            return _combined_from_state(
                np.asarray(X, dtype=float), self.provenance, self, model=model, predict=predict
            )
        raise ValueError(f"unknown provenance kind {kind!r}")

    # --- persistence --------------------------------------------------

    def save(self, csv_path, sidecar_path):
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.names)
            for row in self.columns:
                writer.writerow([repr(float(v)) for v in row])
        meta = {
            "names": list(self.names),
            "centers": self.centers.tolist(),
            "scales": self.scales.tolist(),
            "provenance": _jsonify(self.provenance),
        }
        with open(sidecar_path, "w") as fh:
            json.dump(meta, fh)

    @classmethod
    def load(cls, csv_path, sidecar_path) -> "EncoderMatrix":
        with open(sidecar_path) as fh:
            meta = json.load(fh)
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        return cls(
            np.asarray(rows, dtype=float),
            names,
            _unjsonify(meta["provenance"]),
            np.asarray(meta["centers"], dtype=float),
            np.asarray(meta["scales"], dtype=float),
        )


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _unjsonify(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.asarray(obj["__array__"], dtype=float)
        return {k: _unjsonify(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjsonify(v) for v in obj]
    return obj


def _finish(columns, names, provenance, centers) -> EncoderMatrix:
    columns = np.column_stack(columns)
    scales = columns.std(axis=0)
    scales = np.where(scales > _ZERO_VAR, scales, 1.0)
    scales[0] = 1.0
    return EncoderMatrix(columns, names, provenance, np.asarray(centers, dtype=float), scales)


# --------------------------------------------------------------------------
# additive polynomial corrections
# --------------------------------------------------------------------------


def _legendre_eval(t, degree):
    coeffs = np.zeros(degree + 1)
    coeffs[degree] = 1.0
    return npleg.legval(t, coeffs)


def additive_encoders(X, degree: int, basis: str = "legendre", feature_names=None) -> EncoderMatrix:
    """Per-feature polynomial columns {1} U {q_j(x_i)} for j = 1..degree.

    The Legendre basis is evaluated after mapping each feature affinely from
    its observed [min, max] onto [-1, 1]; zero-range features are dropped
    under that basis (their columns would be constant).
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if basis not in ("legendre", "monomial"):
        raise ValueError(f"unknown basis {basis!r}")
    X = np.asarray(X, dtype=float)
    n_features = X.shape[1]
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(n_features)]
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    columns = [np.ones(X.shape[0])]
    names = ["const"]
    kept = []
    for i in range(n_features):
        if basis == "legendre" and hi[i] - lo[i] <= 0:
            continue
        kept.append(i)
        for j in range(1, degree + 1):
            if basis == "monomial":
                col = X[:, i] ** j
            else:
                t = 2.0 * (X[:, i] - lo[i]) / (hi[i] - lo[i]) - 1.0
                col = _legendre_eval(t, j)
            columns.append(col)
            names.append(f"{basis}:{feature_names[i]}:{j}")
    provenance = {
        "kind": "additive",
        "basis": basis,
        "degree": degree,
        "kept_features": np.asarray(kept, dtype=float),
        "lo": lo,
        "hi": hi,
    }
    return _finish(columns, names, provenance, np.zeros(len(columns)))


def _additive_from_state(X, state, template: EncoderMatrix) -> EncoderMatrix:
    degree = int(state["degree"])
    basis = state["basis"]
    lo, hi = state["lo"], state["hi"]
    columns = [np.ones(X.shape[0])]
    for i in (int(k) for k in state["kept_features"]):
        for j in range(1, degree + 1):
            if basis == "monomial":
                columns.append(X[:, i] ** j)
            else:
                t = 2.0 * (X[:, i] - lo[i]) / (hi[i] - lo[i]) - 1.0
                columns.append(_legendre_eval(t, j))
    return EncoderMatrix(
        np.column_stack(columns), template.names, state, template.centers, template.scales
    )


# --------------------------------------------------------------------------
# tree rebalancing through principal components
# --------------------------------------------------------------------------


def tree_pca_encoders(ensemble: Ensemble, X, r: int, row_cap: int = PCA_ROW_CAP) -> EncoderMatrix:
    """Top-r principal components of the per-tree output matrix.

    Zero-variance trees are excluded before the eigendecomposition.  Each
    loading vector is sign-fixed so its largest-magnitude coordinate is
    positive; loadings and column means are stored so the components can be
    reproduced on new records exactly.  Rows beyond ``row_cap`` are thinned
    on an evenly spaced index grid before the covariance is formed.
    """
    if ensemble.n_trees < 1:
        raise ValueError("ensemble must contain at least one tree")
    if r > ensemble.n_trees:
        raise ValueError(f"requested {r} components from {ensemble.n_trees} trees")
    X = np.asarray(X, dtype=float)
    if r > X.shape[0]:
        raise ValueError("more components than records")
    outputs = per_tree_outputs(ensemble, X)
    variances = outputs.var(axis=0)
    kept = np.flatnonzero(variances > _ZERO_VAR)
    if r > kept.size:
        raise ValueError(f"only {kept.size} trees have varying output, cannot take {r} components")
    sub = outputs
    if X.shape[0] > row_cap:
        sub = outputs[np.linspace(0, X.shape[0] - 1, row_cap).astype(np.intp)]
    sub = sub[:, kept]
    means = sub.mean(axis=0)
    centered = sub - means
    cov = centered.T @ centered / max(sub.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:r]
    loadings = eigvecs[:, order]
    flip = loadings[np.argmax(np.abs(loadings), axis=0), np.arange(r)] < 0
    loadings[:, flip] *= -1.0
    components = (outputs[:, kept] - means) @ loadings
    columns = [np.ones(X.shape[0])] + [components[:, k] for k in range(r)]
    names = ["const"] + [f"tree-pc{k + 1}" for k in range(r)]
    provenance = {
        "kind": "tree-pca",
        "kept_trees": kept.astype(float),
        "tree_means": means,
        "loadings": loadings,
        "eigenvalues": eigvals[order],
    }
    # centering happens in tree-output space (tree_means), not per column
    return _finish(columns, names, provenance, np.zeros(len(columns)))


def _tree_pca_from_state(ensemble, X, state, template: EncoderMatrix) -> EncoderMatrix:
    kept = state["kept_trees"].astype(np.intp)
    outputs = per_tree_outputs(ensemble, X)
    components = (outputs[:, kept] - state["tree_means"]) @ state["loadings"]
    columns = np.column_stack([np.ones(X.shape[0]), components])
    return EncoderMatrix(columns, template.names, state, template.centers, template.scales)


# --------------------------------------------------------------------------
# marginal Shapley rebalancing
# --------------------------------------------------------------------------


def exact_marginal_shapley(predict, X, background, chunk: int = 64) -> ExplanationSet:
    """Exact Shapley attributions of the marginal-expectation game.

    The game value of a coalition S at record x is the background average of
    the model with the S-features pinned to x.  All 2^n coalitions are
    enumerated, so the feature count is capped at 16.
    """
    X = np.asarray(X, dtype=float)
    background = np.asarray(background, dtype=float)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background must be a nonempty record matrix")
    n = X.shape[1]
    if n > EXACT_SHAPLEY_MAX_FEATURES:
        raise ValueError(
            f"{n} features exceed the exact enumeration cap of "
            f"{EXACT_SHAPLEY_MAX_FEATURES}; use sampled_marginal_shapley"
        )
    n_subsets = 1 << n
    reference = float(np.mean(predict(background)))
    weights = np.array([math.factorial(k) * math.factorial(n - 1 - k) / math.factorial(n) for k in range(n)])
    phi = np.zeros((X.shape[0], n))
    for start in range(0, X.shape[0], chunk):
        rows = slice(start, min(start + chunk, X.shape[0]))
        Xc = X[rows]
        c = Xc.shape[0]
        v = np.empty((c, n_subsets))
        for mask in range(n_subsets):
            if mask == 0:
                v[:, 0] = reference
                continue
            s_idx = [i for i in range(n) if mask >> i & 1]
            hybrid = np.broadcast_to(background, (c,) + background.shape).copy()
            hybrid[:, :, s_idx] = Xc[:, None, s_idx]
            v[:, mask] = predict(hybrid.reshape(-1, n)).reshape(c, -1).mean(axis=1)
        for i in range(n):
            for mask in range(n_subsets):
                if mask >> i & 1:
                    continue
                size = bin(mask).count("1")
                phi[rows, i] += weights[size] * (v[:, mask | (1 << i)] - v[:, mask])
    return ExplanationSet(phi, reference)


def sampled_marginal_shapley(
    predict, X, background, n_permutations: int = 128, seed: int = 0
) -> ExplanationSet:
    """Monte Carlo permutation estimate of the marginal Shapley values."""
    X = np.asarray(X, dtype=float)
    background = np.asarray(background, dtype=float)
    n = X.shape[1]
    rng = np.random.default_rng(seed)
    reference = float(np.mean(predict(background)))
    phi = np.zeros((X.shape[0], n))
    for x_idx in range(X.shape[0]):
        x = X[x_idx]
        for _ in range(n_permutations):
            perm = rng.permutation(n)
            hybrid = background.copy()
            prev_val = reference
            for i in perm:
                hybrid[:, i] = x[i]
                cur_val = float(np.mean(predict(hybrid)))
                phi[x_idx, i] += cur_val - prev_val
                prev_val = cur_val
    phi /= n_permutations
    return ExplanationSet(phi, reference)


def shapley_encoders(
    predict,
    X,
    background=None,
    background_size: int = DEFAULT_BACKGROUND_SIZE,
    seed: int = 0,
) -> EncoderMatrix:
    """Columns {1} U {phi_i(x)} of exact marginal Shapley values.

    Columns are centered to mean zero on the build records (the centering
    constants are stored).  When no background is supplied, one is drawn from
    the build records with a fixed seed.
    """
    X = np.asarray(X, dtype=float)
    if background is None:
        rng = np.random.default_rng(seed)
        take = min(background_size, X.shape[0])
        background = X[rng.choice(X.shape[0], size=take, replace=False)]
    expl = exact_marginal_shapley(predict, X, background)
    centers = expl.values.mean(axis=0)
    columns = [np.ones(X.shape[0])] + [expl.values[:, i] - centers[i] for i in range(X.shape[1])]
    names = ["const"] + [f"shapley:x{i}" for i in range(X.shape[1])]
    provenance = {"kind": "shapley", "background": np.asarray(background, dtype=float), "phi_centers": centers}
    return _finish(columns, names, provenance, np.concatenate(([0.0], centers)))


def _shapley_from_state(predict, X, state, template: EncoderMatrix) -> EncoderMatrix:
    expl = exact_marginal_shapley(predict, X, state["background"])
    centers = state["phi_centers"]
    columns = np.column_stack(
        [np.ones(X.shape[0])] + [expl.values[:, i] - centers[i] for i in range(X.shape[1])]
    )
    return EncoderMatrix(columns, template.names, state, template.centers, template.scales)


def combine_encoders(*encoders: EncoderMatrix) -> EncoderMatrix:
    """Concatenate encoder families column-wise (one shared constant column).

    The result keeps each part's provenance so re-evaluation rebuilds every
    block with its own frozen state.
    """
    if len(encoders) < 2:
        raise ValueError("need at least two encoder matrices to combine")
    rows = encoders[0].columns.shape[0]
    if any(e.columns.shape[0] != rows for e in encoders):
        raise ValueError("encoder matrices must cover the same records")
    columns = np.column_stack([encoders[0].columns] + [e.columns[:, 1:] for e in encoders[1:]])
    names = list(encoders[0].names) + [n for e in encoders[1:] for n in e.names[1:]]
    centers = np.concatenate([encoders[0].centers] + [e.centers[1:] for e in encoders[1:]])
    scales = np.concatenate([encoders[0].scales] + [e.scales[1:] for e in encoders[1:]])
    provenance = {"kind": "combined", "parts": [e.provenance for e in encoders]}
    return EncoderMatrix(columns, names, provenance, centers, scales)


def _combined_from_state(X, state, template, model=None, predict=None):
    parts = []
    offset = 1
    for part_state in state["parts"]:
        width = _part_width(part_state)
        sub = EncoderMatrix(
            np.ones((1, width + 1)),  # placeholder; replaced by rebuild below
            ["const"] + list(template.names[offset : offset + width]),
            part_state,
            np.concatenate(([0.0], template.centers[offset : offset + width])),
            np.concatenate(([1.0], template.scales[offset : offset + width])),
        )
        parts.append(sub.reevaluate(X, model=model, predict=predict))
        offset += width
    return combine_encoders(*parts)


def _part_width(state) -> int:
    kind = state["kind"]
    if kind == "additive":
        return len(state["kept_features"]) * int(state["degree"])
    if kind == "tree-pca":
        return state["loadings"].shape[1]
    if kind == "shapley":
        return state["phi_centers"].size
    raise ValueError(f"cannot size provenance kind {kind!r}")


# --------------------------------------------------------------------------
# explanation reconstruction for the linear family
# --------------------------------------------------------------------------


def reconstruct_explanations(base: ExplanationSet, encoder_expl, theta) -> ExplanationSet:
    """Explanations of a family member from precomputed parts.

    E(x; f_theta) = E(x; f_*) - sum_j theta_j E(x; w_j), with theta_0
    shifting only the reference expectation.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size != len(encoder_expl) + 1:
        raise ValueError("theta must have one entry per encoder column")
    values = base.values.copy()
    reference = base.reference - float(theta[0])
    for coef, expl in zip(theta[1:], encoder_expl):
        if expl.values.shape != base.values.shape:
            raise ValueError("explanation shapes disagree")
        values -= coef * expl.values
        reference -= coef * expl.reference
    return ExplanationSet(values, reference)
