"""Candidate evaluation and efficient-frontier extraction.

Candidates are scored with the exact metrics (cross-entropy, rank AUC with
midrank ties, and the W1 / Kolmogorov-Smirnov / invariant biases of the
probability scores by group), then weakly dominated points are removed.
Raw nondominated frontiers are reported; a convex-envelope post-pass is
available as an option since it discards achievable non-convex trade-offs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ._util import cross_entropy, fmt_float, worker_count
from .bias_metrics import GroupedScores, invariant_bias
from .distributions import ks_distance, wasserstein1

_METRIC_FIELDS = ("ce", "auc", "w1_bias", "ks_bias", "inv_bias")


@dataclass
class FrontierPoint:
    method: str
    omega: float
    split: str
    ce: float
    auc: float
    w1_bias: float
    ks_bias: float
    inv_bias: float
    theta: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in _METRIC_FIELDS:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"non-finite metric {name}")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError("AUC outside [0, 1]")
        for name in ("w1_bias", "ks_bias", "inv_bias"):
            if getattr(self, name) < 0:
                raise ValueError(f"negative bias metric {name}")

    @property
    def auc_loss(self) -> float:
        """Loss-oriented AUC for filtering the (KS bias, AUC) pairing."""
        return 1.0 - self.auc


def rank_auc(scores, labels) -> float:
    """Probability a positive outranks a negative, with midrank ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def score_metrics(probs, labels, groups) -> dict:
    """Exact metric block for one candidate's probability scores."""
    g = GroupedScores.from_labels(probs, groups)
    d0, d1 = g.distribution(0), g.distribution(1)
    return {
        "ce": cross_entropy(probs, labels),
        "auc": rank_auc(probs, labels),
        "w1_bias": wasserstein1(d0, d1),
        "ks_bias": ks_distance(d0, d1),
        "inv_bias": invariant_bias(g, g.pooled()),
    }


def evaluate(candidates, family, labels, groups, split: str, method: str):
    """FrontierPoints for (omega, theta) candidates on one data split.

    The family must be built on this split's records; scores are taken in
    probability space.  Candidates are scored in parallel when
    FAIRFRONT_THREADS allows more than one worker.
    """
    labels = np.asarray(labels, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    candidates = list(candidates)

    def score_one(item):
        omega, theta = item
        metrics = score_metrics(family.scores(theta), labels, groups)
        return FrontierPoint(method, float(omega), split, theta=np.asarray(theta, dtype=float), **metrics)

    workers = worker_count()
    if workers > 1 and len(candidates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(score_one, candidates))
    return [score_one(item) for item in candidates]


def pareto_filter(points, bias_axis: str = "w1_bias", perf_axis: str = "ce", convex_hull: bool = False):
    """Weakly dominated points removed; survivors sorted by bias ascending.

    A point is dropped when another has bias and loss both no worse and one
    strictly better; exact metric-pair duplicates collapse to one.  With
    ``convex_hull`` the lower-left convex envelope is applied afterwards.
    """
    if not points:
        raise ValueError("no points to filter")
    coords = [(getattr(p, bias_axis), getattr(p, perf_axis)) for p in points]
    order = sorted(range(len(points)), key=lambda i: coords[i])
    kept = []
    best_loss = np.inf
    for i in order:
        bias, loss = coords[i]
        # the sweep sees each bias level at its lowest loss first, so any
        # point not strictly improving the loss is weakly dominated (this
        # also collapses exact duplicates)
        if loss >= best_loss:
            continue
        kept.append(points[i])
        best_loss = loss
    if convex_hull and len(kept) > 2:
        kept = _lower_convex_envelope(kept, bias_axis, perf_axis)
    return kept


def _lower_convex_envelope(points, bias_axis, perf_axis):
    hull = []
    for p in points:
        x, y = getattr(p, bias_axis), getattr(p, perf_axis)
        while len(hull) >= 2:
            (x1, y1, _), (x2, y2, _) = hull[-2], hull[-1]
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append((x, y, p))
    return [p for _, _, p in hull]


def frontier_value(points, bias_axis: str, perf_axis: str, budget: float) -> float:
    """Best loss achievable within a bias budget; inf when unreachable."""
    feasible = [getattr(p, perf_axis) for p in points if getattr(p, bias_axis) <= budget]
    return min(feasible) if feasible else np.inf


CSV_HEADER = ["method", "omega", "split", "ce", "auc", "w1_bias", "ks_bias", "inv_bias", "theta_json"]


def _point_row(p: FrontierPoint):
    theta_json = "[]" if p.theta is None else "[" + ",".join(fmt_float(v) for v in p.theta) + "]"
    return [
        p.method,
        fmt_float(p.omega),
        p.split,
        fmt_float(p.ce),
        fmt_float(p.auc),
        fmt_float(p.w1_bias),
        fmt_float(p.ks_bias),
        fmt_float(p.inv_bias),
        theta_json,
    ]


def write_frontier_csv(points, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in points:
            writer.writerow(_point_row(p))


def read_frontier_csv(path):
    import json

    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            points.append(
                FrontierPoint(
                    row["method"],
                    float(row["omega"]),
                    row["split"],
                    float(row["ce"]),
                    float(row["auc"]),
                    float(row["w1_bias"]),
                    float(row["ks_bias"]),
                    float(row["inv_bias"]),
                    theta=np.asarray(json.loads(row["theta_json"]), dtype=float),
                )
            )
    return points


# ---------------------------------------------------------------------------
# SVG report: two panels (cross-entropy vs W1, AUC vs KS), one polyline per
# method.  The plotted rows are embedded verbatim as a data table so reports
# can be compared independently of the graphics markup.
# ---------------------------------------------------------------------------

_PANEL = dict(width=420, height=340, margin=50)
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _panel_svg(points_by_method, x_attr, y_attr, x_label, y_label, offset_x):
    w, h, m = _PANEL["width"], _PANEL["height"], _PANEL["margin"]
    xs = [getattr(p, x_attr) for pts in points_by_method.values() for p in pts]
    ys = [getattr(p, y_attr) for pts in points_by_method.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(v):
        return offset_x + m + (v - x_lo) / x_span * (w - 2 * m)

    def sy(v):
        return h - m - (v - y_lo) / y_span * (h - 2 * m)

    parts = [
        f'<rect x="{offset_x + m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{offset_x + w / 2:.1f}" y="{h - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="{offset_x + 14}" y="{h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 {offset_x + 14} {h / 2:.1f})">{y_label}</text>',
    ]
    for color, (method, pts) in zip(_COLORS * 8, sorted(points_by_method.items())):
        ordered = sorted(pts, key=lambda p: (getattr(p, x_attr), getattr(p, y_attr)))
        path = " ".join(f"{sx(getattr(p, x_attr)):.2f},{sy(getattr(p, y_attr)):.2f}" for p in ordered)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for p in ordered:
            parts.append(
                f'<circle cx="{sx(getattr(p, x_attr)):.2f}" cy="{sy(getattr(p, y_attr)):.2f}" '
                f'r="3" fill="{color}"/>'
            )
    return parts


def write_frontier_svg(points, path):
    """Two-panel frontier scatter with an embedded plain-text data table."""
    by_method = {}
    for p in points:
        by_method.setdefault(p.method, []).append(p)
    w, h = _PANEL["width"], _PANEL["height"]
    body = []
    body += _panel_svg(by_method, "w1_bias", "ce", "W1 bias", "cross-entropy", 0)
    body += _panel_svg(by_method, "ks_bias", "auc", "KS bias", "AUC", w + 20)
    legend = []
    for i, method in enumerate(sorted(by_method)):
        color = (_COLORS * 8)[i]
        legend.append(
            f'<rect x="{20 + 150 * i}" y="6" width="10" height="10" fill="{color}"/>'
            f'<text x="{34 + 150 * i}" y="15" font-size="11">{method}</text>'
        )
    table = "\n".join(",".join(_point_row(p)) for p in points)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * w + 20}" height="{h + 24}">\n'
        + "\n".join(legend)
        + f'\n<g transform="translate(0,24)">\n'
        + "\n".join(body)
        + "\n</g>\n"
        + f"<!--DATA\n{','.join(CSV_HEADER)}\n{table}\nDATA-->\n"
        + "</svg>\n"
    )
    with open(path, "w") as fh:
        fh.write(svg)


def embedded_svg_table(path) -> str:
    """The data table embedded in a frontier SVG (for comparisons)."""
    with open(path) as fh:
        text = fh.read()
    start = text.index("<!--DATA\n") + len("<!--DATA\n")
    end = text.index("\nDATA-->")
    return text[start:end]
