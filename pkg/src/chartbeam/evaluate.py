"""Metrics and report artifacts: top-k accuracy, correlation CDFs and maps,
overhead accounting and inference timing.

All artifact writers emit deterministic text (fixed float formats, fixed
grids) so identical inputs produce byte-identical files.
"""

import time
from dataclasses import dataclass, field

import numpy as np

CDF_GRID = np.round(np.arange(101) / 100.0, 2)

# two-color ramp for correlation maps, low -> high; midpoint is exact
_RAMP_LOW = (30, 60, 180)
_RAMP_HIGH = (230, 60, 20)


def top_k_accuracy(predicted, rankings, k):
    """Fraction of users whose predicted beam index is among the k best
    beams of their ranking."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(predicted) != len(rankings):
        raise ValueError("predicted and rankings lengths differ")
    hits = 0
    for idx, ranking in zip(predicted, rankings):
        if k > len(ranking.indices):
            raise ValueError(f"k={k} exceeds the codebook size {len(ranking.indices)}")
        if idx in ranking.indices[:k]:
            hits += 1
    return hits / len(predicted)


def correlation_cdf(samples):
    """Empirical CDF of correlation samples on the fixed 101-point grid.

    Returns an array of (threshold, cumulative fraction) rows; the fraction
    is P(sample <= threshold), monotone and ending at 1.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.size == 0:
        raise ValueError("no correlation samples")
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError("correlation samples must lie in [0, 1]")
    s = np.sort(s)
    frac = np.searchsorted(s, CDF_GRID, side="right") / s.size
    return np.column_stack([CDF_GRID, frac])


def cdf_to_csv(cdf):
    lines = ["threshold,fraction"]
    lines += [f"{t:.2f},{f:.6f}" for t, f in cdf]
    return "\n".join(lines) + "\n"


def ramp_color(value):
    """Linear interpolation between the declared ramp endpoints."""
    return tuple(
        int(round(lo + float(value) * (hi - lo))) for lo, hi in zip(_RAMP_LOW, _RAMP_HIGH)
    )


def correlation_map(positions, values):
    """CSV and SVG renderings of per-user correlations on the ground plane.

    ``positions`` holds (x, y) coordinates; the SVG scatter carries one
    circle per sample colored on a linear [0, 1] scale.
    """
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    vals = np.asarray(values, dtype=np.float64).ravel()
    if pos.shape[0] != vals.size:
        raise ValueError("positions and values lengths differ")

    csv_lines = ["x,y,eta"]
    csv_lines += [f"{x:.9g},{y:.9g},{v:.6f}" for (x, y), v in zip(pos, vals)]
    csv_text = "\n".join(csv_lines) + "\n"

    x_min, y_min = pos.min(axis=0)
    x_max, y_max = pos.max(axis=0)
    span_x = max(x_max - x_min, 1e-9)
    span_y = max(y_max - y_min, 1e-9)
    size = 480
    margin = 12
    radius = 3
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    scale = (size - 2 * margin) / max(span_x, span_y)
    for (x, y), v in zip(pos, vals):
        cx = margin + (x - x_min) * scale
        cy = size - margin - (y - y_min) * scale  # y axis points up
        r, g, b = ramp_color(np.clip(v, 0.0, 1.0))
        svg.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" fill="rgb({r},{g},{b})"/>'
        )
    svg.append("</svg>")
    return csv_text, "\n".join(svg) + "\n"


def overhead_report(n_bs, vector_dim, chart_dim):
    """Channel-coefficient counts of classical beam sweeping (B*D) versus the
    chart-based scheme (D + B*d)."""
    for name, v in (("n_bs", n_bs), ("vector_dim", vector_dim), ("chart_dim", chart_dim)):
        if v < 1:
            raise ValueError(f"{name} must be a positive integer")
    return {
        "sweeping_cost": n_bs * vector_dim,
        "proposed_cost": vector_dim + n_bs * chart_dim,
    }


def time_inference(predictor, queries, repetitions=10):
    """Mean wall-clock nanoseconds per single-query prediction, with the
    sample standard deviation over repetitions. Runs one warm-up pass."""
    if repetitions < 10:
        raise ValueError("repetitions must be >= 10")
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] == 0:
        raise ValueError("queries must be a non-empty 2D array")
    if callable(predictor) and not hasattr(predictor, "predict"):
        call = predictor
    else:
        call = lambda row: predictor.predict(row[None, :])  # noqa: E731
    for row in q:  # warm-up
        call(row)
    means = np.empty(repetitions)
    for rep in range(repetitions):
        t0 = time.perf_counter_ns()
        for row in q:
            call(row)
        means[rep] = (time.perf_counter_ns() - t0) / q.shape[0]
    return float(means.mean()), float(means.std(ddof=1))


@dataclass
class EvalReport:
    """Aggregated evaluation artifacts for one dataset."""

    dataset_id: str
    chart_quality: object = None
    overhead: dict = field(default_factory=dict)
    # accuracies[bs][backend][k], eta[bs][backend] -> sample array
    accuracies: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def metrics_text(self, bs_index):
        acc = self.accuracies.get(bs_index, {})
        eta = self.eta.get(bs_index, {})
        ks = sorted({k for cols in acc.values() for k in cols})
        lines = [f"# beam prediction metrics (dataset {self.dataset_id}, bs {bs_index})"]
        header = "backend " + " ".join(f"top{k}" for k in ks) + " mean_eta"
        lines.append(header)
        for backend in sorted(set(acc) | set(eta)):
            cols = [backend]
            for k in ks:
                v = acc.get(backend, {}).get(k)
                cols.append("-" if v is None else f"{v:.6f}")
            e = eta.get(backend)
            cols.append("-" if e is None else f"{np.mean(e):.6f}")
            lines.append(" ".join(cols))
        return "\n".join(lines) + "\n"

    def summary_text(self):
        lines = [f"# evaluation summary (dataset {self.dataset_id})"]
        if self.chart_quality is not None:
            q = self.chart_quality
            lines.append(
                f"chart: TW={q.trustworthiness:.6f} CT={q.continuity:.6f} "
                f"KS={q.kruskal_stress:.6f} (K fraction {q.neighborhood_fraction:g})"
            )
        if self.overhead:
            lines.append(
                f"overhead: sweeping={self.overhead['sweeping_cost']} "
                f"proposed={self.overhead['proposed_cost']} coefficients"
            )
        return "\n".join(lines) + "\n"
