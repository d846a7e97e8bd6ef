"""Static SVG survival curves with credible bands, written without a plotting library."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def group_summaries(pred, labels):
    """Posterior mean and 95% band of the stratum-average survival curve.

    ``pred`` must carry ``draws`` (S, n, m). For each distinct label the
    curves of its subjects are averaged draw by draw before taking
    percentiles.
    """
    if pred.draws is None:
        raise ValueError("group summaries need a prediction that kept its draws")
    labels = np.asarray(labels)
    out = {}
    for lab in np.unique(labels):
        avg = pred.draws[:, labels == lab, :].mean(axis=1)
        lo, hi = np.percentile(avg, [2.5, 97.5], axis=0)
        out[str(lab)] = (np.asarray(pred.grid.points), np.clip(avg.mean(axis=0), lo, hi), lo, hi)
    return out


def survival_svg(groups, path, title="Survival", width=640, height=420):
    """Write step curves and shaded bands, one ``<g class="curve-group">`` per group."""
    pad = 50
    t_max = max(float(np.max(v[0])) for v in groups.values())

    def xy(t, s):
        x = pad + (width - 2 * pad) * (t / t_max if t_max > 0 else 0)
        y = height - pad - (height - 2 * pad) * s
        return f"{x:.2f},{y:.2f}"

    def steps(times, vals):
        pts = [(0.0, 1.0)]
        level = 1.0
        for t, v in zip(times, vals):
            pts += [(t, level), (t, v)]
            level = v
        return pts

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for k, (label, (times, mean, lo, hi)) in enumerate(groups.items()):
        color = COLORS[k % len(COLORS)]
        upper = steps(times, hi)
        lower = steps(times, lo)
        band = " ".join(xy(t, s) for t, s in upper + lower[::-1])
        line = " ".join(xy(t, s) for t, s in steps(times, mean))
        data = ";".join(":".join(repr(float(v)) for v in row) for row in zip(times, mean, lo, hi))
        parts.append(f'<g class="curve-group" data-label="{escape(label)}" data-values="{data}">')
        parts.append(f'<polygon class="band" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline class="mean" points="{line}" fill="none" stroke="{color}"/>')
        parts.append(f'<text x="{width - pad - 80}" y="{pad + 16 * k}" fill="{color}">{escape(label)}</text>')
        parts.append("</g>")
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
