"""CSV and SVG emission for curves.  Both are byte-deterministic for a given curve."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .sweep import Axis, Curve

__all__ = ["CSV_HEADER", "SvgStyle", "curve_to_csv", "emit_csv", "read_csv", "curve_to_svg",
           "emit_svg", "write_text", "fmt"]

CSV_HEADER = ("coordinate", "n_trn", "d", "mu", "sigma_trn", "sigma_tst", "theory_risk",
              "mc_risk_mean", "mc_risk_stderr", "theory_train", "mc_train_mean", "theory_wnorm",
              "mc_wnorm_mean", "n_trials", "seed")


def fmt(x: float | int | None) -> str:
    """17 significant digits for floats, plain digits for ints, blank for missing."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _rows(curve: Curve):
    seed = curve.config_snapshot.seed
    for p in curve.points:
        mc = p.mc
        yield (
            p.coordinate, p.n_trn, p.d, p.mu, p.sigma_trn, p.sigma_tst, p.theory_risk,
            None if mc is None else mc.risk_mean,
            None if mc is None else mc.risk_stderr,
            p.theory_train,
            None if mc is None else mc.train_mean,
            p.theory_wnorm,
            None if mc is None else mc.wnorm_mean,
            None if mc is None else mc.n_trials,
            seed,
        )


def curve_to_csv(curve: Curve) -> str:
    if len(curve) == 0:
        raise ValueError("cannot emit an empty curve")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in _rows(curve):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_text(path: str | os.PathLike, text: str) -> None:
    """UTF-8, LF line endings, no platform newline translation."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_csv(curve: Curve, path: str | os.PathLike) -> None:
    write_text(path, curve_to_csv(curve))


def read_csv(path: str | os.PathLike) -> list[dict[str, float | None]]:
    """Parse an emitted file back into floats (blank cells become ``None``)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in rd]


@dataclass(frozen=True)
class SvgStyle:
    width: int = 640
    height: int = 420
    margin: int = 60
    log_y: bool = False
    title: str | None = None
    theory_color: str = "#1f77b4"
    mc_color: str = "#d62728"
    marker_color: str = "#555555"


_AXIS_LABEL = {
    Axis.C_DATA_SCALING: "c = d / N_trn (data scaling)",
    Axis.C_PARAMETER_SCALING: "c = d / N_trn (parameter scaling)",
    Axis.SIGMA_SQ: "sigma_trn^2",
    Axis.MU: "mu",
}


def _n(x: float) -> str:
    # Fixed precision keeps the bytes stable and the file small.
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def curve_to_svg(curve: Curve, style: SvgStyle | None = None) -> str:
    """Theory as a polyline, MC means with +-2 stderr bars, dashed marker at ``1/(mu^2+1)`` on c axes."""
    if len(curve) == 0:
        raise ValueError("cannot render an empty curve")
    st = style or SvgStyle()
    xs = curve.coordinates
    ys = curve.values("theory_risk")
    mc = [(p.coordinate, p.mc.risk_mean, p.mc.risk_stderr) for p in curve.points if p.mc is not None]
    yvals = list(ys) + [m - 2 * s for _, m, s in mc] + [m + 2 * s for _, m, s in mc]
    if st.log_y:
        yvals = [v for v in yvals if v > 0]
    is_c = curve.axis in (Axis.C_DATA_SCALING, Axis.C_PARAMETER_SCALING)
    marker = 1.0 / (curve.config_snapshot.mu ** 2 + 1.0) if is_c else None

    x_lo, x_hi = float(xs.min()), float(xs.max())
    if marker is not None:
        x_lo, x_hi = min(x_lo, marker), max(x_hi, marker)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    ty = (lambda v: math.log10(v)) if st.log_y else (lambda v: v)
    y_lo, y_hi = min(ty(v) for v in yvals), max(ty(v) for v in yvals)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    m, w, h = st.margin, st.width, st.height

    def px(x: float) -> float:
        return m + (x - x_lo) / (x_hi - x_lo) * (w - 2 * m)

    def py(y: float) -> float:
        return h - m - (ty(y) - y_lo) / (y_hi - y_lo) * (h - 2 * m)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<g stroke="black" stroke-width="1"><line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}"/>'
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}"/></g>',
    ]
    out.append('<g font-family="sans-serif" font-size="11" fill="black">')
    for tx in _ticks(x_lo, x_hi):
        out.append(f'<text x="{_n(px(tx))}" y="{h - m + 16}" text-anchor="middle">{tx:.3g}</text>')
    for tyv in _ticks(y_lo, y_hi):
        label = f"{10 ** tyv:.3g}" if st.log_y else f"{tyv:.3g}"
        ypix = h - m - (tyv - y_lo) / (y_hi - y_lo) * (h - 2 * m)
        out.append(f'<text x="{m - 6}" y="{_n(ypix + 4)}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{w / 2:.1f}" y="{h - 16}" text-anchor="middle">'
               f'{escape(_AXIS_LABEL[curve.axis])}</text>')
    ylab = "risk (log10 scale)" if st.log_y else "risk"
    out.append(f'<text x="16" y="{h / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {h / 2:.1f})">{ylab}</text>')
    if st.title:
        out.append(f'<text x="{w / 2:.1f}" y="24" text-anchor="middle" font-size="14">'
                   f'{escape(st.title)}</text>')
    out.append("</g>")

    if marker is not None:
        out.append(f'<line class="peak-estimate" data-x="{fmt(marker)}" x1="{_n(px(marker))}" '
                   f'y1="{m}" x2="{_n(px(marker))}" y2="{h - m}" stroke="{st.marker_color}" '
                   f'stroke-dasharray="4 3"/>')
    pts = [(px(float(x)), py(float(y))) for x, y in zip(xs, ys) if not st.log_y or y > 0]
    if len(pts) >= 2:
        path = " ".join(f"{_n(a)},{_n(b)}" for a, b in pts)
        out.append(f'<polyline class="theory" fill="none" stroke="{st.theory_color}" '
                   f'stroke-width="1.5" points="{path}"/>')
    elif pts:
        a, b = pts[0]
        out.append(f'<circle class="theory" cx="{_n(a)}" cy="{_n(b)}" r="3" fill="{st.theory_color}"/>')
    if mc:
        out.append(f'<g class="mc" stroke="{st.mc_color}" fill="{st.mc_color}">')
        for x, mean, se in mc:
            lo, hi = mean - 2 * se, mean + 2 * se
            if st.log_y and lo <= 0:
                lo = min(v for v in yvals)
            out.append(f'<line x1="{_n(px(x))}" y1="{_n(py(lo))}" x2="{_n(px(x))}" y2="{_n(py(hi))}"/>')
            if not st.log_y or mean > 0:
                out.append(f'<circle cx="{_n(px(x))}" cy="{_n(py(mean))}" r="2.5"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(curve: Curve, path: str | os.PathLike, style: SvgStyle | None = None) -> None:
    write_text(path, curve_to_svg(curve, style))
