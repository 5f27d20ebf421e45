"""Static SVG rendering of rescaled-curve CSV files.

The SVG is produced directly as text, with no timestamps or environment
content, so it is a pure function of the CSV bytes.  Each plotted sample also
carries its numbers as data-* attributes, which is what the tests assert
(values, not pixels).
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

__all__ = ["CurveCSVError", "read_curve_csv", "render_curve_svg", "emit_plot"]

_EXPECTED_HEADER = ["lambda", "M_hat", "M_stderr", "rescaled", "estimator", "n_outer", "n_inner", "seed"]

_W, _H = 760, 520
_PANEL = {"top": (70, 30, 700, 240), "bottom": (70, 290, 700, 500)}  # x0, y0, x1, y1


class CurveCSVError(ValueError):
    """Malformed curve CSV; message carries the 1-based line number."""


def read_curve_csv(text: str) -> list:
    rows = []
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CurveCSVError("line 1: empty curve CSV") from None
    if [h.strip() for h in header] != _EXPECTED_HEADER:
        raise CurveCSVError(f"line 1: expected header {','.join(_EXPECTED_HEADER)!r}")
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(_EXPECTED_HEADER):
            raise CurveCSVError(f"line {lineno}: expected {len(_EXPECTED_HEADER)} fields, got {len(rec)}")
        try:
            rows.append(
                {
                    "lambda": float(rec[0]),
                    "M_hat": float(rec[1]),
                    "M_stderr": float(rec[2]),
                    "rescaled": float(rec[3]),
                    "estimator": rec[4],
                    "n_outer": int(rec[5]),
                    "n_inner": int(rec[6]),
                    "seed": int(rec[7]),
                }
            )
        except ValueError as exc:
            raise CurveCSVError(f"line {lineno}: {exc}") from None
    if not rows:
        raise CurveCSVError("line 2: curve CSV has no data rows")
    return rows


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        pad = 1.0 if lo == 0 else abs(lo) * 0.5
        lo, hi = lo - pad, hi + pad
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)], lo, hi


def _panel_svg(frame, title, xs, series, lines):
    """One framed panel; series is a list of (y, yerr, attrs) aligned to xs."""
    x0, y0, x1, y1 = frame
    finite = [y for y, _e, _a in series if math.isfinite(y)]
    if not finite:
        finite = [0.0]
    errs = [e for y, e, _a in series if math.isfinite(y)]
    lo = min(y - e for y, e in zip(finite, errs)) if errs else min(finite)
    hi = max(y + e for y, e in zip(finite, errs)) if errs else max(finite)
    ticks, lo, hi = _ticks(lo, hi)
    xlo, xhi = min(xs), max(xs)
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def px(v):
        return x0 + (v - xlo) / (xhi - xlo) * (x1 - x0)

    def py(v):
        return y1 - (v - lo) / (hi - lo) * (y1 - y0)

    lines.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#444"/>')
    lines.append(f'<text x="{x0}" y="{y0 - 8}" font-size="13" fill="#222">{title}</text>')
    for t in ticks:
        lines.append(f'<line x1="{x0 - 4}" y1="{py(t):.2f}" x2="{x0}" y2="{py(t):.2f}" stroke="#444"/>')
        lines.append(f'<text x="{x0 - 8}" y="{py(t) + 4:.2f}" font-size="10" fill="#444" text-anchor="end">{t:.3g}</text>')
    xticks, _, _ = _ticks(xlo, xhi)
    for t in xticks:
        lines.append(f'<line x1="{px(t):.2f}" y1="{y1}" x2="{px(t):.2f}" y2="{y1 + 4}" stroke="#444"/>')
        lines.append(f'<text x="{px(t):.2f}" y="{y1 + 16}" font-size="10" fill="#444" text-anchor="middle">{t:.3g}</text>')

    pts = [(px(x), py(y)) for x, (y, _e, _a) in zip(xs, series) if math.isfinite(y)]
    if len(pts) > 1:
        path = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        lines.append(f'<polyline points="{path}" fill="none" stroke="#1f6fb2" stroke-width="1.5"/>')
    for x, (y, e, attrs) in zip(xs, series):
        if not math.isfinite(y):
            continue
        cx, cy = px(x), py(y)
        if e > 0:
            lines.append(
                f'<line x1="{cx:.2f}" y1="{py(y - e):.2f}" x2="{cx:.2f}" y2="{py(y + e):.2f}" '
                f'stroke="#1f6fb2" stroke-width="1"/>'
            )
        attr_text = " ".join(f'data-{k}="{v}"' for k, v in attrs.items())
        lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="#1f6fb2" {attr_text}/>')


def render_curve_svg(csv_text: str) -> str:
    rows = read_curve_csv(csv_text)
    xs = [math.log10(r["lambda"]) for r in rows]
    log_series = []
    for r in rows:
        if r["M_hat"] > 0:
            y = math.log10(r["M_hat"])
            # symmetric log-space error bar from the linear stderr
            e = r["M_stderr"] / (r["M_hat"] * math.log(10.0)) if r["M_stderr"] else 0.0
        else:
            y, e = math.nan, 0.0
        log_series.append((y, e, {"lambda": repr(r["lambda"]), "m-hat": repr(r["M_hat"])}))
    resc_series = [
        (
            r["rescaled"],
            r["M_stderr"] * (r["rescaled"] / r["M_hat"]) if r["M_hat"] else 0.0,
            {"lambda": repr(r["lambda"]), "rescaled": repr(r["rescaled"])},
        )
        for r in rows
    ]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
    ]
    _panel_svg(_PANEL["top"], "log10 M_hat vs log10 lambda", xs, log_series, lines)
    _panel_svg(_PANEL["bottom"], "lambda^p M_hat vs log10 lambda", xs, resc_series, lines)
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_plot(curve_csv: str | Path, out_svg: str | Path) -> Path:
    """Render the CSV at curve_csv into a standalone SVG at out_svg."""
    text = Path(curve_csv).read_text()
    svg = render_curve_svg(text)
    out = Path(out_svg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return out
