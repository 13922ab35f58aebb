"""Deterministic SVG figures without a plotting dependency.

Every figure is a pure function from data to an SVG string on a fixed
1200x400 canvas.  Coordinates are formatted with fixed precision so a rerun
of the same data yields byte-identical output; nothing time- or
environment-dependent is embedded.
"""

from __future__ import annotations

import math

import numpy as np

CANVAS_W = 1200
CANVAS_H = 400

#: figure colours per controller mode, with spares for extra series
MODE_COLOURS = {
    "mpcc-ca": "#1f77b4",
    "mpcc-no-ca": "#d62728",
    "frenet-baseline": "#2ca02c",
}
_SPARE_COLOURS = ("#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2")


def _fmt(x: float) -> str:
    """Fixed-precision coordinate formatting (deterministic, compact)."""
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def series_colour(label: str, index: int) -> str:
    return MODE_COLOURS.get(label, _SPARE_COLOURS[index % len(_SPARE_COLOURS)])


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi] at a 1/2/5 x 10^k spacing."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return ticks


def _tick_label(v: float) -> str:
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:g}"


class Axes:
    """One data-space rectangle mapped into a pixel rectangle of the canvas."""

    def __init__(self, px: float, py: float, pw: float, ph: float,
                 xlim: tuple[float, float], ylim: tuple[float, float]):
        if xlim[1] <= xlim[0] or ylim[1] <= ylim[0]:
            raise ValueError("axis limits must be increasing")
        self.px, self.py, self.pw, self.ph = px, py, pw, ph
        self.xlim, self.ylim = xlim, ylim
        self.elements: list[str] = []

    # -- coordinate transform ------------------------------------------------
    def xpix(self, x: float) -> float:
        x0, x1 = self.xlim
        return self.px + (x - x0) / (x1 - x0) * self.pw

    def ypix(self, y: float) -> float:
        y0, y1 = self.ylim
        return self.py + self.ph - (y - y0) / (y1 - y0) * self.ph

    def _clip_id(self) -> str:
        return f"clip{int(self.px)}x{int(self.py)}"

    # -- primitives ----------------------------------------------------------
    def polyline(self, xs, ys, colour: str, width: float = 1.5,
                 dash: str | None = None, opacity: float | None = None) -> None:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        # split at non-finite points so gaps stay gaps
        runs: list[tuple[int, int]] = []
        start = None
        for i, good in enumerate(ok):
            if good and start is None:
                start = i
            elif not good and start is not None:
                runs.append((start, i))
                start = None
        if start is not None:
            runs.append((start, len(ok)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        if opacity is not None:
            extra += f' stroke-opacity="{_fmt(opacity)}"'
        for a, b in runs:
            if b - a < 2:
                continue
            pts = " ".join(f"{_fmt(self.xpix(x))},{_fmt(self.ypix(y))}"
                           for x, y in zip(xs[a:b], ys[a:b]))
            self.elements.append(
                f'<polyline points="{pts}" fill="none" stroke="{colour}" '
                f'stroke-width="{_fmt(width)}"{extra} '
                f'clip-path="url(#{self._clip_id()})"/>')

    def circle(self, x: float, y: float, r_data: float, stroke: str,
               fill: str = "none", width: float = 1.5,
               dash: str | None = None, fill_opacity: float | None = None) -> None:
        """Circle with radius given in x-data units (isotropic axes assumed)."""
        rx = r_data / (self.xlim[1] - self.xlim[0]) * self.pw
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        if fill_opacity is not None:
            extra += f' fill-opacity="{_fmt(fill_opacity)}"'
        self.elements.append(
            f'<circle cx="{_fmt(self.xpix(x))}" cy="{_fmt(self.ypix(y))}" '
            f'r="{_fmt(rx)}" stroke="{stroke}" fill="{fill}" '
            f'stroke-width="{_fmt(width)}"{extra} '
            f'clip-path="url(#{self._clip_id()})"/>')

    def hline(self, y: float, colour: str, width: float = 1.0,
              dash: str | None = None) -> None:
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        yp = _fmt(self.ypix(y))
        self.elements.append(
            f'<line x1="{_fmt(self.px)}" y1="{yp}" '
            f'x2="{_fmt(self.px + self.pw)}" y2="{yp}" '
            f'stroke="{colour}" stroke-width="{_fmt(width)}"{extra}/>')

    def band(self, y_lo: float, y_hi: float, colour: str, opacity: float) -> None:
        y1 = self.ypix(y_hi)
        self.elements.append(
            f'<rect x="{_fmt(self.px)}" y="{_fmt(y1)}" width="{_fmt(self.pw)}" '
            f'height="{_fmt(self.ypix(y_lo) - y1)}" fill="{colour}" '
            f'fill-opacity="{_fmt(opacity)}"/>')

    def text(self, x_pix: float, y_pix: float, s: str, size: int = 12,
             colour: str = "#333", anchor: str = "start") -> None:
        self.elements.append(
            f'<text x="{_fmt(x_pix)}" y="{_fmt(y_pix)}" font-size="{size}" '
            f'font-family="sans-serif" fill="{colour}" '
            f'text-anchor="{anchor}">{s}</text>')

    # -- decorations ----------------------------------------------------------
    def frame_and_ticks(self, xlabel: str = "", ylabel: str = "",
                        x_ticks: bool = True, y_ticks: bool = True) -> None:
        self.elements.append(
            f'<rect x="{_fmt(self.px)}" y="{_fmt(self.py)}" '
            f'width="{_fmt(self.pw)}" height="{_fmt(self.ph)}" fill="none" '
            f'stroke="#333" stroke-width="1"/>')
        if x_ticks:
            for t in _nice_ticks(*self.xlim):
                xp = self.xpix(t)
                self.elements.append(
                    f'<line x1="{_fmt(xp)}" y1="{_fmt(self.py + self.ph)}" '
                    f'x2="{_fmt(xp)}" y2="{_fmt(self.py + self.ph + 4)}" '
                    f'stroke="#333" stroke-width="1"/>')
                self.text(xp, self.py + self.ph + 16, _tick_label(t),
                          size=10, anchor="middle")
        if y_ticks:
            for t in _nice_ticks(*self.ylim):
                yp = self.ypix(t)
                self.elements.append(
                    f'<line x1="{_fmt(self.px - 4)}" y1="{_fmt(yp)}" '
                    f'x2="{_fmt(self.px)}" y2="{_fmt(yp)}" '
                    f'stroke="#333" stroke-width="1"/>')
                self.text(self.px - 7, yp + 3.5, _tick_label(t),
                          size=10, anchor="end")
        if xlabel:
            self.text(self.px + self.pw / 2, self.py + self.ph + 32, xlabel,
                      anchor="middle")
        if ylabel:
            self.text(self.px + 6, self.py + 14, ylabel, anchor="start")

    def legend(self, entries: list[tuple[str, str]]) -> None:
        x = self.px + self.pw - 10
        y = self.py + 14
        for i, (label, colour) in enumerate(entries):
            yp = y + 16 * i
            self.elements.append(
                f'<line x1="{_fmt(x - 148)}" y1="{_fmt(yp - 4)}" '
                f'x2="{_fmt(x - 124)}" y2="{_fmt(yp - 4)}" '
                f'stroke="{colour}" stroke-width="2.5"/>')
            self.text(x - 118, yp, label, size=11)


def _document(axes: list[Axes], title: str) -> str:
    defs = []
    for ax in axes:
        defs.append(
            f'<clipPath id="{ax._clip_id()}"><rect x="{_fmt(ax.px)}" '
            f'y="{_fmt(ax.py)}" width="{_fmt(ax.pw)}" '
            f'height="{_fmt(ax.ph)}"/></clipPath>')
    body = "\n".join(el for ax in axes for el in ax.elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W}" '
        f'height="{CANVAS_H}" viewBox="0 0 {CANVAS_W} {CANVAS_H}">\n'
        f'<defs>\n' + "\n".join(defs) + '\n</defs>\n'
        f'<rect width="{CANVAS_W}" height="{CANVAS_H}" fill="white"/>\n'
        f'<text x="{CANVAS_W // 2}" y="18" font-size="14" '
        f'font-family="sans-serif" fill="#111" text-anchor="middle" '
        f'font-weight="bold">{title}</text>\n'
        + body + "\n</svg>\n")


# ---------------------------------------------------------------------------
# figure builders


def trajectory_figure(track_width: float, road_length: float,
                      desired_xy: tuple, obstacles: list,
                      paths: dict, r_veh: float, D_sft_obs: float,
                      title: str = "Plan view") -> str:
    """Plan view: track edges, desired path, obstacles with unsafe bands,
    and one realised path per label.

    ``obstacles`` holds (X, Y, radius) triples; ``paths`` maps label ->
    (xs, ys).  The unsafe band around each obstacle is the disc inflated by
    the vehicle radius plus the safety distance; the inner dashed ring marks
    the collision boundary (inflation by the vehicle radius alone).
    """
    half = 0.5 * track_width
    y_span = half + 1.5
    margin_l, margin_r, margin_t, margin_b = 50, 20, 30, 44
    ax = Axes(margin_l, margin_t, CANVAS_W - margin_l - margin_r,
              CANVAS_H - margin_t - margin_b,
              (0.0, road_length), (-y_span, y_span))
    ax.band(-half, half, "#f2f2f2", 1.0)
    ax.hline(half, "#111", 2.0)
    ax.hline(-half, "#111", 2.0)
    ax.hline(0.0, "#bbb", 1.0, dash="6,6")
    for X, Y, r in obstacles:
        ax.circle(X, Y, r + r_veh + D_sft_obs, stroke="#d62728",
                  fill="#d62728", width=1.0, fill_opacity=0.12)
        ax.circle(X, Y, r + r_veh, stroke="#d62728", width=1.2, dash="4,4")
        ax.circle(X, Y, r, stroke="#444", fill="#666", width=1.0,
                  fill_opacity=0.9)
    ax.polyline(desired_xy[0], desired_xy[1], "#888", 1.2, dash="8,5")
    entries = [("desired path", "#888")]
    for i, (label, (xs, ys)) in enumerate(paths.items()):
        colour = series_colour(label, i)
        ax.polyline(xs, ys, colour, 2.0)
        entries.append((label, colour))
    ax.frame_and_ticks(xlabel="station along road (m)",
                       ylabel="lateral position (m)")
    ax.legend(entries)
    return _document([ax], title)


def states_figure(series: dict, title: str = "States") -> str:
    """Four stacked panels over a shared station axis.

    ``series`` maps label -> dict with keys ``s``, ``vx``, ``beta_deg``,
    ``delta_deg``, ``Fx_kN``.
    """
    panels = [("vx (m/s)", "vx"), ("beta (deg)", "beta_deg"),
              ("delta (deg)", "delta_deg"), ("Fx (kN)", "Fx_kN")]
    margin_l, margin_r, margin_t, margin_b = 56, 16, 26, 40
    gap = 8
    ph = (CANVAS_H - margin_t - margin_b - gap * (len(panels) - 1)) / len(panels)
    pw = CANVAS_W - margin_l - margin_r

    all_s = np.concatenate([np.asarray(d["s"], dtype=float)
                            for d in series.values()]) if series else np.array([0.0, 1.0])
    finite_s = all_s[np.isfinite(all_s)]
    xlim = (float(finite_s.min()), float(finite_s.max())) if finite_s.size else (0.0, 1.0)
    if xlim[1] <= xlim[0]:
        xlim = (xlim[0], xlim[0] + 1.0)

    axes = []
    for row, (label, key) in enumerate(panels):
        vals = np.concatenate([np.asarray(d[key], dtype=float)
                               for d in series.values()]) if series else np.array([0.0])
        vals = vals[np.isfinite(vals)]
        lo = float(vals.min()) if vals.size else 0.0
        hi = float(vals.max()) if vals.size else 1.0
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        ax = Axes(margin_l, margin_t + row * (ph + gap), pw, ph,
                  xlim, (lo - pad, hi + pad))
        for i, (name, d) in enumerate(series.items()):
            ax.polyline(d["s"], d[key], series_colour(name, i), 1.6)
        last = row == len(panels) - 1
        ax.frame_and_ticks(xlabel="station along road (m)" if last else "",
                           ylabel=label, x_ticks=last)
        axes.append(ax)
    if series:
        axes[0].legend([(name, series_colour(name, i))
                        for i, name in enumerate(series)])
    return _document(axes, title)


def gg_figure(points: dict, a_max: float, title: str = "G-G diagram") -> str:
    """Lateral vs longitudinal acceleration traces with the friction circle.

    ``points`` maps label -> (ax_long, ay_lat) arrays in m/s^2; ``a_max`` is
    the friction-limited acceleration used for the reference circle.
    """
    margin_t, margin_b = 30, 44
    ph = CANVAS_H - margin_t - margin_b
    lim = 1.25 * a_max
    pw = ph  # square data aspect so the friction circle renders round
    px = (CANVAS_W - pw) / 2
    ax = Axes(px, margin_t, pw, ph, (-lim, lim), (-lim, lim))
    ax.hline(0.0, "#ccc", 1.0)
    ax.polyline([0.0, 0.0], [-lim, lim], "#ccc", 1.0)
    ax.circle(0.0, 0.0, a_max, stroke="#888", width=1.2, dash="6,4")
    entries = []
    for i, (label, (a_long, a_lat)) in enumerate(points.items()):
        colour = series_colour(label, i)
        ax.polyline(a_lat, a_long, colour, 1.2, opacity=0.85)
        entries.append((label, colour))
    ax.frame_and_ticks(xlabel="lateral acceleration (m/s^2)",
                       ylabel="longitudinal (m/s^2)")
    ax.legend(entries)
    return _document([ax], title)


def overestimation_figure(curves: dict,
                          title: str = "Frenet vs Cartesian distance") -> str:
    """Overestimation curves, one per radius label: x = arc separation,
    y = D_frenet - D_cartesian."""
    margin_l, margin_r, margin_t, margin_b = 60, 20, 30, 44
    ax_rect = (margin_l, margin_t, CANVAS_W - margin_l - margin_r,
               CANVAS_H - margin_t - margin_b)
    xs_all = np.concatenate([np.asarray(x, dtype=float)
                             for x, _ in curves.values()])
    ys_all = np.concatenate([np.asarray(y, dtype=float)
                             for _, y in curves.values()])
    xlim = (float(xs_all.min()), float(xs_all.max()))
    yhi = float(ys_all.max())
    ax = Axes(*ax_rect, xlim, (0.0, yhi * 1.06 if yhi > 0 else 1.0))
    entries = []
    for i, (label, (x, y)) in enumerate(curves.items()):
        colour = _SPARE_COLOURS[i % len(_SPARE_COLOURS)]
        ax.polyline(x, y, colour, 1.8)
        entries.append((label, colour))
    ax.frame_and_ticks(xlabel="arc-length separation (m)",
                       ylabel="overestimation (m)")
    ax.legend(entries)
    return _document([ax], title)
