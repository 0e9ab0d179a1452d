"""Render analytics into a byte-stable report bundle.

The bundle is a directory holding ``report.json`` plus three SVG charts:
a similarity timeline with pre/post mean rules, a discipline bar chart,
and an origin/afterlife flow diagram. Everything is assembled from plain
string templates with fixed-precision number formatting — identical inputs
always produce identical bytes, regardless of thread count or dict order.

The JSON layout is versioned; see ``docs/report_schema.md``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .analytics import (
    AFTERLIFE,
    ORIGIN,
    AlluvialFlow,
    DisciplineInfluence,
    InfluenceTimeline,
)
from .errors import UnsupportedFormat

REPORT_SCHEMA_VERSION = 1

_TIER_COLORS = {
    "Direct": "#b2182b",
    "Indirect": "#ef8a62",
    "Speculative": "#fddbc7",
}
_PRE_COLOR = "#2166ac"
_POST_COLOR = "#b2182b"

_WIDTH, _HEIGHT = 820, 420
_MARGIN = 56


def _fmt(value: float, places: int = 4) -> str:
    return f"{value:.{places}f}"


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="Georgia, serif">\n'
        f'<title>{_escape(title)}</title>\n'
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#fffef9"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _text(x: float, y: float, content: str, size: int = 12, anchor: str = "start",
          color: str = "#333333") -> str:
    return (
        f'<text x="{_fmt(x, 1)}" y="{_fmt(y, 1)}" font-size="{size}" '
        f'text-anchor="{anchor}" fill="{color}">{_escape(content)}</text>'
    )


def _escape(content: str) -> str:
    return (
        content.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def render_timeline_svg(timeline: InfluenceTimeline) -> str:
    points = sorted(timeline.points, key=lambda p: p.year)
    body: list[str] = []
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN
    if points:
        years = [p.year for p in points]
        lo_year, hi_year = min(years + [timeline.pub_year]), max(years + [timeline.pub_year])
        span = max(hi_year - lo_year, 1)
        top = max([p.mean_similarity for p in points] + [0.05])

        def sx(year: int) -> float:
            return _MARGIN + plot_w * (year - lo_year) / span

        def sy(value: float) -> float:
            return _MARGIN + plot_h * (1.0 - value / top)

        body.append(
            f'<line x1="{_fmt(sx(timeline.pub_year), 1)}" y1="{_MARGIN}" '
            f'x2="{_fmt(sx(timeline.pub_year), 1)}" y2="{_HEIGHT - _MARGIN}" '
            f'stroke="#555555" stroke-dasharray="2,3"/>'
        )
        body.append(_text(sx(timeline.pub_year) + 4, _MARGIN + 12,
                          f"published {timeline.pub_year}", 11, "start", "#555555"))
        for mean, color, label in (
            (timeline.pre_mean, _PRE_COLOR, "pre mean"),
            (timeline.post_mean, _POST_COLOR, "post mean"),
        ):
            y = sy(min(mean, top))
            body.append(
                f'<line x1="{_MARGIN}" y1="{_fmt(y, 1)}" x2="{_WIDTH - _MARGIN}" '
                f'y2="{_fmt(y, 1)}" stroke="{color}" stroke-dasharray="6,4"/>'
            )
            body.append(_text(_WIDTH - _MARGIN - 4, y - 4,
                              f"{label} {_fmt(mean)}", 11, "end", color))
        path = " ".join(
            f"{'M' if i == 0 else 'L'}{_fmt(sx(p.year), 1)},{_fmt(sy(p.mean_similarity), 1)}"
            for i, p in enumerate(points)
        )
        body.append(f'<path d="{path}" fill="none" stroke="#333333" stroke-width="1.2"/>')
        for p in points:
            color = _PRE_COLOR if p.year < timeline.pub_year else _POST_COLOR
            detail = (f"{p.year}: {_fmt(p.mean_similarity)} "
                      f"({p.book_count} books, {p.match_count} matches)")
            body.append(
                f'<circle cx="{_fmt(sx(p.year), 1)}" cy="{_fmt(sy(p.mean_similarity), 1)}" '
                f'r="3" fill="{color}"><title>{_escape(detail)}</title></circle>'
            )
        for year in sorted({lo_year, timeline.pub_year, hi_year}):
            body.append(_text(sx(year), _HEIGHT - _MARGIN + 18, str(year), 11, "middle"))
        for frac in (0.0, 0.5, 1.0):
            body.append(_text(_MARGIN - 8, sy(top * frac) + 4, _fmt(top * frac, 3),
                              10, "end", "#777777"))
    else:
        body.append(_text(_WIDTH / 2, _HEIGHT / 2, "no corpus books", 14, "middle"))
    body.append(_text(_MARGIN, _MARGIN - 24,
                      f"Similarity by publication year — {timeline.focus_doc_id} "
                      f"(stat: {timeline.stat})", 14))
    body.append(
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#999999" stroke-width="0.5"/>'
    )
    return _svg(body, f"similarity timeline for {timeline.focus_doc_id}")


def render_disciplines_svg(rows: list[DisciplineInfluence]) -> str:
    body: list[str] = []
    body.append(_text(_MARGIN, _MARGIN - 24,
                      "Post-publication books with detected influence", 14))
    if rows:
        bar_h = min(26.0, (_HEIGHT - 2 * _MARGIN) / max(len(rows), 1) - 6)
        label_w = 150
        scale_w = _WIDTH - 2 * _MARGIN - label_w - 60
        for i, row in enumerate(rows):
            y = _MARGIN + i * (bar_h + 6)
            width = scale_w * row.percent / 100.0
            color = "#555555" if row.discipline == "correspondents" else "#7c9c6e"
            body.append(_text(_MARGIN + label_w - 6, y + bar_h - 6,
                              row.discipline, 12, "end"))
            body.append(
                f'<rect x="{_MARGIN + label_w}" y="{_fmt(y, 1)}" '
                f'width="{_fmt(max(width, 0.5), 1)}" height="{_fmt(bar_h, 1)}" '
                f'fill="{color}"/>'
            )
            body.append(_text(_MARGIN + label_w + width + 6, y + bar_h - 6,
                              f"{_fmt(row.percent, 1)}% "
                              f"({row.influenced_books}/{row.eligible_books})", 11))
    else:
        body.append(_text(_WIDTH / 2, _HEIGHT / 2, "no disciplines", 14, "middle"))
    return _svg(body, "discipline influence table")


def render_alluvial_svg(flows: list[AlluvialFlow], focus_doc_id: str) -> str:
    body: list[str] = []
    body.append(_text(_MARGIN, _MARGIN - 24,
                      f"Match flow around {focus_doc_id} — origins and afterlives", 14))
    sides = {
        ORIGIN: [f for f in flows if f.direction == ORIGIN],
        AFTERLIFE: [f for f in flows if f.direction == AFTERLIFE],
    }
    total = sum(f.weight for f in flows)
    if total <= 0:
        body.append(_text(_WIDTH / 2, _HEIGHT / 2, "no matches", 14, "middle"))
        return _svg(body, "match flows")
    plot_h = _HEIGHT - 2 * _MARGIN
    mid_x = _WIDTH / 2
    body.append(
        f'<rect x="{_fmt(mid_x - 10, 1)}" y="{_MARGIN}" width="20" '
        f'height="{plot_h}" fill="#333333"/>'
    )
    for side, x, anchor, ribbon_sign in (
        (ORIGIN, _MARGIN + 120, "end", 1),
        (AFTERLIFE, _WIDTH - _MARGIN - 120, "start", -1),
    ):
        y = float(_MARGIN)
        side_total = sum(f.weight for f in sides[side])
        body.append(_text(x - ribbon_sign * 110, _MARGIN - 6,
                          f"{side} ({_fmt(side_total, 2)})", 12,
                          "start" if side == ORIGIN else "end"))
        for flow in sides[side]:
            height = plot_h * flow.weight / total
            color = _TIER_COLORS[flow.tier.label]
            body.append(
                f'<rect x="{_fmt(x - (10 if ribbon_sign > 0 else 0), 1)}" '
                f'y="{_fmt(y, 1)}" width="10" height="{_fmt(max(height, 0.8), 1)}" '
                f'fill="{color}"/>'
            )
            mid_y = y + height / 2
            ctrl = (x + mid_x) / 2
            end_x = mid_x + 10 if side == ORIGIN else mid_x - 10  # far edge of hub
            body.append(
                f'<path d="M{_fmt(x, 1)},{_fmt(mid_y, 1)} '
                f'C{_fmt(ctrl, 1)},{_fmt(mid_y, 1)} {_fmt(ctrl, 1)},{_fmt(mid_y, 1)} '
                f'{_fmt(end_x, 1)},{_fmt(mid_y, 1)}" '
                f'stroke="{color}" stroke-width="{_fmt(max(height * 0.7, 0.6), 1)}" '
                f'fill="none" opacity="0.55"/>'
            )
            body.append(_text(x - ribbon_sign * 8, mid_y + 4,
                              f"{flow.discipline} · {flow.tier.label} "
                              f"({_fmt(flow.weight, 2)})", 10, anchor))
            y += height
    legend_x = _MARGIN
    for i, (label, color) in enumerate(_TIER_COLORS.items()):
        y = _HEIGHT - 24
        x = legend_x + i * 130
        body.append(f'<rect x="{x}" y="{y - 10}" width="12" height="12" fill="{color}"/>')
        body.append(_text(x + 18, y, label, 11))
    return _svg(body, "match flows")


def report_json(
    timeline: InfluenceTimeline,
    table: list[DisciplineInfluence],
    flows: list[AlluvialFlow],
) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "focus_doc_id": timeline.focus_doc_id,
        "pub_year": timeline.pub_year,
        "timeline": timeline.to_json(),
        "disciplines": [row.to_json() for row in table],
        "flows": [flow.to_json() for flow in flows],
        "totals": {
            "match_count": sum(p.match_count for p in timeline.points),
            "flow_weight": sum(f.weight for f in flows),
        },
    }


def render_report(
    timeline: InfluenceTimeline,
    table: list[DisciplineInfluence],
    flows: list[AlluvialFlow],
    format: str = "bundle",
    out_dir: Path | str | None = None,
):
    """Produce the report in one of three formats.

    "json" returns the report dictionary; "svg" returns the three charts as
    strings keyed by filename; "bundle" writes report.json and the charts
    into out_dir and returns the directory path.
    """
    if format == "json":
        return report_json(timeline, table, flows)
    if format == "svg":
        return {
            "timeline.svg": render_timeline_svg(timeline),
            "disciplines.svg": render_disciplines_svg(table),
            "alluvial.svg": render_alluvial_svg(flows, timeline.focus_doc_id),
        }
    if format == "bundle":
        if out_dir is None:
            raise UnsupportedFormat("bundle format needs an out_dir")
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(report_json(timeline, table, flows),
                             sort_keys=True, indent=2) + "\n"
        (out_dir / "report.json").write_text(payload, encoding="utf-8")
        for name, svg in render_report(timeline, table, flows, format="svg").items():
            (out_dir / name).write_text(svg, encoding="utf-8")
        return out_dir
    raise UnsupportedFormat(f"unknown report format {format!r}")
