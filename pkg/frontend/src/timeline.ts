// Mini similarity-by-year chart for the side panel, rendered from the same
// timeline JSON the report bundle uses. Numbers only — no text from the
// corpus is interpolated, so building markup by string is safe here.

import type { Timeline } from "./types.js";

const W = 280;
const H = 96;
const PAD = 12;

function fmt(v: number): string {
  return v.toFixed(1);
}

export function timelineSvg(timeline: Timeline): string {
  const points = [...timeline.points].sort((a, b) => a.year - b.year);
  const open =
    `<svg class="timeline-svg" xmlns="http://www.w3.org/2000/svg" ` +
    `width="${W}" height="${H}" viewBox="0 0 ${W} ${H}" role="img">`;
  if (points.length === 0) {
    return (
      open +
      `<text x="${W / 2}" y="${H / 2}" text-anchor="middle" font-size="11" ` +
      `fill="#8a8273">no matches yet</text></svg>`
    );
  }
  const years = points.map((p) => p.year).concat(timeline.pub_year);
  const lo = Math.min(...years);
  const hi = Math.max(...years);
  const span = Math.max(hi - lo, 1);
  const top = Math.max(...points.map((p) => p.mean_similarity), 0.05);
  const sx = (year: number) => PAD + ((W - 2 * PAD) * (year - lo)) / span;
  const sy = (v: number) => H - PAD - ((H - 2 * PAD) * v) / top;

  const parts: string[] = [];
  const px = fmt(sx(timeline.pub_year));
  parts.push(
    `<line class="pub-rule" x1="${px}" y1="${PAD}" x2="${px}" y2="${H - PAD}" ` +
      `stroke="#777" stroke-dasharray="2,3"/>`,
  );
  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(sx(p.year))},${fmt(sy(p.mean_similarity))}`)
    .join(" ");
  parts.push(`<path d="${path}" fill="none" stroke="#555" stroke-width="1"/>`);
  for (const p of points) {
    const cls = p.year < timeline.pub_year ? "pre-dot" : "post-dot";
    parts.push(
      `<circle class="${cls}" cx="${fmt(sx(p.year))}" cy="${fmt(sy(p.mean_similarity))}" r="2.5">` +
        `<title>${p.year}: ${p.mean_similarity.toFixed(4)} (${p.match_count} matches)</title>` +
        `</circle>`,
    );
  }
  parts.push(
    `<text x="${PAD}" y="${H - 2}" font-size="9" fill="#888">${lo}</text>`,
    `<text x="${W - PAD}" y="${H - 2}" font-size="9" fill="#888" text-anchor="end">${hi}</text>`,
  );
  return open + parts.join("") + "</svg>";
}
