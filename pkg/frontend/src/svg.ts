/** Minimal deterministic SVG builders: fixed style, no timestamps. */

export const WIDTH = 640;
export const HEIGHT = 420;
export const MARGIN = { left: 64, right: 96, top: 40, bottom: 52 };

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function open(title: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}"` +
    ` font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>\n` +
    `<text x="${MARGIN.left}" y="24" font-size="13" font-weight="600" fill="#222">` +
    `${esc(title)}</text>\n`
  );
}

export function close(): string {
  return "</svg>\n";
}

export function fmt(v: number, digits = 4): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(digits - 1);
  return v.toPrecision(digits);
}

export interface Scale {
  (v: number): number;
  min: number;
  max: number;
}

export function linScale(min: number, max: number, out0: number, out1: number): Scale {
  const span = max - min || 1;
  const f = ((v: number) => out0 + ((v - min) / span) * (out1 - out0)) as Scale;
  f.min = min;
  f.max = max;
  return f;
}

export function logScale(min: number, max: number, out0: number, out1: number): Scale {
  const lo = Math.log10(min);
  const hi = Math.log10(max);
  const span = hi - lo || 1;
  const f = ((v: number) => out0 + ((Math.log10(v) - lo) / span) * (out1 - out0)) as Scale;
  f.min = min;
  f.max = max;
  return f;
}

export function niceTicks(min: number, max: number, count = 5): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rough) ?? rough;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / step) * step; v <= max + step * 0.01; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function decadeTicks(min: number, max: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(min) - 1e-9); e <= Math.floor(Math.log10(max) + 1e-9); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length >= 2 ? ticks : [min, max];
}

export function axes(
  xs: Scale,
  ys: Scale,
  xticks: number[],
  yticks: number[],
  xlabel: string,
  ylabel: string,
  xfmt: (v: number) => string = fmt,
  yfmt: (v: number) => string = fmt,
): string {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  let s = "";
  s += `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#333" stroke-width="1"/>\n`;
  s += `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#333" stroke-width="1"/>\n`;
  for (const t of xticks) {
    const px = xs(t);
    s += `<line x1="${px.toFixed(2)}" y1="${y0}" x2="${px.toFixed(2)}" y2="${y0 + 4}" stroke="#333"/>\n`;
    s += `<text x="${px.toFixed(2)}" y="${y0 + 16}" font-size="9" fill="#444" text-anchor="middle">${esc(xfmt(t))}</text>\n`;
  }
  for (const t of yticks) {
    const py = ys(t);
    s += `<line x1="${x0 - 4}" y1="${py.toFixed(2)}" x2="${x0}" y2="${py.toFixed(2)}" stroke="#333"/>\n`;
    s += `<text x="${x0 - 7}" y="${(py + 3).toFixed(2)}" font-size="9" fill="#444" text-anchor="end">${esc(yfmt(t))}</text>\n`;
  }
  s += `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" font-size="11" fill="#222" text-anchor="middle">${esc(xlabel)}</text>\n`;
  s += `<text x="16" y="${(y0 + y1) / 2}" font-size="11" fill="#222" text-anchor="middle" transform="rotate(-90 16 ${(y0 + y1) / 2})">${esc(ylabel)}</text>\n`;
  return s;
}

/** Blue-white-red diverging map for signed data, viridis-ish for magnitudes. */
export function heatColor(v: number): string {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.5 * t - 0.25)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.5 - Math.abs(2.2 * t - 1.1))));
  const b = Math.round(255 * Math.min(1, Math.max(0, 1.25 - 1.5 * t)));
  return `rgb(${r},${g},${b})`;
}

export function annotation(lines: string[]): string {
  const x = WIDTH - MARGIN.right + 8;
  let s = "";
  lines.forEach((line, i) => {
    s += `<text x="${x}" y="${MARGIN.top + 14 + 14 * i}" font-size="10" fill="#222">${esc(line)}</text>\n`;
  });
  return s;
}
