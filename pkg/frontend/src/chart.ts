/** Scrolling strip chart rendered as an SVG polyline; fed live from the
 * telemetry stream, keeps the most recent `windowMs` of samples. */

import { SampleJson } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface ChartPoint {
  t: number;
  value: number;
}

export class StripChart {
  readonly root: SVGSVGElement;
  readonly points: ChartPoint[] = [];
  private readonly line: SVGPolylineElement;

  constructor(
    doc: Document,
    readonly windowMs: number,
    readonly width = 600,
    readonly height = 120,
  ) {
    this.root = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.root.setAttribute("viewBox", `0 0 ${width} ${height}`);
    this.root.setAttribute("class", "strip-chart");
    this.line = doc.createElementNS(SVG_NS, "polyline") as SVGPolylineElement;
    this.line.setAttribute("fill", "none");
    this.line.setAttribute("stroke", "currentColor");
    this.root.appendChild(this.line);
  }

  append(sample: SampleJson): void {
    this.points.push({ t: sample.timestamp, value: sample.engineering });
    const cutoff = sample.timestamp - this.windowMs;
    while (this.points.length > 0 && this.points[0].t < cutoff) {
      this.points.shift();
    }
    this.redraw();
  }

  private redraw(): void {
    if (this.points.length === 0) {
      this.line.setAttribute("points", "");
      return;
    }
    const t1 = this.points[this.points.length - 1].t;
    const t0 = t1 - this.windowMs;
    let lo = Infinity;
    let hi = -Infinity;
    for (const p of this.points) {
      lo = Math.min(lo, p.value);
      hi = Math.max(hi, p.value);
    }
    if (hi - lo < 1e-9) {
      hi = lo + 1; // flat line: pick any finite vertical scale
    }
    const coords = this.points.map((p) => {
      const x = ((p.t - t0) / this.windowMs) * this.width;
      const y = this.height - ((p.value - lo) / (hi - lo)) * this.height;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    });
    this.line.setAttribute("points", coords.join(" "));
  }
}
