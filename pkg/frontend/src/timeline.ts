/** Schedule timeline: one horizontal track of blocks over a time window.
 *
 * Own entries show task and AR ids; foreign entries arrive from the
 * gateway already anonymized and render as plain "occupied" blocks with
 * no identifying attributes.
 */

import { ScheduleEntry } from "./api.js";

const TRACK_HEIGHT_PX = 28;

export class Timeline {
  readonly root: HTMLElement;
  private windowStart = 0;
  private windowEnd = 1;

  constructor(doc: Document) {
    this.root = doc.createElement("div");
    this.root.className = "timeline";
    this.root.style.position = "relative";
    this.root.style.height = `${TRACK_HEIGHT_PX}px`;
  }

  setWindow(startMs: number, endMs: number): void {
    this.windowStart = startMs;
    this.windowEnd = Math.max(endMs, startMs + 1);
  }

  render(entries: ScheduleEntry[]): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    for (const entry of entries) {
      if (entry.end_ms <= this.windowStart || entry.start_ms >= this.windowEnd) {
        continue;
      }
      const block = doc.createElement("div");
      const span = this.windowEnd - this.windowStart;
      const left = (Math.max(entry.start_ms, this.windowStart) - this.windowStart) / span;
      const width = (entry.end_ms - entry.start_ms) / span;
      block.style.position = "absolute";
      block.style.left = `${(left * 100).toFixed(2)}%`;
      block.style.width = `${(width * 100).toFixed(2)}%`;
      block.style.height = "100%";
      if (entry.own) {
        block.className = "timeline-block own";
        block.textContent = `${entry.task_id} (${entry.ar_id})`;
        block.title = `${entry.task_id} [${entry.start_ms}, ${entry.end_ms})`;
        block.dataset.arId = entry.ar_id;
      } else {
        block.className = "timeline-block foreign";
        block.textContent = entry.label;
        block.title = entry.label;
      }
      this.root.appendChild(block);
    }
  }
}
