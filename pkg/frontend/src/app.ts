/** Portal entry point: login, then mount timeline, chart, and forms. */

import { PortalClient, SampleJson } from "./api.js";
import { StripChart } from "./chart.js";
import { TelemetryStream } from "./stream.js";
import { Timeline } from "./timeline.js";
import { ArWizard, PayloadStateWidget, UerPanel } from "./widgets.js";

const SCHEDULE_POLL_MS = 2000;
const WIDGET_POLL_MS = 1000;
const CHART_WINDOW_MS = 10 * 60_000;

export class PortalApp {
  readonly client: PortalClient;
  readonly timeline: Timeline;
  readonly chart: StripChart;
  readonly wizard: ArWizard;
  readonly uerPanel: UerPanel;
  readonly payloadWidget: PayloadStateWidget;
  private stream: TelemetryStream | null = null;
  private timers: ReturnType<typeof setInterval>[] = [];

  constructor(
    readonly doc: Document,
    baseUrl: string,
    readonly chartPrefix: string,
    payloadPath: string,
  ) {
    this.client = new PortalClient(baseUrl);
    this.timeline = new Timeline(doc);
    this.chart = new StripChart(doc, CHART_WINDOW_MS);
    this.wizard = new ArWizard(doc, this.client);
    this.uerPanel = new UerPanel(doc, this.client);
    this.payloadWidget = new PayloadStateWidget(doc, this.client, payloadPath);
  }

  mount(container: HTMLElement): void {
    container.append(
      this.timeline.root,
      this.chart.root as unknown as HTMLElement,
      this.payloadWidget.root,
      this.wizard.root,
      this.uerPanel.root,
    );
  }

  async start(user: string, password: string): Promise<void> {
    await this.client.login(user, password);
    this.stream = new TelemetryStream(this.client, this.chartPrefix, (s: SampleJson) =>
      this.chart.append(s),
    );
    void this.stream.run();
    this.timers.push(
      setInterval(() => void this.refreshSchedule(), SCHEDULE_POLL_MS),
      setInterval(() => void this.payloadWidget.refresh(), WIDGET_POLL_MS),
    );
    await this.refreshSchedule();
  }

  async refreshSchedule(): Promise<void> {
    const status = await this.client.status();
    const schedule = await this.client.schedule();
    this.timeline.setWindow(status.time_ms - 60_000, status.time_ms + 2 * 3_600_000);
    this.timeline.render(schedule.entries);
  }

  stop(): void {
    this.stream?.stop();
    for (const t of this.timers) {
      clearInterval(t);
    }
    this.timers = [];
  }
}
