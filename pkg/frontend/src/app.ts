// Operator console: session setup, sticky class-label toggle,
// synchronized capture, live verdict panel, demo-accuracy bookkeeping.

import { ServiceClient, ServiceError } from "./api";
import type { ClassLabel } from "./api";
import {
  canAct,
  ConsoleState,
  formatAccuracy,
  formatVerdict,
  initialState,
} from "./state";

const TEMPLATE = `
  <div id="offline-banner" class="banner" hidden>service offline</div>
  <section class="panel" id="session-panel">
    <h2>Session</h2>
    <label>Room <input id="room" value="Atrium"></label>
    <label>Liquid <input id="liquid" value="water"></label>
    <button id="start-session">Start session</button>
    <span id="session-id" class="muted"></span>
    <div class="toggle">
      <button id="label-spill" data-label="spill">spill</button>
      <button id="label-no-spill" data-label="no_spill" class="active">no spill</button>
    </div>
  </section>
  <section class="panel" id="capture-panel">
    <h2>Capture</h2>
    <button id="capture" disabled>Capture pair</button>
    <div>spill: <span id="count-spill">0</span>
         no spill: <span id="count-no-spill">0</span></div>
    <div id="last-saved" class="muted"></div>
  </section>
  <section class="panel" id="live-panel">
    <h2>Live verdict</h2>
    <div id="verdict" class="verdict">waiting</div>
    <div>demo accuracy: <span id="demo-accuracy">-</span></div>
    <button id="outcome-correct" disabled>verdict correct</button>
    <button id="outcome-wrong" disabled>verdict wrong</button>
  </section>
  <div id="error" class="error" hidden></div>
`;

export class ConsoleApp {
  readonly state: ConsoleState = initialState();
  private inflight: Promise<void> = Promise.resolve();
  private timers: number[] = [];

  constructor(
    private readonly rootEl: HTMLElement,
    private readonly client: ServiceClient,
  ) {
    rootEl.innerHTML = TEMPLATE;
    this.el("start-session").addEventListener("click", () => this.run(() => this.startSession()));
    this.el("label-spill").addEventListener("click", () => this.run(() => this.setLabel("spill")));
    this.el("label-no-spill").addEventListener("click", () => this.run(() => this.setLabel("no_spill")));
    this.el("capture").addEventListener("click", () => this.run(() => this.capture()));
    this.el("outcome-correct").addEventListener("click", () => this.run(() => this.markOutcome(true)));
    this.el("outcome-wrong").addEventListener("click", () => this.run(() => this.markOutcome(false)));
    this.render();
  }

  // poll loops are opt-in so tests can drive the app deterministically
  startPolling(healthMs = 2000, verdictMs = 500): void {
    this.timers.push(window.setInterval(() => this.run(() => this.checkHealth()), healthMs));
    this.timers.push(window.setInterval(() => this.run(() => this.pollVerdict()), verdictMs));
    void this.run(() => this.checkHealth());
  }

  stop(): void {
    for (const t of this.timers) window.clearInterval(t);
    this.timers = [];
  }

  /** Resolves when every queued action has settled; test hook. */
  idle(): Promise<void> {
    return this.inflight;
  }

  private run(action: () => Promise<void>): Promise<void> {
    this.inflight = this.inflight.then(action).catch((err) => {
      this.onError(err);
    }).then(() => this.render());
    return this.inflight;
  }

  private el(id: string): HTMLElement {
    const node = this.rootEl.querySelector(`#${id}`);
    if (!node) throw new Error(`missing element #${id}`);
    return node as HTMLElement;
  }

  async checkHealth(): Promise<void> {
    try {
      await this.client.health();
      this.state.connection = "connected";
      this.state.lastError = null;
    } catch {
      this.state.connection = "offline";
    }
  }

  async startSession(): Promise<void> {
    await this.checkHealth();
    if (this.state.connection !== "connected") return;
    this.state.room = (this.el("room") as HTMLInputElement).value;
    this.state.liquid = (this.el("liquid") as HTMLInputElement).value;
    this.state.sessionId = await this.client.startSession(this.state.room, this.state.liquid);
    this.state.counts = { spill: 0, no_spill: 0 };
    this.state.demoAccuracy = null;
    this.state.latestVerdict = null;
    this.state.classLabel = "no_spill";
  }

  async setLabel(label: ClassLabel): Promise<void> {
    if (!canAct(this.state)) return;
    await this.client.setLabel(label);
    this.state.classLabel = label;   // sticky until toggled again
  }

  async capture(): Promise<void> {
    if (!canAct(this.state)) return;
    const result = await this.client.capture();
    this.state.counts[this.state.classLabel] += 1;
    this.state.latestVerdict = result.verdict;
    this.el("last-saved").textContent =
      `saved pair ${result.pair_index} (${this.state.classLabel})`;
  }

  async pollVerdict(): Promise<void> {
    if (this.state.connection !== "connected") return;
    const verdict = await this.client.latestVerdict();
    if (verdict) this.state.latestVerdict = verdict;
  }

  async markOutcome(correct: boolean): Promise<void> {
    const v = this.state.latestVerdict;
    if (!canAct(this.state) || !v) return;
    const truth: ClassLabel = correct
      ? v.label
      : v.label === "spill" ? "no_spill" : "spill";
    this.state.demoAccuracy = await this.client.recordOutcome(v.frame_ref, truth);
  }

  private onError(err: unknown): void {
    if (err instanceof ServiceError && err.status >= 500) {
      this.state.connection = "degraded";
    }
    this.state.lastError = err instanceof Error ? err.message : String(err);
  }

  render(): void {
    const s = this.state;
    const idle = canAct(s);
    this.el("offline-banner").hidden = s.connection === "connected";
    (this.el("capture") as HTMLButtonElement).disabled = !idle;
    (this.el("start-session") as HTMLButtonElement).disabled = s.connection !== "connected";
    const haveVerdict = idle && s.latestVerdict !== null;
    (this.el("outcome-correct") as HTMLButtonElement).disabled = !haveVerdict;
    (this.el("outcome-wrong") as HTMLButtonElement).disabled = !haveVerdict;

    this.el("session-id").textContent = s.sessionId ?? "no session";
    this.el("label-spill").classList.toggle("active", s.classLabel === "spill");
    this.el("label-no-spill").classList.toggle("active", s.classLabel === "no_spill");
    this.el("count-spill").textContent = String(s.counts.spill);
    this.el("count-no-spill").textContent = String(s.counts.no_spill);
    this.el("verdict").textContent =
      s.latestVerdict ? formatVerdict(s.latestVerdict) : "waiting";
    this.el("demo-accuracy").textContent = formatAccuracy(s.demoAccuracy);
    const errorEl = this.el("error");
    errorEl.hidden = s.lastError === null;
    errorEl.textContent = s.lastError ?? "";
  }
}
