// Session view controller: renders the pending query, captures clicks,
// and keeps the view an exact mirror of GET /sessions/{id}.

import { ApiClient, ApiConflictError } from "./api.js";
import { drawContinuousView, Viewport } from "./canvas.js";
import type {
  ContinuousBeliefSummary,
  DiscreteBeliefSummary,
  ItemRef,
  PointRef,
  SessionState,
} from "./types.js";

export class SessionView {
  state: SessionState | null = null;
  private inFlight = false;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
    private onSessionId: (id: string) => void = () => {},
  ) {}

  async start(body: Parameters<ApiClient["createSession"]>[0]): Promise<void> {
    try {
      this.state = await this.api.createSession(body);
      this.onSessionId(this.state.session_id);
      this.render();
    } catch (err) {
      this.renderError(err);
    }
  }

  async restore(sessionId: string): Promise<void> {
    try {
      this.state = await this.api.getState(sessionId);
      this.render();
    } catch (err) {
      this.renderError(err);
    }
  }

  // one answer at a time: repeated clicks while a request is in flight
  // are ignored, and a stale-nonce conflict silently refetches the state
  async answerClick(choice: string, isTarget = false): Promise<void> {
    if (this.inFlight || !this.state || !this.state.pending) {
      return;
    }
    this.inFlight = true;
    const sessionId = this.state.session_id;
    const nonce = this.state.pending.nonce;
    try {
      this.state = await this.api.answer(sessionId, {
        nonce,
        choice,
        is_target: isTarget,
      });
      this.render();
    } catch (err) {
      if (err instanceof ApiConflictError) {
        this.state = await this.api.getState(sessionId);
        this.render();
      } else {
        this.renderError(err);
      }
    } finally {
      this.inFlight = false;
    }
  }

  render(): void {
    const state = this.state;
    if (!state) {
      return;
    }
    this.root.innerHTML = "";
    this.root.appendChild(this.statusLine(state));
    if (state.terminal) {
      this.root.appendChild(this.terminalView(state));
    } else if (state.pending) {
      if (state.pending.kind === "items") {
        this.root.appendChild(this.itemPair(state));
      } else {
        this.root.appendChild(this.pointPair(state));
      }
    }
    this.root.appendChild(this.beliefPanel(state));
  }

  private statusLine(state: SessionState): HTMLElement {
    const div = document.createElement("div");
    div.className = "status";
    div.dataset.history = String(state.history_length);
    div.textContent = `session ${state.session_id} | answers: ${state.history_length}`;
    return div;
  }

  private terminalView(state: SessionState): HTMLElement {
    const div = document.createElement("div");
    div.className = "terminal";
    const t = state.terminal!;
    if (t.found) {
      div.textContent = `found ${t.target_id} in ${t.steps} steps`;
    } else {
      div.textContent = `budget exhausted after ${t.queries} answers; region edge ${t.region_edge}`;
    }
    return div;
  }

  private itemPair(state: SessionState): HTMLElement {
    const wrap = document.createElement("div");
    wrap.className = "pair";
    const pending = state.pending!;
    for (const side of ["a", "b"] as const) {
      const ref = pending[side] as ItemRef;
      const card = document.createElement("button");
      card.className = "item-card";
      card.dataset.itemId = ref.id;
      if (ref.display_url) {
        const img = document.createElement("img");
        img.src = ref.display_url;
        img.alt = ref.id;
        card.appendChild(img);
      }
      const label = document.createElement("span");
      label.textContent = ref.id;
      card.appendChild(label);
      card.addEventListener("click", () => void this.answerClick(ref.id));
      wrap.appendChild(card);

      const isTarget = document.createElement("button");
      isTarget.className = "is-target";
      isTarget.dataset.itemId = ref.id;
      isTarget.textContent = `${ref.id} is my target`;
      isTarget.addEventListener("click", () => void this.answerClick(ref.id, true));
      wrap.appendChild(isTarget);
    }
    return wrap;
  }

  private pointPair(state: SessionState): HTMLElement {
    const wrap = document.createElement("div");
    wrap.className = "pair";
    const pending = state.pending!;
    const belief = state.belief as ContinuousBeliefSummary;
    const canvas = document.createElement("canvas");
    canvas.width = 420;
    canvas.height = 420;
    wrap.appendChild(canvas);
    const a = (pending.a as PointRef).coords;
    const b = (pending.b as PointRef).coords;
    if (a.length === 2) {
      const viewport: Viewport = {
        width: canvas.width,
        height: canvas.height,
        omegaCenter: [0.5, 0.5],
        omegaEdge: 1.0,
        margin: 20,
      };
      drawContinuousView(
        canvas,
        viewport,
        [belief.region_center[0], belief.region_center[1]],
        belief.region_edge,
        [a[0], a[1]],
        [b[0], b[1]],
      );
    }
    for (const side of ["a", "b"] as const) {
      const coords = (pending[side] as PointRef).coords;
      const btn = document.createElement("button");
      btn.className = "point-choice";
      btn.dataset.side = side;
      btn.textContent = `${side.toUpperCase()} (${coords.map((c) => c.toFixed(3)).join(", ")})`;
      btn.addEventListener("click", () => void this.answerClick(side));
      wrap.appendChild(btn);
    }
    return wrap;
  }

  private beliefPanel(state: SessionState): HTMLElement {
    const div = document.createElement("div");
    div.className = "belief";
    if (state.belief.kind === "discrete") {
      const belief = state.belief as DiscreteBeliefSummary;
      const list = document.createElement("ol");
      list.className = "top-items";
      for (const entry of belief.top) {
        const li = document.createElement("li");
        li.dataset.prob = String(entry.prob);
        li.textContent = `${entry.id}: ${(entry.prob * 100).toFixed(1)}%`;
        list.appendChild(li);
      }
      div.appendChild(list);
    } else {
      const belief = state.belief as ContinuousBeliefSummary;
      div.textContent =
        `region edge ${belief.region_edge.toPrecision(3)} at depth ${belief.depth}, ` +
        `mass ${(belief.region_mass * 100).toFixed(1)}%`;
    }
    return div;
  }

  renderError(err: unknown): void {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent = err instanceof Error ? err.message : String(err);
    this.root.prepend(banner);
  }

  topBeliefProb(): number {
    if (!this.state || this.state.belief.kind !== "discrete") {
      return NaN;
    }
    return Math.max(...this.state.belief.top.map((t) => t.prob));
  }
}
