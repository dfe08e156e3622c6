// Scripted browser-style tests driving the session UI against the mock
// backend with jsdom.

// @vitest-environment jsdom

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionView } from "../src/app.js";
import { rectToPixels, worldToPixel } from "../src/canvas.js";
import { buildStartForm, sessionIdFromHash } from "../src/main.js";
import type { ItemSpec } from "../src/types.js";
import { MockBackend } from "./mock_server.js";

const LINE_ITEMS: ItemSpec[] = Array.from({ length: 8 }, (_, k) => ({
  id: `g${k}`,
  vector: [k, 0],
}));

function setup() {
  const backend = new MockBackend();
  const api = new ApiClient("http://mock", backend.fetch);
  const root = document.createElement("div");
  document.body.appendChild(root);
  const view = new SessionView(api, root);
  return { backend, api, root, view };
}

function pendingIds(root: HTMLElement): string[] {
  return Array.from(root.querySelectorAll<HTMLButtonElement>(".item-card")).map(
    (el) => el.dataset.itemId!,
  );
}

function clickItem(root: HTMLElement, id: string): void {
  const card = Array.from(root.querySelectorAll<HTMLButtonElement>(".item-card")).find(
    (el) => el.dataset.itemId === id,
  );
  expect(card).toBeDefined();
  card!.click();
}

async function settle(): Promise<void> {
  // let the click's async handler finish
  await new Promise((resolve) => setTimeout(resolve, 0));
  await new Promise((resolve) => setTimeout(resolve, 0));
}

describe("discrete session UI", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("drives an 8-item session to termination with monotone top-1 belief", async () => {
    const { root, view } = setup();
    await view.start({ mode: "discrete", items: LINE_ITEMS });
    const target = "g5";
    let topProb = view.topBeliefProb();
    expect(topProb).toBeCloseTo(1 / 8, 10);
    let clicks = 0;
    for (let guard = 0; guard < 10; guard++) {
      const ids = pendingIds(root);
      if (ids.length === 0) break; // terminal
      expect(ids).toHaveLength(2);
      if (ids.includes(target)) {
        const targetBtn = Array.from(
          root.querySelectorAll<HTMLButtonElement>(".is-target"),
        ).find((el) => el.dataset.itemId === target);
        targetBtn!.click();
        await settle();
        clicks += 1;
        break;
      }
      // answer consistently with the fixed target: pick the closer item
      const dist = (id: string) => Math.abs(Number(id.slice(1)) - Number(target.slice(1)));
      const choice = dist(ids[0]) <= dist(ids[1]) ? ids[0] : ids[1];
      clickItem(root, choice);
      await settle();
      clicks += 1;
      // history count increments with every answered click
      const status = root.querySelector<HTMLElement>(".status")!;
      expect(Number(status.dataset.history)).toBe(clicks);
      // top-1 belief never decreases under consistent answers
      const newTop = view.topBeliefProb();
      expect(newTop).toBeGreaterThanOrEqual(topProb - 1e-12);
      topProb = newTop;
    }
    const terminal = root.querySelector(".terminal");
    expect(terminal).not.toBeNull();
    expect(terminal!.textContent).toContain(`found ${target}`);
    expect(terminal!.textContent).toContain("steps");
  });

  it("restores the identical pending query after a reload", async () => {
    const { backend, root, view } = setup();
    await view.start({ mode: "discrete", items: LINE_ITEMS });
    const ids = pendingIds(root);
    clickItem(root, ids[0]);
    await settle();
    const pendingBefore = view.state!.pending!;

    // a fresh view over the same backend = page reload via hash restore
    const root2 = document.createElement("div");
    document.body.appendChild(root2);
    const view2 = new SessionView(new ApiClient("http://mock", backend.fetch), root2);
    await view2.restore(view.state!.session_id);
    expect(view2.state!.pending).toEqual(pendingBefore);
    expect(pendingIds(root2)).toEqual(pendingIds(root));
    expect(view2.state!.history_length).toBe(view.state!.history_length);
  });

  it("sends exactly one answer on a double click", async () => {
    const { backend, root, view } = setup();
    await view.start({ mode: "discrete", items: LINE_ITEMS });
    const ids = pendingIds(root);
    const card = Array.from(root.querySelectorAll<HTMLButtonElement>(".item-card")).find(
      (el) => el.dataset.itemId === ids[0],
    )!;
    card.click();
    card.click(); // in-flight guard swallows the second click
    await settle();
    expect(backend.answerPosts).toBe(1);
    expect(view.state!.history_length).toBe(1);
  });

  it("silently refetches on a stale-nonce conflict", async () => {
    const { backend, root, view } = setup();
    await view.start({ mode: "discrete", items: LINE_ITEMS });
    // answer out of band so the view's nonce goes stale
    const sid = view.state!.session_id;
    const session = backend.sessions.get(sid)!;
    const staleIds = pendingIds(root);
    await backend.fetch(`http://mock/sessions/${sid}/answer`, {
      method: "POST",
      body: JSON.stringify({ nonce: session.nonce, choice: staleIds[0] }),
    });
    clickItem(root, staleIds[0]);
    await settle();
    // no error banner; the view mirrors the refetched server state
    expect(root.querySelector(".error-banner")).toBeNull();
    expect(view.state!.history_length).toBe(1);
  });

  it("shows an error banner when the API is down", async () => {
    const { backend, root, view } = setup();
    backend.failNext = 500;
    await view.start({ mode: "discrete", items: LINE_ITEMS });
    expect(root.querySelector(".error-banner")).not.toBeNull();
  });

  it("start form submits a discrete manifest", async () => {
    const { root } = setup();
    let submitted: [string, string] | null = null;
    buildStartForm(root, (mode, itemsJson) => {
      submitted = [mode, itemsJson];
    });
    const form = root.querySelector("form")!;
    form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    expect(submitted).not.toBeNull();
    expect(submitted![0]).toBe("discrete");
    expect(JSON.parse(submitted![1])).toHaveLength(8);
  });
});

describe("view helpers", () => {
  it("parses the session hash", () => {
    expect(sessionIdFromHash("#session=abc123")).toBe("abc123");
    expect(sessionIdFromHash("")).toBeNull();
    expect(sessionIdFromHash("#other=1")).toBeNull();
  });

  it("maps world coordinates to pixels", () => {
    const v = {
      width: 420,
      height: 420,
      omegaCenter: [0.5, 0.5] as [number, number],
      omegaEdge: 1.0,
      margin: 20,
    };
    // domain corners land on the padded square, y axis flipped
    expect(worldToPixel(v, 0, 0)).toEqual([20, 400]);
    expect(worldToPixel(v, 1, 1)).toEqual([400, 20]);
    const rect = rectToPixels(v, [0.5, 0.5], 0.5);
    expect(rect.size).toBeCloseTo(190, 6);
    expect(rect.left).toBeCloseTo(115, 6);
  });
});
