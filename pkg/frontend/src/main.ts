// Browser bootstrap: a start form for new sessions, or restoration of an
// existing one from the location hash so a reload keeps the exact view.

import { ApiClient } from "./api.js";
import { SessionView } from "./app.js";
import type { ItemSpec } from "./types.js";

const DEMO_ITEMS: ItemSpec[] = Array.from({ length: 8 }, (_, k) => ({
  id: `g${k}`,
  vector: [k, 0],
}));

export function sessionIdFromHash(hash: string): string | null {
  const match = /#session=([0-9a-f]+)/.exec(hash);
  return match ? match[1] : null;
}

export function buildStartForm(
  root: HTMLElement,
  onSubmit: (mode: "continuous" | "discrete", itemsJson: string) => void,
): void {
  const form = document.createElement("form");
  form.className = "start-form";

  const mode = document.createElement("select");
  mode.name = "mode";
  for (const value of ["discrete", "continuous"]) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value;
    mode.appendChild(opt);
  }
  form.appendChild(mode);

  const items = document.createElement("textarea");
  items.name = "items";
  items.value = JSON.stringify(DEMO_ITEMS);
  form.appendChild(items);

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "start";
  form.appendChild(submit);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    onSubmit(mode.value as "continuous" | "discrete", items.value);
  });
  root.appendChild(form);
}

export async function bootstrap(root: HTMLElement, baseUrl: string): Promise<SessionView> {
  const api = new ApiClient(baseUrl);
  const view = new SessionView(api, root, (id) => {
    window.location.hash = `session=${id}`;
  });
  const existing = sessionIdFromHash(window.location.hash);
  if (existing) {
    await view.restore(existing);
    return view;
  }
  buildStartForm(root, (mode, itemsJson) => {
    if (mode === "discrete") {
      void view.start({ mode, items: JSON.parse(itemsJson) });
    } else {
      void view.start({
        mode,
        config: { dim: 2, gamma: 8.0, omega_center: [0.5, 0.5], omega_edge: 1.0 },
      });
    }
  });
  return view;
}

declare global {
  interface Window {
    CKLSEARCH_API?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void bootstrap(
    document.getElementById("app") as HTMLElement,
    window.CKLSEARCH_API ?? "http://127.0.0.1:8000",
  );
}
