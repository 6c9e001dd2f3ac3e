/** Browser entry point. The API origin defaults to the page's own origin
 * (the bundled static server proxies API paths); override with ?api=. */

import { ApiClient } from "./api.js";
import { createApp } from "./app.js";

function mount(id: string): HTMLElement {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element;
}

const apiBase =
  new URLSearchParams(window.location.search).get("api") ?? "";

createApp(
  {
    input: mount("prefix") as HTMLInputElement,
    banner: mount("banner"),
    panes: mount("panes"),
    history: mount("history"),
    toggles: mount("toggles"),
  },
  new ApiClient(apiBase),
);
