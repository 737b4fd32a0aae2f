import { ServiceClient } from "./api.js";
import { ClosetEditor, RecommendPanel, ScoreProbe } from "./components.js";
import { ClosetState } from "./state.js";

export interface App {
  state: ClosetState;
  closet: ClosetEditor;
  recommend: RecommendPanel;
  probe: ScoreProbe;
}

/** Wire the three views into the given roots; exported for tests. */
export function createApp(baseUrl: string, doc: Document = document): App {
  const client = new ServiceClient(baseUrl);
  const state = new ClosetState();
  const closet = new ClosetEditor(doc.getElementById("closet-view")!, client, state);
  const recommend = new RecommendPanel(doc.getElementById("recommend-view")!, client, state);
  const probe = new ScoreProbe(doc.getElementById("probe-view")!, client, state);
  return { state, closet, recommend, probe };
}

declare global {
  interface Window {
    app?: App;
  }
}

if (typeof window !== "undefined" && document.getElementById("closet-view")) {
  const baseUrl =
    new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8787";
  const app = createApp(baseUrl);
  window.app = app;
  void app.closet.init();
}
