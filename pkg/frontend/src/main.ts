/**
 * Bootstrap: create the session, guard against reloads and back
 * navigation (both invalidate the session per study policy), and hand
 * control to the screen flow.
 *
 * Configuration comes from query parameters:
 *   ?api=http://host:port   study-service base URL (default: same origin)
 *   &mode=random|forced     assignment mode
 *   &seed=123               session seed
 *   &bonus=b10&arm=q6&quiz=1  forced treatment cell
 */

import { StudyApi, Treatment } from "./api.js";
import { FlowOptions, ParticipantApp } from "./flow.js";
import { renderDead } from "./ui.js";

const ACTIVE_KEY = "knaplab-active-session";

function optionsFromQuery(params: URLSearchParams): FlowOptions {
  const options: FlowOptions = {
    mode: params.get("mode") ?? "random",
    seed: params.has("seed") ? Number(params.get("seed")) : undefined,
  };
  if (options.mode === "forced") {
    const treatment: Treatment = {
      bonus: params.get("bonus") ?? "b10",
      ml_arm: params.get("arm") ?? "none",
      comprehension_quiz: params.get("quiz") === "1",
    };
    options.treatment = treatment;
  }
  return options;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const params = new URLSearchParams(window.location.search);
  const api = new StudyApi(params.get("api") ?? "");

  const stale = sessionStorage.getItem(ACTIVE_KEY);
  if (stale) {
    // the page loaded while a session was marked active: that is a reload
    sessionStorage.removeItem(ACTIVE_KEY);
    await api.invalidate(stale, "reload").catch(() => undefined);
    renderDead(root, "reload");
    return;
  }

  const app = new ParticipantApp(root, api, optionsFromQuery(params));
  const session = await app.start();
  sessionStorage.setItem(ACTIVE_KEY, session.session_id);

  history.pushState({ knaplab: true }, "");
  window.addEventListener("popstate", () => {
    sessionStorage.removeItem(ACTIVE_KEY);
    void app.invalidate("back-navigation");
  });
}

void boot();
