/** Browser bootstrap: wires the renderers and the API client to the page.
 *
 * The API base URL comes from ?api=... or a <meta name="api-base"> tag; the
 * session id persists in local storage so a reload resumes the game.
 */
import { ApiClient, ApiError, PlayerView, SessionState, isDone } from "./api.js";
import { playWeek } from "./controller.js";
import { renderState } from "./render.js";

const SESSION_KEY = "supplygame-session";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  if (fromQuery) return fromQuery;
  const meta = document.querySelector('meta[name="api-base"]');
  return meta?.getAttribute("content") ?? "http://127.0.0.1:8000";
}

export async function main(root: HTMLElement): Promise<void> {
  const client = new ApiClient(apiBase());
  let state: SessionState;
  const stored = window.localStorage.getItem(SESSION_KEY);
  try {
    state = stored ? await client.view(stored) : await client.createSession({});
  } catch (e) {
    if (e instanceof ApiError && e.status === 404) {
      window.localStorage.removeItem(SESSION_KEY);
      state = await client.createSession({});
    } else {
      throw e;
    }
  }
  window.localStorage.setItem(SESSION_KEY, state.session_id);

  const draw = (s: SessionState, pending = false, error = "") => {
    root.innerHTML =
      (error ? `<div class="error" role="alert">${error}</div>` : "") +
      renderState(s, pending);
    if (!isDone(s)) attach(s as PlayerView);
  };

  const attach = (view: PlayerView) => {
    const allocForm = root.querySelector<HTMLFormElement>("#allocation-form");
    allocForm?.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      const policy = root.querySelector<HTMLSelectElement>("#allocation-policy")!.value;
      await submit(view, { allocation: policy as never });
    });
    const orderForm = root.querySelector<HTMLFormElement>("#order-form");
    orderForm?.addEventListener("submit", async (ev) => {
      ev.preventDefault();
      const quantity = Number(
        root.querySelector<HTMLInputElement>("#order-quantity")!.value,
      );
      await submit(view, { quantity });
    });
  };

  const submit = async (view: PlayerView, input: Parameters<typeof playWeek>[2]) => {
    draw(view, true);
    try {
      state = await playWeek(client, view, input);
      draw(state);
    } catch (e) {
      // surface the error without losing the week's panel
      draw(view, false, e instanceof Error ? e.message : String(e));
    }
  };

  draw(state);
}
