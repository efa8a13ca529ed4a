/** Typed client for the session service; field names mirror the wire format. */

export interface LedgerView {
  holding_cost: number;
  stockout_cost: number;
  revenue: number;
  profit: number;
  total_profit: number;
}

export interface PlayerView {
  session_id: string;
  week: number;
  awaiting: "Allocation" | "Order" | "Done";
  condition: "NoInfo" | "Info";
  inv: number;
  dem_hc1: number;
  dem_hc2: number;
  blg: number;
  arrived_shipment: number;
  oor: number;
  suggestion?: number;
  manufacturer_inventory?: number;
  news?: string;
  ledger: LedgerView;
}

export interface CompletionSummary {
  session_id: string;
  week: number;
  awaiting: "Done";
  condition: string;
  weeks_played: number;
  total_profit: number;
  total_holding_cost: number;
  total_stockout_cost: number;
  total_revenue: number;
}

export type SessionState = PlayerView | CompletionSummary;

export type AllocationPolicy = "HC1First" | "HC2First" | "Proportional";

export interface CreateSessionOptions {
  condition?: "NoInfo" | "Info";
  seed?: number;
  player_id?: string;
}

export function isDone(state: SessionState): state is CompletionSummary {
  return state.awaiting === "Done";
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const data = await resp.json();
        if (data && typeof data.detail === "string") detail = data.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(opts: CreateSessionOptions = {}): Promise<PlayerView> {
    return this.request("POST", "/sessions", opts);
  }

  view(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}/view`);
  }

  submitAllocation(sessionId: string, policy: AllocationPolicy): Promise<PlayerView> {
    return this.request("POST", `/sessions/${sessionId}/allocation`, { policy });
  }

  submitOrder(sessionId: string, quantity: number): Promise<SessionState> {
    return this.request("POST", `/sessions/${sessionId}/order`, { quantity });
  }

  async telemetry(sessionId: string): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/telemetry`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }
}
