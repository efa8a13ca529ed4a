import { describe, expect, it } from "vitest";

import { ApiClient, PlayerView, SessionState } from "../src/api.js";
import { playThrough, playWeek } from "../src/controller.js";

function view(overrides: Partial<PlayerView> = {}): PlayerView {
  return {
    session_id: "s1",
    week: 21,
    awaiting: "Order",
    condition: "NoInfo",
    inv: 40,
    dem_hc1: 20,
    dem_hc2: 20,
    blg: 0,
    arrived_shipment: 40,
    oor: 40,
    suggestion: 40,
    ledger: { holding_cost: 0, stockout_cost: 0, revenue: 0, profit: 0, total_profit: 0 },
    ...overrides,
  };
}

/** In-memory double that records calls and replays a scripted state sequence. */
function fakeClient(sequence: SessionState[]) {
  const calls: string[] = [];
  let i = 0;
  const next = () => sequence[i++];
  const client = {
    submitAllocation: async (_sid: string, policy: string) => {
      calls.push(`alloc:${policy}`);
      return next() as PlayerView;
    },
    submitOrder: async (_sid: string, quantity: number) => {
      calls.push(`order:${quantity}`);
      return next();
    },
  } as unknown as ApiClient;
  return { client, calls };
}

const done: SessionState = {
  session_id: "s1",
  week: 56,
  awaiting: "Done",
  condition: "NoInfo",
  weeks_played: 35,
  total_profit: 1,
  total_holding_cost: 1,
  total_stockout_cost: 1,
  total_revenue: 3,
};

describe("playWeek", () => {
  it("submits the explicit quantity", async () => {
    const { client, calls } = fakeClient([view({ week: 22 })]);
    await playWeek(client, view(), { quantity: 17 });
    expect(calls).toEqual(["order:17"]);
  });

  it("falls back to the suggestion", async () => {
    const { client, calls } = fakeClient([view({ week: 22 })]);
    await playWeek(client, view({ suggestion: 42 }), {});
    expect(calls).toEqual(["order:42"]);
  });

  it("submits the allocation before the order", async () => {
    const { client, calls } = fakeClient([view(), view({ week: 22 })]);
    await playWeek(client, view({ awaiting: "Allocation", suggestion: undefined }), {
      allocation: "HC2First",
      quantity: 9,
    });
    expect(calls).toEqual(["alloc:HC2First", "order:9"]);
  });

  it("rejects an allocation week without a chosen policy", async () => {
    const { client } = fakeClient([]);
    await expect(
      playWeek(client, view({ awaiting: "Allocation", suggestion: undefined }), { quantity: 5 }),
    ).rejects.toThrow(/allocation/);
  });
});

describe("playThrough", () => {
  it("drives the session to completion with the strategy", async () => {
    const { client, calls } = fakeClient([
      view({ week: 22, suggestion: 41 }),
      view({ week: 23, awaiting: "Allocation", suggestion: undefined }),
      view({ week: 23, suggestion: 50 }),
      done,
    ]);
    const end = await playThrough(client, view({ suggestion: 40 }), {
      allocation: "Proportional",
    });
    expect(end.awaiting).toBe("Done");
    expect(calls).toEqual(["order:40", "order:41", "alloc:Proportional", "order:50"]);
  });
});
