/** Week-cycle driver shared by the interactive page and scripted playthroughs. */
import {
  AllocationPolicy,
  ApiClient,
  PlayerView,
  SessionState,
  isDone,
} from "./api.js";

export interface WeekInput {
  allocation?: AllocationPolicy;
  quantity?: number;
}

/** Submit the allocation first when prompted, then the order. */
export async function playWeek(
  client: ApiClient,
  view: PlayerView,
  input: WeekInput,
): Promise<SessionState> {
  let current: SessionState = view;
  if (current.awaiting === "Allocation") {
    if (input.allocation === undefined) {
      throw new Error("the session awaits an allocation choice");
    }
    current = await client.submitAllocation(current.session_id, input.allocation);
  }
  if (current.awaiting === "Order") {
    const view2 = current as PlayerView;
    const quantity = input.quantity ?? view2.suggestion;
    if (quantity === undefined) {
      throw new Error("no quantity given and no suggestion available");
    }
    current = await client.submitOrder(current.session_id, quantity);
  }
  return current;
}

export interface Strategy {
  allocation: AllocationPolicy;
  /** Quantity to order; return undefined to accept the suggestion. */
  quantity?: (view: PlayerView) => number | undefined;
}

/** Drive a session from its current state to completion. */
export async function playThrough(
  client: ApiClient,
  start: PlayerView,
  strategy: Strategy,
): Promise<SessionState> {
  let state: SessionState = start;
  while (!isDone(state)) {
    const view = state as PlayerView;
    state = await playWeek(client, view, {
      allocation: strategy.allocation,
      quantity: strategy.quantity?.(view),
    });
  }
  return state;
}
