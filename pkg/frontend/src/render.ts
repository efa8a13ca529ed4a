/** Pure view renderers: session state in, HTML string out.
 *
 * Every number shown comes straight from a server payload field, and the
 * manufacturer-inventory panel exists only when the payload carries the field.
 */
import { CompletionSummary, PlayerView, SessionState, isDone } from "./api.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function stat(label: string, id: string, value: number): string {
  return `<div class="stat"><span class="label">${esc(label)}</span>` +
    `<span class="value" id="${id}">${value}</span></div>`;
}

export function renderBanner(view: PlayerView): string {
  if (view.news === undefined) return "";
  return `<div class="banner" id="news-banner" role="alert">` +
    `Supply disruption announced: manufacturer capacity is reduced.</div>`;
}

export function renderDashboard(view: PlayerView): string {
  const cells = [
    stat("Week", "week", view.week),
    stat("Inventory", "inv", view.inv),
    stat("Demand HC1", "dem-hc1", view.dem_hc1),
    stat("Demand HC2", "dem-hc2", view.dem_hc2),
    stat("Backlog", "blg", view.blg),
    stat("Arrived shipment", "arrived", view.arrived_shipment),
    stat("On order", "oor", view.oor),
  ];
  if (view.manufacturer_inventory !== undefined) {
    cells.push(stat("Manufacturer inventory", "manufacturer-inventory", view.manufacturer_inventory));
  }
  const l = view.ledger;
  const ledger =
    `<div class="ledger">` +
    stat("Holding cost", "holding-cost", l.holding_cost) +
    stat("Stockout cost", "stockout-cost", l.stockout_cost) +
    stat("Revenue", "revenue", l.revenue) +
    stat("Week profit", "profit", l.profit) +
    stat("Total profit", "total-profit", l.total_profit) +
    `</div>`;
  return `<div class="dashboard">${cells.join("")}${ledger}</div>`;
}

export function renderAllocationForm(view: PlayerView): string {
  if (view.awaiting !== "Allocation") return "";
  const options = ["Proportional", "HC1First", "HC2First"]
    .map((p) => `<option value="${p}">${p}</option>`)
    .join("");
  return `<form id="allocation-form">` +
    `<label for="allocation-policy">Inventory is short: choose an allocation</label>` +
    `<select id="allocation-policy" name="policy">${options}</select>` +
    `<button type="submit">Allocate</button></form>`;
}

export function renderOrderForm(view: PlayerView): string {
  if (view.awaiting !== "Order") return "";
  const suggestion = view.suggestion ?? 0;
  return `<form id="order-form">` +
    `<label for="order-quantity">Order (suggested: <span id="suggestion">${suggestion}</span>)</label>` +
    `<input type="number" id="order-quantity" name="quantity" min="0" value="${suggestion}">` +
    `<button type="submit">Place order</button></form>`;
}

export function renderSummary(summary: CompletionSummary): string {
  return `<div class="summary" id="game-over">` +
    `<h2>Game over</h2>` +
    stat("Weeks played", "weeks-played", summary.weeks_played) +
    stat("Total revenue", "total-revenue", summary.total_revenue) +
    stat("Total holding cost", "total-holding-cost", summary.total_holding_cost) +
    stat("Total stockout cost", "total-stockout-cost", summary.total_stockout_cost) +
    stat("Total profit", "final-profit", summary.total_profit) +
    `</div>`;
}

export function renderState(state: SessionState, pending = false): string {
  if (isDone(state)) return renderSummary(state);
  const view = state as PlayerView;
  const disabled = pending ? `<fieldset disabled>` : "";
  const closer = pending ? `</fieldset>` : "";
  return (
    renderBanner(view) +
    renderDashboard(view) +
    disabled +
    renderAllocationForm(view) +
    renderOrderForm(view) +
    closer
  );
}
