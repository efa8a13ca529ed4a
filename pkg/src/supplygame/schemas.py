"""Wire-format models for the session service.

Field names here are the protocol; the web client and the thin CLI client
both bind to them. `manufacturer_inventory` is omitted (not null) from
serialized views outside the Info condition.
"""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

AWAITING_ALLOCATION = "Allocation"
AWAITING_ORDER = "Order"
AWAITING_DONE = "Done"

NEWS_DISRUPTION = "capacity_disruption"


class CreateSessionRequest(BaseModel):
    condition: Optional[str] = None  # NoInfo | Info; random when omitted
    seed: Optional[int] = None
    player_id: Optional[str] = None


class AllocationRequest(BaseModel):
    policy: str  # HC1First | HC2First | Proportional


class OrderRequest(BaseModel):
    quantity: int = Field(ge=0)


class LedgerView(BaseModel):
    holding_cost: int
    stockout_cost: int
    revenue: int
    profit: int
    total_profit: int


class PlayerView(BaseModel):
    session_id: str
    week: int
    awaiting: str  # Allocation | Order | Done
    condition: str
    inv: int
    dem_hc1: int
    dem_hc2: int
    blg: int
    arrived_shipment: int
    oor: int
    suggestion: Optional[int] = None  # known once shipping is resolved
    manufacturer_inventory: Optional[int] = None  # Info condition only
    news: Optional[str] = None  # set exactly at the announcement week
    ledger: LedgerView


class CompletionSummary(BaseModel):
    session_id: str
    week: int
    awaiting: str
    condition: str
    weeks_played: int
    total_profit: int
    total_holding_cost: int
    total_stockout_cost: int
    total_revenue: int


class HealthView(BaseModel):
    status: str
    sessions: int
