"""Discrete-time engine for the six-agent drug distribution network.

Two manufacturers feed two wholesalers (one dedicated supplier each); two
health centers order from both wholesalers and serve a constant patient
demand. Each week runs a fixed cycle:

  1. receive arrivals (in-transit shipments land, on-order decremented)
  2. manufacturers produce, capped by (possibly disrupted) capacity
  3. last week's orders arrive as demand; patient demand materializes
  4. ship: backlog first (oldest first), then new demand, allocation
     policy splitting short wholesaler inventory between the health centers
  5. place upstream orders (order-up-to for scripted agents)
  6. accrue the week's ledger

Snapshots are taken after step 4, so the order suggestion is computable from
the post-shipment state. All quantities are nonnegative integers and every
run is deterministic given (config, seed, decisions).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import agents as agents_mod
from .agents import BehavioralOrderer, BehavioralPolicy, TrustState

ROLES = ("MN1", "MN2", "WS1", "WS2", "HC1", "HC2")
MANUFACTURERS = ("MN1", "MN2")
WHOLESALERS = ("WS1", "WS2")
HEALTH_CENTERS = ("HC1", "HC2")

SUPPLIERS: Dict[str, Tuple[str, ...]] = {
    "MN1": (), "MN2": (),
    "WS1": ("MN1",), "WS2": ("MN2",),
    "HC1": ("WS1", "WS2"), "HC2": ("WS1", "WS2"),
}
CUSTOMERS: Dict[str, Tuple[str, ...]] = {
    "MN1": ("WS1",), "MN2": ("WS2",),
    "WS1": ("HC1", "HC2"), "WS2": ("HC1", "HC2"),
    "HC1": (), "HC2": (),
}

PATIENTS = "PATIENTS"  # pseudo-customer for health center consumption

HOLDING_COST = 1
STOCKOUT_COST = 10
UNIT_REVENUE = 5
LEAD_TIME = 2  # one week order processing + one week shipping

NO_INFO = "NoInfo"
INFO = "Info"
CONDITIONS = (NO_INFO, INFO)

ALLOC_AUTO = "Auto"
ALLOC_HC1_FIRST = "HC1First"
ALLOC_HC2_FIRST = "HC2First"
ALLOC_PROPORTIONAL = "Proportional"
ALLOCATION_POLICIES = (ALLOC_AUTO, ALLOC_HC1_FIRST, ALLOC_HC2_FIRST, ALLOC_PROPORTIONAL)

DEFAULT_BASE_STOCK = {"MN1": 160, "MN2": 160, "WS1": 120, "WS2": 120, "HC1": 80, "HC2": 80}


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class DisruptionEvent:
    """Capacity cut at a manufacturer during [start_week, end_week]."""

    target: str
    start_week: int
    end_week: int
    capacity_multiplier: float = 0.05

    def __post_init__(self):
        if self.start_week > self.end_week:
            raise ValueError("start_week must be <= end_week")
        if not 0.0 <= self.capacity_multiplier <= 1.0:
            raise ValueError("capacity_multiplier must be in [0, 1]")

    def active(self, week: int) -> bool:
        return self.start_week <= week <= self.end_week


@dataclass
class ScenarioConfig:
    horizon: int = 35
    start_week: int = 21
    warmup_weeks: int = 4
    hc_consumption: int = 40
    base_stock: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BASE_STOCK))
    manufacturer_capacity: int = 56
    disruptions: List[DisruptionEvent] = field(
        default_factory=lambda: [DisruptionEvent("MN1", 28, 33, 0.05)]
    )
    announcement_week: int = 28
    condition: str = NO_INFO
    trust_smoothing: float = 0.7
    rng_seed: int = 0

    def validate(self) -> None:
        if self.horizon < 1:
            raise SimulationError("horizon must be >= 1")
        if self.condition not in CONDITIONS:
            raise SimulationError(f"unknown condition: {self.condition!r}")
        for a in ROLES:
            if self.base_stock.get(a, 0) <= 0:
                raise SimulationError(f"base stock for {a} must be > 0")
        if not (0.0 < self.trust_smoothing < 1.0):
            raise SimulationError("trust_smoothing must be in (0, 1)")
        if not (self.start_week <= self.announcement_week < self.start_week + self.horizon):
            raise SimulationError("announcement_week must fall within the horizon")

    @property
    def end_week(self) -> int:
        return self.start_week + self.horizon - 1


@dataclass(frozen=True)
class AgentSnapshot:
    """Post-shipment weekly state: the six analysis parameters."""

    week: int
    inv: int
    dem_hc1: int
    dem_hc2: int
    blg: int
    shp: int
    oor: int


@dataclass(frozen=True)
class LedgerEntry:
    week: int
    holding_cost: int
    stockout_cost: int
    revenue: int

    @property
    def profit(self) -> int:
        return self.revenue - self.holding_cost - self.stockout_cost


@dataclass(frozen=True)
class WeekRow:
    """One exported telemetry row for the player agent (WS1)."""

    week: int
    agent: str
    inv: int
    dem_hc1: int
    dem_hc2: int
    blg: int
    shp: int
    oor: int
    suggestion: int
    order: int
    ship_hc1: int
    ship_hc2: int
    holding: int
    stockout: int
    revenue: int
    profit: int
    alloc: str

    @property
    def deviation(self) -> int:
        return self.order - self.suggestion


@dataclass
class EpisodeRecord:
    """One player's full telemetry from start_week to the end of the horizon."""

    player_id: str
    condition: str
    seed: int
    truth: Optional[str]
    start_week: int
    weeks: List[WeekRow] = field(default_factory=list)

    def total_profit(self) -> int:
        return sum(r.profit for r in self.weeks)

    def horizon(self) -> int:
        return len(self.weeks)


@dataclass
class Decision:
    order: int
    allocation: Optional[str] = None


def compute_suggestion(base_stock: int, inv: int, oor: int, blg: int) -> int:
    """Order-up-to suggestion: max(0, S - inventory position)."""
    return max(0, base_stock - (inv + oor - blg))


def apply_allocation(policy: str, inv: int, dem_hc1: int, dem_hc2: int) -> Tuple[int, int]:
    """Split available inventory between the two health centers.

    Always ships min(inv, dem_hc1 + dem_hc2) in total. Auto ships demand
    exactly when inventory suffices and falls back to a proportional split
    otherwise. Proportional uses largest-remainder rounding on demand shares.
    """
    if policy not in ALLOCATION_POLICIES:
        raise ValueError(f"unknown allocation policy: {policy!r}")
    if inv < 0 or dem_hc1 < 0 or dem_hc2 < 0:
        raise ValueError("allocation inputs must be nonnegative")
    total = dem_hc1 + dem_hc2
    if inv >= total:
        return dem_hc1, dem_hc2
    if policy == ALLOC_HC1_FIRST:
        s1 = min(inv, dem_hc1)
        return s1, min(inv - s1, dem_hc2)
    if policy == ALLOC_HC2_FIRST:
        s2 = min(inv, dem_hc2)
        return min(inv - s2, dem_hc1), s2
    if policy in (ALLOC_PROPORTIONAL, ALLOC_AUTO):
        s1, s2 = agents_mod.largest_remainder(inv, [dem_hc1, dem_hc2])
        return s1, s2
    raise ValueError(f"unknown allocation policy: {policy!r}")


@dataclass
class _BacklogEntry:
    week: int
    customer: str
    qty: int


class _AgentState:
    def __init__(self, name: str):
        self.name = name
        self.inv = 0
        self.backlog: deque = deque()  # _BacklogEntry, oldest first
        self.in_transit: Dict[int, Dict[str, int]] = {}  # arrival week -> supplier -> qty
        self.incoming_orders: Dict[int, Dict[str, int]] = {}  # week -> customer -> qty
        self.oor: Dict[str, int] = {s: 0 for s in SUPPLIERS[name]}
        # cumulative flow counters for conservation checks
        self.initial_inv = 0
        self.received_total = 0  # arrivals + production
        self.sent_total = 0  # shipments + patient consumption

    def blg_total(self) -> int:
        return sum(e.qty for e in self.backlog)

    def oor_total(self) -> int:
        return sum(self.oor.values())


class World:
    """Single-writer world state; exactly one weekly cycle mutates it at a time.

    The cycle is driven in three stages so a session service can pause
    mid-week for a human decision:

        begin_week() -> ship_week(allocations) -> finish_week(orders)
    """

    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        self.week = config.start_week - config.warmup_weeks
        self.agents: Dict[str, _AgentState] = {a: _AgentState(a) for a in ROLES}
        self.trust = TrustState.initial(list(WHOLESALERS))
        self.history: Dict[int, Dict[str, dict]] = {}  # week -> agent -> record
        self._stage = "begin"
        self._prime_steady_state()

    # -- initialization ----------------------------------------------------

    def _prime_steady_state(self):
        """Start at the analytic fixed point of the order-up-to dynamics."""
        cfg = self.config
        d = cfg.hc_consumption
        w = self.week
        half = agents_mod.largest_remainder(d, [1.0, 1.0])  # per-supplier HC order
        for hc in HEALTH_CENTERS:
            st = self.agents[hc]
            st.inv = max(0, cfg.base_stock[hc] - 2 * d)
            for ws, q in zip(WHOLESALERS, half):
                st.in_transit.setdefault(w, {})[ws] = q
                self.agents[ws].incoming_orders.setdefault(w, {})[hc] = q
                st.oor[ws] = 2 * q
        for ws, mn in zip(WHOLESALERS, MANUFACTURERS):
            st = self.agents[ws]
            st.inv = max(0, cfg.base_stock[ws] - 2 * d)
            st.in_transit.setdefault(w, {})[mn] = d
            self.agents[mn].incoming_orders.setdefault(w, {})[ws] = d
            st.oor[mn] = 2 * d
        for mn in MANUFACTURERS:
            st = self.agents[mn]
            st.inv = max(0, cfg.base_stock[mn] - d)
        for st in self.agents.values():
            st.initial_inv = st.inv

    # -- weekly cycle ------------------------------------------------------

    def begin_week(self) -> None:
        if self._stage != "begin":
            raise SimulationError(f"begin_week called in stage {self._stage!r}")
        w = self.week
        self._arrived: Dict[str, int] = {a: 0 for a in ROLES}
        self._produced: Dict[str, int] = {}
        # 1. arrivals
        for a in ROLES:
            st = self.agents[a]
            for supplier, qty in st.in_transit.pop(w, {}).items():
                st.inv += qty
                st.oor[supplier] -= qty
                st.received_total += qty
                self._arrived[a] += qty
        # 2. production
        for mn in MANUFACTURERS:
            st = self.agents[mn]
            cap = self.config.manufacturer_capacity
            for ev in self.config.disruptions:
                if ev.target == mn and ev.active(w):
                    cap = math.floor(cap * ev.capacity_multiplier)
            target = self.config.base_stock[mn] - (st.inv - st.blg_total())
            prod = min(cap, max(0, target))
            st.inv += prod
            st.received_total += prod
            self._produced[mn] = prod
        # 3. demand
        self._new_demand: Dict[str, Dict[str, int]] = {}
        for a in ROLES:
            self._new_demand[a] = dict(self.agents[a].incoming_orders.pop(w, {}))
        for hc in HEALTH_CENTERS:
            self._new_demand[hc][PATIENTS] = self.config.hc_consumption
        self._stage = "ship"

    def needs_allocation(self, agent: str) -> bool:
        """True when a wholesaler cannot cover backlog plus this week's demand."""
        if self._stage != "ship":
            raise SimulationError("needs_allocation is only valid between begin_week and ship_week")
        st = self.agents[agent]
        nd = self._new_demand[agent]
        total_new = sum(nd.values())
        available = max(0, st.inv - st.blg_total())
        return total_new > 0 and available < total_new

    def new_demand(self, agent: str) -> Dict[str, int]:
        return dict(self._new_demand[agent])

    def ship_week(self, allocations: Optional[Dict[str, str]] = None) -> None:
        """Step 4: serve backlog oldest-first, then new demand; take snapshots."""
        if self._stage != "ship":
            raise SimulationError(f"ship_week called in stage {self._stage!r}")
        allocations = allocations or {}
        w = self.week
        self._shipped_down: Dict[str, int] = {a: 0 for a in ROLES}
        self._ship_split: Dict[str, Dict[str, int]] = {a: {} for a in ROLES}
        self._alloc_used: Dict[str, str] = {}
        trust_obs: List[Tuple[str, int, int]] = []  # (ws, demanded, received) for HC1
        for a in ROLES:
            st = self.agents[a]
            served_blg: Dict[str, int] = {}
            # backlog first, oldest first
            while st.backlog and st.inv > 0:
                entry = st.backlog[0]
                take = min(st.inv, entry.qty)
                entry.qty -= take
                self._send(a, entry.customer, take)
                served_blg[entry.customer] = served_blg.get(entry.customer, 0) + take
                if entry.qty == 0:
                    st.backlog.popleft()
            nd = self._new_demand[a]
            if a in HEALTH_CENTERS:
                # patient demand: unmet units are lost sales, not backlog
                want = nd.get(PATIENTS, 0)
                consume = min(st.inv, want)
                st.inv -= consume
                st.sent_total += consume
                self._shipped_down[a] += consume
            elif a in MANUFACTURERS:
                (cust,) = CUSTOMERS[a]
                q = nd.get(cust, 0)
                take = min(st.inv, q)
                self._send(a, cust, take)
                if q > take:
                    st.backlog.append(_BacklogEntry(w, cust, q - take))
            else:  # wholesaler
                d1 = nd.get("HC1", 0)
                d2 = nd.get("HC2", 0)
                policy = allocations.get(a)
                if policy is None:
                    policy = ALLOC_AUTO if st.inv >= d1 + d2 else ALLOC_PROPORTIONAL
                if policy not in ALLOCATION_POLICIES:
                    raise SimulationError(f"unknown allocation policy: {policy!r}")
                s1, s2 = apply_allocation(policy, st.inv, d1, d2)
                self._alloc_used[a] = policy
                self._send(a, "HC1", s1)
                self._send(a, "HC2", s2)
                if d1 > s1:
                    st.backlog.append(_BacklogEntry(w, "HC1", d1 - s1))
                if d2 > s2:
                    st.backlog.append(_BacklogEntry(w, "HC2", d2 - s2))
                trust_obs.append((a, d1, s1 + served_blg.get("HC1", 0)))
        for ws, demanded, received in trust_obs:
            self.trust = agents_mod.update_trust(
                self.trust, ws, demanded, received, self.config.trust_smoothing
            )
        # snapshots after shipping, before new orders
        self._snapshots: Dict[str, AgentSnapshot] = {}
        for a in ROLES:
            st = self.agents[a]
            nd = self._new_demand[a]
            if a in WHOLESALERS:
                dem1, dem2 = nd.get("HC1", 0), nd.get("HC2", 0)
            elif a in MANUFACTURERS:
                dem1, dem2 = nd.get(CUSTOMERS[a][0], 0), 0
            else:
                dem1, dem2 = nd.get(PATIENTS, 0), 0
            self._snapshots[a] = AgentSnapshot(
                week=w, inv=st.inv, dem_hc1=dem1, dem_hc2=dem2,
                blg=st.blg_total(), shp=self._arrived[a], oor=st.oor_total(),
            )
        self._stage = "order"

    def _send(self, sender: str, customer: str, qty: int) -> None:
        if qty <= 0:
            return
        st = self.agents[sender]
        st.inv -= qty
        st.sent_total += qty
        self._shipped_down[sender] += qty
        self._ship_split[sender][customer] = self._ship_split[sender].get(customer, 0) + qty
        self.agents[customer].in_transit.setdefault(self.week + 1, {})[sender] = (
            self.agents[customer].in_transit.get(self.week + 1, {}).get(sender, 0) + qty
        )

    def arrived(self, agent: str) -> int:
        """Units that landed this week; valid from begin_week until finish_week."""
        if self._stage not in ("ship", "order"):
            raise SimulationError("arrived is only valid during the week cycle")
        return self._arrived[agent]

    def suggestion(self, agent: str) -> int:
        if self._stage != "order":
            raise SimulationError("suggestion is only valid after ship_week")
        st = self.agents[agent]
        return compute_suggestion(
            self.config.base_stock[agent], st.inv, st.oor_total(), st.blg_total()
        )

    def snapshot(self, agent: str) -> AgentSnapshot:
        if self._stage != "order":
            raise SimulationError("snapshots are taken after ship_week")
        return self._snapshots[agent]

    def finish_week(self, orders: Optional[Dict[str, int]] = None) -> Dict[str, AgentSnapshot]:
        """Steps 5 and 6: place upstream orders, accrue the ledger, advance."""
        if self._stage != "order":
            raise SimulationError(f"finish_week called in stage {self._stage!r}")
        orders = orders or {}
        w = self.week
        for a in orders:
            if a not in ROLES:
                raise SimulationError(f"unknown agent: {a!r}")
        suggestions = {a: self.suggestion(a) for a in WHOLESALERS + HEALTH_CENTERS}
        placed: Dict[str, int] = {}
        for a in WHOLESALERS + HEALTH_CENTERS:
            qty = orders.get(a)
            if qty is None:
                qty = suggestions[a]
            if not isinstance(qty, int) or qty < 0:
                raise SimulationError(f"order for {a} must be a nonnegative integer")
            placed[a] = qty
            if a in HEALTH_CENTERS:
                mode = agents_mod.SPLIT_TRUST if a == "HC1" else agents_mod.SPLIT_EQUAL
                split = agents_mod.hc_split_orders(qty, self._hc_trust(a), mode)
            else:
                split = {SUPPLIERS[a][0]: qty}
            for supplier, q in split.items():
                if q <= 0:
                    continue
                sup = self.agents[supplier]
                sup.incoming_orders.setdefault(w + 1, {})[a] = (
                    sup.incoming_orders.get(w + 1, {}).get(a, 0) + q
                )
                self.agents[a].oor[supplier] += q
        # ledger on end-of-week inventory and backlog, revenue on shipments
        record: Dict[str, dict] = {}
        for a in ROLES:
            st = self.agents[a]
            ledger = LedgerEntry(
                week=w,
                holding_cost=HOLDING_COST * st.inv,
                stockout_cost=STOCKOUT_COST * st.blg_total(),
                revenue=UNIT_REVENUE * self._shipped_down[a],
            )
            record[a] = {
                "snapshot": self._snapshots[a],
                "ledger": ledger,
                "order": placed.get(a, 0),
                "suggestion": suggestions.get(a, 0),
                "ship_split": dict(self._ship_split[a]),
                "alloc": self._alloc_used.get(a, ""),
                "produced": self._produced.get(a, 0),
            }
        self.history[w] = record
        snaps = dict(self._snapshots)
        self.week += 1
        self._stage = "begin"
        return snaps

    def _hc_trust(self, hc: str) -> TrustState:
        # HC2 ignores trust; HC1 uses the shared world trust state
        return self.trust if hc == "HC1" else TrustState.initial(list(WHOLESALERS))

    def manufacturer_inventory(self, ws: str = "WS1") -> int:
        (mn,) = SUPPLIERS[ws]
        return self.agents[mn].inv

    # -- convenience -------------------------------------------------------

    def advance_week(self, decisions: Optional[Dict[str, Decision]] = None) -> Dict[str, AgentSnapshot]:
        """Run one full weekly cycle with explicit decisions for some agents."""
        decisions = decisions or {}
        for a, d in decisions.items():
            if a not in ROLES:
                raise SimulationError(f"unknown agent: {a!r}")
            if not isinstance(d.order, int) or d.order < 0:
                raise SimulationError(f"order for {a} must be a nonnegative integer")
        self.begin_week()
        allocations = {
            a: d.allocation for a, d in decisions.items() if d.allocation is not None
        }
        self.ship_week(allocations)
        return self.finish_week({a: d.order for a, d in decisions.items()})


# -- controllers -----------------------------------------------------------


class OrderUpToController:
    """Scripted agent: always orders the suggestion, default allocation."""

    def allocation(self, world: World, agent: str) -> Optional[str]:
        return None

    def order(self, world: World, agent: str, suggestion: int, week: int) -> int:
        return suggestion


class BehavioralController:
    """Wholesaler driven by a generative behavioral policy."""

    def __init__(self, policy: BehavioralPolicy):
        self.policy = policy
        self.orderer = BehavioralOrderer(policy)

    def allocation(self, world: World, agent: str) -> Optional[str]:
        return None

    def order(self, world: World, agent: str, suggestion: int, week: int) -> int:
        if week < world.config.start_week:
            return suggestion  # warmup weeks are scripted play
        return self.orderer.order(suggestion, week)


class RandomController:
    """Uniform random orders; used for randomized engine scenarios."""

    def __init__(self, seed: int, max_order: int = 200):
        import random as _random

        self.rng = _random.Random(seed)
        self.max_order = max_order

    def allocation(self, world: World, agent: str) -> Optional[str]:
        return self.rng.choice([ALLOC_HC1_FIRST, ALLOC_HC2_FIRST, ALLOC_PROPORTIONAL])

    def order(self, world: World, agent: str, suggestion: int, week: int) -> int:
        return self.rng.randint(0, self.max_order)


def run_standalone(
    config: ScenarioConfig,
    controllers: Optional[Dict[str, object]] = None,
    player_id: str = "standalone",
    truth: Optional[str] = None,
) -> EpisodeRecord:
    """Simulate the full horizon with scripted controllers; returns WS1 telemetry.

    Identical configs and seeds produce bit-identical episodes. Agents without
    an explicit controller follow the order-up-to policy.
    """
    world, _ = run_world(config, controllers)
    return episode_from_world(world, config, player_id=player_id, truth=truth)


def run_world(
    config: ScenarioConfig, controllers: Optional[Dict[str, object]] = None
) -> Tuple[World, Dict[int, Dict[str, dict]]]:
    config.validate()
    controllers = dict(controllers or {})
    for a in WHOLESALERS + HEALTH_CENTERS:
        controllers.setdefault(a, OrderUpToController())
    world = World(config)
    end = config.end_week
    while world.week <= end:
        w = world.week
        world.begin_week()
        allocations = {}
        for a in WHOLESALERS:
            if world.needs_allocation(a):
                choice = controllers[a].allocation(world, a)
                if choice is not None:
                    allocations[a] = choice
        world.ship_week(allocations)
        orders = {}
        for a in WHOLESALERS + HEALTH_CENTERS:
            orders[a] = controllers[a].order(world, a, world.suggestion(a), w)
        world.finish_week(orders)
    return world, world.history


def episode_from_world(
    world: World,
    config: ScenarioConfig,
    player_id: str = "standalone",
    truth: Optional[str] = None,
    agent: str = "WS1",
) -> EpisodeRecord:
    """Extract the player's telemetry; warmup weeks are excluded (ledger reset)."""
    rows: List[WeekRow] = []
    for w in sorted(world.history):
        if w < config.start_week:
            continue
        rec = world.history[w][agent]
        snap: AgentSnapshot = rec["snapshot"]
        ledger: LedgerEntry = rec["ledger"]
        split = rec["ship_split"]
        rows.append(
            WeekRow(
                week=w, agent=agent, inv=snap.inv, dem_hc1=snap.dem_hc1,
                dem_hc2=snap.dem_hc2, blg=snap.blg, shp=snap.shp, oor=snap.oor,
                suggestion=rec["suggestion"], order=rec["order"],
                ship_hc1=split.get("HC1", 0), ship_hc2=split.get("HC2", 0),
                holding=ledger.holding_cost, stockout=ledger.stockout_cost,
                revenue=ledger.revenue, profit=ledger.profit,
                alloc=rec["alloc"],
            )
        )
    return EpisodeRecord(
        player_id=player_id,
        condition=config.condition,
        seed=config.rng_seed,
        truth=truth,
        start_week=config.start_week,
        weeks=rows,
    )
