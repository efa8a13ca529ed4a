"""HTTP session service: one human plays Wholesaler-1, everything else is scripted.

A session owns a private World and walks the weekly state machine
Allocation? -> Order -> advance. Requests for the same session are
serialized by a per-session lock; distinct sessions never share state.
"""
from __future__ import annotations

import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from . import telemetry
from .flowsim import (
    CONDITIONS,
    HEALTH_CENTERS,
    INFO,
    WHOLESALERS,
    ALLOC_HC1_FIRST,
    ALLOC_HC2_FIRST,
    ALLOC_PROPORTIONAL,
    EpisodeRecord,
    ScenarioConfig,
    World,
    episode_from_world,
)
from .schemas import (
    AWAITING_ALLOCATION,
    AWAITING_DONE,
    AWAITING_ORDER,
    NEWS_DISRUPTION,
    AllocationRequest,
    CompletionSummary,
    CreateSessionRequest,
    HealthView,
    LedgerView,
    OrderRequest,
    PlayerView,
)

PLAYER = "WS1"
PLAYER_ALLOCATIONS = (ALLOC_HC1_FIRST, ALLOC_HC2_FIRST, ALLOC_PROPORTIONAL)
DEFAULT_SESSION_TIMEOUT = 7200.0  # seconds


@dataclass
class Session:
    session_id: str
    player_id: str
    config: ScenarioConfig
    world: World
    awaiting: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)

    def touch(self) -> None:
        self.last_access = time.monotonic()


def _scripted_orders(world: World) -> Dict[str, int]:
    return {a: world.suggestion(a) for a in WHOLESALERS + HEALTH_CENTERS if a != PLAYER}


def _advance_warmup(world: World, config: ScenarioConfig) -> None:
    while world.week < config.start_week:
        world.begin_week()
        world.ship_week({})
        world.finish_week({})  # everyone follows the suggestion in warmup


def _enter_week(session: Session) -> None:
    """Start the next week and resolve the allocation stage when automatic."""
    world = session.world
    if world.week > session.config.end_week:
        session.awaiting = AWAITING_DONE
        return
    world.begin_week()
    if world.needs_allocation(PLAYER):
        session.awaiting = AWAITING_ALLOCATION
    else:
        world.ship_week({})
        session.awaiting = AWAITING_ORDER


def _ledger_view(session: Session) -> LedgerView:
    start = session.config.start_week
    hist = session.world.history
    played = [w for w in hist if w >= start]
    total = sum(hist[w][PLAYER]["ledger"].profit for w in played)
    if played:
        last = hist[max(played)][PLAYER]["ledger"]
        return LedgerView(
            holding_cost=last.holding_cost, stockout_cost=last.stockout_cost,
            revenue=last.revenue, profit=last.profit, total_profit=total,
        )
    return LedgerView(holding_cost=0, stockout_cost=0, revenue=0, profit=0, total_profit=0)


def build_view(session: Session) -> PlayerView:
    world = session.world
    cfg = session.config
    st = world.agents[PLAYER]
    if session.awaiting == AWAITING_ALLOCATION:
        nd = world.new_demand(PLAYER)
        inv, blg = st.inv, st.blg_total()
        dem1, dem2 = nd.get("HC1", 0), nd.get("HC2", 0)
        oor = st.oor_total()
        suggestion = None
    else:
        snap = world.snapshot(PLAYER)
        inv, blg, oor = snap.inv, snap.blg, snap.oor
        dem1, dem2 = snap.dem_hc1, snap.dem_hc2
        suggestion = world.suggestion(PLAYER)
    return PlayerView(
        session_id=session.session_id,
        week=world.week,
        awaiting=session.awaiting,
        condition=cfg.condition,
        inv=inv, dem_hc1=dem1, dem_hc2=dem2, blg=blg,
        arrived_shipment=world.arrived(PLAYER),
        oor=oor,
        suggestion=suggestion,
        manufacturer_inventory=(
            world.manufacturer_inventory(PLAYER) if cfg.condition == INFO else None
        ),
        news=NEWS_DISRUPTION if world.week == cfg.announcement_week else None,
        ledger=_ledger_view(session),
    )


def build_summary(session: Session) -> CompletionSummary:
    ep = session_episode(session)
    return CompletionSummary(
        session_id=session.session_id,
        week=session.world.week,
        awaiting=session.awaiting,
        condition=session.config.condition,
        weeks_played=ep.horizon(),
        total_profit=ep.total_profit(),
        total_holding_cost=sum(r.holding for r in ep.weeks),
        total_stockout_cost=sum(r.stockout for r in ep.weeks),
        total_revenue=sum(r.revenue for r in ep.weeks),
    )


def session_episode(session: Session) -> EpisodeRecord:
    return episode_from_world(
        session.world, session.config, player_id=session.player_id, truth=None
    )


def create_app(
    scenario: Optional[ScenarioConfig] = None,
    service_seed: int = 0,
    session_timeout: float = DEFAULT_SESSION_TIMEOUT,
    telemetry_dir: Optional[Path] = None,
) -> FastAPI:
    """Build the service; all randomness derives from `service_seed`."""
    base_scenario = scenario or ScenarioConfig()
    base_scenario.validate()
    app = FastAPI(title="wholesaler gamette service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: Dict[str, Session] = {}
    registry_lock = threading.Lock()
    rng = random.Random(service_seed)

    def _purge_idle() -> None:
        cutoff = time.monotonic() - session_timeout
        with registry_lock:
            for sid in [s for s, sess in sessions.items() if sess.last_access < cutoff]:
                del sessions[sid]

    def _get(sid: str) -> Session:
        with registry_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session: {sid}")
        sess.touch()
        return sess

    def _respond(model) -> JSONResponse:
        # exclude_none keeps manufacturer_inventory out of NoInfo payloads
        return JSONResponse(model.model_dump(exclude_none=True))

    def _view_or_summary(sess: Session) -> JSONResponse:
        if sess.awaiting == AWAITING_DONE:
            return _respond(build_summary(sess))
        return _respond(build_view(sess))

    @app.get("/health")
    def health() -> HealthView:
        _purge_idle()
        with registry_lock:
            n = len(sessions)
        return HealthView(status="ok", sessions=n)

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest) -> JSONResponse:
        _purge_idle()
        if req.condition is not None and req.condition not in CONDITIONS:
            raise HTTPException(status_code=422, detail=f"unknown condition: {req.condition}")
        with registry_lock:
            condition = req.condition or rng.choice(CONDITIONS)
            seed = req.seed if req.seed is not None else rng.randrange(2**31)
            sid = uuid.uuid4().hex
        cfg = ScenarioConfig(**{**vars(base_scenario), "condition": condition, "rng_seed": seed})
        cfg.base_stock = dict(base_scenario.base_stock)
        cfg.disruptions = list(base_scenario.disruptions)
        world = World(cfg)
        _advance_warmup(world, cfg)
        sess = Session(
            session_id=sid, player_id=req.player_id or sid, config=cfg,
            world=world, awaiting=AWAITING_ORDER,
        )
        _enter_week(sess)
        with registry_lock:
            sessions[sid] = sess
        return _respond(build_view(sess))

    @app.get("/sessions/{sid}/view")
    def get_view(sid: str) -> JSONResponse:
        sess = _get(sid)
        with sess.lock:
            return _view_or_summary(sess)

    @app.post("/sessions/{sid}/allocation")
    def submit_allocation(sid: str, req: AllocationRequest) -> JSONResponse:
        sess = _get(sid)
        with sess.lock:
            if sess.awaiting != AWAITING_ALLOCATION:
                raise HTTPException(
                    status_code=409, detail=f"not awaiting allocation (state: {sess.awaiting})"
                )
            if req.policy not in PLAYER_ALLOCATIONS:
                raise HTTPException(status_code=422, detail=f"unknown policy: {req.policy}")
            sess.world.ship_week({PLAYER: req.policy})
            sess.awaiting = AWAITING_ORDER
            return _respond(build_view(sess))

    @app.post("/sessions/{sid}/order")
    def submit_order(sid: str, req: OrderRequest) -> JSONResponse:
        sess = _get(sid)
        with sess.lock:
            if sess.awaiting != AWAITING_ORDER:
                raise HTTPException(
                    status_code=409, detail=f"not awaiting an order (state: {sess.awaiting})"
                )
            world = sess.world
            orders = _scripted_orders(world)
            orders[PLAYER] = req.quantity
            world.finish_week(orders)
            _enter_week(sess)
            if sess.awaiting == AWAITING_DONE and telemetry_dir is not None:
                telemetry_dir.mkdir(parents=True, exist_ok=True)
                telemetry.write_episode(
                    session_episode(sess), telemetry_dir / f"{sess.player_id}.episode"
                )
            return _view_or_summary(sess)

    @app.get("/sessions/{sid}/telemetry")
    def get_telemetry(sid: str) -> PlainTextResponse:
        sess = _get(sid)
        with sess.lock:
            return PlainTextResponse(telemetry.dumps_episode(session_episode(sess)))

    return app
