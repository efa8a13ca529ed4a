"""Decision policies for scripted agents.

Order splitting for the health centers (equal and trust-weighted), the
exponential-smoothing trust update, and the generative behavioral wholesaler
policies (hoarder / reactor / follower) used to build synthetic cohorts.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

HOARDER = "hoarder"
REACTOR = "reactor"
FOLLOWER = "follower"
PLAYER_TYPES = (HOARDER, REACTOR, FOLLOWER)

SPLIT_EQUAL = "Equal"
SPLIT_TRUST = "TrustBased"

DEFAULT_TRUST_SMOOTHING = 0.7
INITIAL_TRUST = 0.5


def largest_remainder(total: int, weights: Sequence[float]) -> List[int]:
    """Split `total` units proportionally to `weights` using largest-remainder rounding.

    Ties in the fractional parts go to the lowest index. All-zero weights fall
    back to an equal split. The returned quantities always sum to `total`.
    """
    if total < 0:
        raise ValueError("total must be nonnegative")
    n = len(weights)
    if n == 0:
        return []
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    wsum = float(sum(weights))
    if wsum <= 0.0:
        weights = [1.0] * n
        wsum = float(n)
    quotas = [total * w / wsum for w in weights]
    base = [int(q) for q in quotas]
    remainder = total - sum(base)
    # hand out the remainder by descending fractional part, lowest index first on ties
    order = sorted(range(n), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


@dataclass
class TrustState:
    """HC1's per-supplier trust, updated from realized fill rates."""

    values: Dict[str, float]

    @classmethod
    def initial(cls, suppliers: Sequence[str]) -> "TrustState":
        return cls({s: INITIAL_TRUST for s in suppliers})

    def shares(self) -> Dict[str, float]:
        total = sum(self.values.values())
        if total <= 0.0:
            return {s: 1.0 / len(self.values) for s in self.values}
        return {s: v / total for s, v in self.values.items()}


def hc_split_orders(total_order: int, trust: TrustState, mode: str) -> Dict[str, int]:
    """Split a health center's total order across its suppliers.

    Equal mode gives a floor/ceil split (extra unit to the first supplier);
    TrustBased splits proportionally to the trust values with largest-remainder
    rounding. Quantities always sum to `total_order`.
    """
    if total_order < 0:
        raise ValueError("total_order must be nonnegative")
    suppliers = list(trust.values.keys())
    if mode == SPLIT_EQUAL:
        weights = [1.0] * len(suppliers)
    elif mode == SPLIT_TRUST:
        weights = [trust.values[s] for s in suppliers]
    else:
        raise ValueError(f"unknown split mode: {mode!r}")
    qty = largest_remainder(total_order, weights)
    return dict(zip(suppliers, qty))


def update_trust(
    trust: TrustState,
    supplier: str,
    demanded: int,
    received: int,
    smoothing: float = DEFAULT_TRUST_SMOOTHING,
) -> TrustState:
    """Exponentially smooth trust toward the realized fill rate.

    fill = received / demanded (1 when nothing was demanded, capped at 1 when
    backlog service pushes deliveries above the week's demand).
    """
    if demanded < 0:
        raise ValueError("demanded must be nonnegative")
    if supplier not in trust.values:
        raise ValueError(f"unknown supplier: {supplier!r}")
    fill = 1.0 if demanded == 0 else min(1.0, received / demanded)
    new = dict(trust.values)
    new[supplier] = min(1.0, max(0.0, smoothing * new[supplier] + (1.0 - smoothing) * fill))
    return TrustState(new)


@dataclass
class BehavioralPolicy:
    """Generative wholesaler policy: a Markov chain over deviation modes.

    Each mode emits a Normal(mean, std) deviation added to the order
    suggestion. Followers have no modes and return the suggestion exactly;
    reactors do the same until `reaction_week`. `hold_weeks` freezes the
    initial mode for that many weeks before transitions kick in, which gives
    planted cohorts a recognizable opening signature.
    """

    player_type: str
    mode_means: List[float] = field(default_factory=list)
    mode_stds: List[float] = field(default_factory=list)
    mode_transition: List[List[float]] = field(default_factory=list)
    initial_modes: List[float] = field(default_factory=list)
    reaction_week: Optional[int] = None
    hold_weeks: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.player_type not in PLAYER_TYPES:
            raise ValueError(f"unknown player type: {self.player_type!r}")
        for row in self.mode_transition:
            if abs(sum(row) - 1.0) > 1e-12:
                raise ValueError("transition rows must sum to 1")
        if self.initial_modes and abs(sum(self.initial_modes) - 1.0) > 1e-12:
            raise ValueError("initial mode distribution must sum to 1")
        if self.player_type == FOLLOWER and any(m != 0 for m in self.mode_means):
            raise ValueError("follower emission means must all be 0")


class BehavioralOrderer:
    """Stateful sampler advancing one mode transition per order decision."""

    def __init__(self, policy: BehavioralPolicy):
        self.policy = policy
        self.rng = random.Random(policy.rng_seed)
        self.mode: Optional[int] = None
        self.weeks_active = 0

    def order(self, suggestion: int, week: int) -> int:
        if suggestion < 0:
            raise ValueError("suggestion must be nonnegative")
        p = self.policy
        if p.player_type == FOLLOWER:
            return suggestion
        if p.player_type == REACTOR and p.reaction_week is not None and week < p.reaction_week:
            return suggestion
        if self.mode is None:
            self.mode = self._sample(p.initial_modes)
        elif self.weeks_active >= p.hold_weeks:
            self.mode = self._sample(p.mode_transition[self.mode])
        self.weeks_active += 1
        dev = self.rng.gauss(p.mode_means[self.mode], p.mode_stds[self.mode])
        return max(0, round(suggestion + dev))

    def _sample(self, probs: Sequence[float]) -> int:
        u = self.rng.random()
        acc = 0.0
        for i, pr in enumerate(probs):
            acc += pr
            if u < acc:
                return i
        return len(probs) - 1


def follower_policy(seed: int = 0) -> BehavioralPolicy:
    return BehavioralPolicy(player_type=FOLLOWER, rng_seed=seed)


def hoarder_policy(base_stock: int = 120, seed: int = 0) -> BehavioralPolicy:
    """Default planted hoarder: opens hard in the large positive mode.

    Modes: C (0), small positive, large positive, scaled to the weekly
    throughput (base stock / lead+1). Deviations stay below one week of
    demand so the order-up-to position remains bounded. The first 8 weeks
    are held in the large mode so planted hoarders share a long common
    opening run.
    """
    u = base_stock / 3.0
    return BehavioralPolicy(
        player_type=HOARDER,
        mode_means=[0.0, round(0.5 * u), round(0.9 * u)],
        mode_stds=[3.0, 3.0, 3.0],
        mode_transition=[
            [0.40, 0.40, 0.20],
            [0.05, 0.80, 0.15],
            [0.02, 0.13, 0.85],
        ],
        initial_modes=[0.0, 0.0, 1.0],
        hold_weeks=8,
        rng_seed=seed,
    )


def reactor_policy(base_stock: int = 120, reaction_week: int = 28, seed: int = 0) -> BehavioralPolicy:
    """Default planted reactor: follows until `reaction_week`, then cuts orders.

    Modes: negative, C (0), small positive, large positive, on the same
    throughput scale as the hoarder. The reaction opens in the negative mode
    and is held 4 weeks.
    """
    u = base_stock / 3.0
    return BehavioralPolicy(
        player_type=REACTOR,
        mode_means=[-round(0.6 * u), 0.0, round(0.5 * u), round(0.9 * u)],
        mode_stds=[3.0, 3.0, 3.0, 3.0],
        mode_transition=[
            [0.85, 0.05, 0.07, 0.03],
            [0.10, 0.60, 0.20, 0.10],
            [0.05, 0.10, 0.70, 0.15],
            [0.05, 0.10, 0.15, 0.70],
        ],
        initial_modes=[1.0, 0.0, 0.0, 0.0],
        reaction_week=reaction_week,
        hold_weeks=4,
        rng_seed=seed,
    )


def make_policy(player_type: str, seed: int = 0, base_stock: int = 120,
                reaction_week: int = 28) -> BehavioralPolicy:
    if player_type == FOLLOWER:
        return follower_policy(seed)
    if player_type == HOARDER:
        return hoarder_policy(base_stock, seed)
    if player_type == REACTOR:
        return reactor_policy(base_stock, reaction_week, seed)
    raise ValueError(f"unknown player type: {player_type!r}")
