"""Two-timescale behavioral engine.

Fast tick: middlemen bid for GCUs sized by yesterday's demand, the provider
allocates highest-bid-first, users demand with probability q, and each
middleman serves his requesters in random order until his inventory runs out.
Served users pay the posted retail price on the spot.

Slow step (every ``ticks_per_slow_step`` ticks): every middleman reprices by
comparing his cash C to his initial stake C0 against the current mean price,
then every user decides whether to walk away from her middleman, judging the
service she got this window and the price move she just saw. Unhappy users
pick a new middleman uniformly at random.

RNG protocol (part of the determinism contract): one fast tick consumes
exactly ``n_middlemen + n_users`` values from the state's generator, in
order: auction tie keys, then one demand uniform per user. Service order
keys cost nothing extra: given that user u demanded (uniform < q), the
rescaled draw uniform/q is again U[0,1) and independent of who demanded, so
it doubles as the serve-priority key. A slow step consumes one integer per
switching user, in user id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .auction import allocate, compute_bid, settle_wholesale
from .model import MarketState, UserAgent

BRANCH_HALVE = "halve"
BRANCH_HOLD = "hold"
BRANCH_ADOPT = "adopt-mean"

CAUSE_SERVICE = "service"
CAUSE_PRICE = "price"


@dataclass
class TickOutcome:
    """Per-tick demand and service bookkeeping."""

    demanded: np.ndarray        # bool per user
    serve_keys: np.ndarray      # float per user, valid where demanded
    satisfied: np.ndarray       # bool per user
    demanded_by_mid: np.ndarray
    served_by_mid: np.ndarray
    revenue_by_mid: np.ndarray


@dataclass(frozen=True)
class MiddlemanUpdate:
    middleman_id: int
    old_price: float
    new_price: float
    cash: float
    branch: str


@dataclass(frozen=True)
class SwitchEvent:
    user_id: int
    cause: str                  # "service" or "price"; service wins if both fire
    from_middleman: int
    to_middleman: int


@dataclass(frozen=True)
class SlowStepRecord:
    slow_step: int
    mean_price_before: float
    updates: tuple
    switches: tuple
    mean_service: float         # nan when no user demanded this window
    user_counts: tuple          # post-switch distribution over middlemen
    index: float                # mean of the freshly updated retail prices


def update_price(p: float, cash: float, c0: float, mean_price: float):
    """The three-branch repricing rule.

    Flush middlemen (cash above twice the stake) halve their price, which
    caps inflation. Comfortable ones (between one and two stakes, boundaries
    included) keep it. Struggling ones (below the stake) adopt the market
    mean to win users back. Returns (new_price, branch).

    Halving stops at the smallest subnormal: a trade-less middleman can halve
    for thousands of steps, and a price underflowing to exactly 0 would break
    the positive-price invariant.
    """
    if cash > 2.0 * c0:
        halved = p / 2.0
        return (halved, BRANCH_HALVE) if halved > 0.0 else (p, BRANCH_HALVE)
    if cash >= c0:
        return p, BRANCH_HOLD
    return mean_price, BRANCH_ADOPT


def compute_service_quality(user: UserAgent):
    """Fraction of this window's demands that were served; None if she never demanded."""
    if user.demands_in_window == 0:
        return None
    return user.satisfied_in_window / user.demands_in_window


def evaluate_service_switch(s: float, mean_s: float, s_tol: float) -> bool:
    """True when service fell far enough below average: s_tol < (mean_s - s) / mean_s."""
    if mean_s <= 0:
        raise ValueError("mean_s must be positive; callers skip the criterion otherwise")
    return s_tol < (mean_s - s) / mean_s


def evaluate_price_switch(p_new: float, p_old: float, mean_p_old: float,
                          c_tol: float) -> bool:
    """True when the price hike is intolerable: c_tol < (p_new - p_old) / sqrt(mean_p_old * p_old)."""
    return c_tol < (p_new - p_old) / math.sqrt(mean_p_old * p_old)


def reassign_user(user: UserAgent, state: MarketState) -> UserAgent:
    """Move the user to a middleman chosen uniformly among the others.

    A single-middleman market leaves her in place without touching the
    stream. Otherwise consumes exactly one integer draw.
    """
    n = state.config.n_middlemen
    if n < 2:
        return user
    j = int(state.rng.integers(0, n - 1))
    if j >= user.middleman_id:
        j += 1
    user.middleman_id = j
    return user


def draw_demands(state: MarketState) -> TickOutcome:
    """Draw every user's demand flag and refresh each middleman's demand count.

    Consumes one uniform per user. The conditional remainder uniform/q of
    each demanding user becomes her serve-priority key for this tick.
    """
    n_users = state.config.n_users
    n_mid = state.config.n_middlemen
    u = state.rng.random(n_users)

    demanded = np.zeros(n_users, dtype=bool)
    serve_keys = np.ones(n_users)
    demanded_by_mid = np.zeros(n_mid, dtype=np.int64)
    for user in state.users:
        if u[user.id] < user.q:
            demanded[user.id] = True
            serve_keys[user.id] = u[user.id] / user.q
            demanded_by_mid[user.middleman_id] += 1

    for m in state.middlemen:
        m.last_tick_demand = int(demanded_by_mid[m.id])

    return TickOutcome(
        demanded=demanded,
        serve_keys=serve_keys,
        satisfied=np.zeros(n_users, dtype=bool),
        demanded_by_mid=demanded_by_mid,
        served_by_mid=np.zeros(n_mid, dtype=np.int64),
        revenue_by_mid=np.zeros(n_mid),
    )


def serve_demands(state: MarketState, outcome: TickOutcome) -> TickOutcome:
    """Serve each middleman's requesters in serve-key order until stock runs out.

    Served users pay the retail price immediately; unserved requesters pay
    nothing. Both window counters advance here. Inventory perishes at tick
    end regardless of leftovers.
    """
    requesters_by_mid = [[] for _ in state.middlemen]
    for user in state.users:
        if outcome.demanded[user.id]:
            requesters_by_mid[user.middleman_id].append(user)

    for m in state.middlemen:
        requesters = requesters_by_mid[m.id]
        k = min(len(requesters), m.inventory)
        if k < len(requesters):
            requesters = sorted(requesters,
                                key=lambda u: (outcome.serve_keys[u.id], u.id))
        for i, user in enumerate(requesters):
            user.demands_in_window += 1
            if i < k:
                user.satisfied_in_window += 1
                outcome.satisfied[user.id] = True
        outcome.served_by_mid[m.id] = k
        outcome.revenue_by_mid[m.id] = k * m.retail_price
        m.cash += k * m.retail_price
        m.inventory = 0
    return outcome


def fast_tick(state: MarketState) -> MarketState:
    """Advance one fast tick: bid, allocate, settle, demand, serve.

    Bids are sized by the demand observed on the previous tick. Stream
    consumption is exactly n_middlemen tie keys plus n_users demand uniforms.
    """
    cfg = state.config
    tie = state.rng.random(cfg.n_middlemen)

    bids = []
    keys = []
    for m in state.middlemen:
        bid = compute_bid(m, cfg.margin_for(m.initial_cash))
        if bid is not None:
            bids.append(bid)
            keys.append(tie[m.id])
    result = allocate(bids, cfg.supply_per_tick, tie_keys=keys)
    settle_wholesale(state, result)

    outcome = draw_demands(state)
    serve_demands(state, outcome)
    state.tick += 1
    return state


def slow_step(state: MarketState) -> SlowStepRecord:
    """Reprice every middleman, let users switch, reset window counters.

    All middlemen read the same pre-update mean price, so updates commute.
    A user switches if either criterion fires; she is then reassigned at
    random. Users who never demanded this window sit out the service
    criterion, as does everyone when the mean service is zero or undefined.
    """
    cfg = state.config
    prices_before = state.retail_prices()
    mean_p_before = float(prices_before.mean())

    updates = []
    for m in state.middlemen:
        new_p, branch = update_price(m.retail_price, m.cash, m.initial_cash,
                                     mean_p_before)
        m.prev_retail_price = m.retail_price
        m.retail_price = new_p
        updates.append(MiddlemanUpdate(middleman_id=m.id,
                                       old_price=m.prev_retail_price,
                                       new_price=new_p, cash=m.cash,
                                       branch=branch))

    service = [compute_service_quality(u) for u in state.users]
    defined = [s for s in service if s is not None]
    mean_s = float(np.mean(defined)) if defined else math.nan
    use_service = bool(defined) and mean_s > 0

    switches = []
    for user in state.users:
        s = service[user.id]
        wants_service = (use_service and s is not None
                         and evaluate_service_switch(s, mean_s, user.s_tol))
        m = state.middlemen[user.middleman_id]
        wants_price = evaluate_price_switch(m.retail_price, m.prev_retail_price,
                                            mean_p_before, user.c_tol)
        if wants_service or wants_price:
            src = user.middleman_id
            reassign_user(user, state)
            if user.middleman_id != src:
                cause = CAUSE_SERVICE if wants_service else CAUSE_PRICE
                switches.append(SwitchEvent(user_id=user.id, cause=cause,
                                            from_middleman=src,
                                            to_middleman=user.middleman_id))

    for user in state.users:
        user.demands_in_window = 0
        user.satisfied_in_window = 0

    state.slow_step += 1
    counts = state.user_counts()
    index = float(state.retail_prices().mean())
    return SlowStepRecord(
        slow_step=state.slow_step - 1,
        mean_price_before=mean_p_before,
        updates=tuple(updates),
        switches=tuple(switches),
        mean_service=mean_s,
        user_counts=tuple(int(c) for c in counts),
        index=index,
    )
