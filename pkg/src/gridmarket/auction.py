"""Fast-timescale wholesale market: bid formation, allocation, settlement.

Each tick the provider auctions a fixed supply of GCUs. A middleman bids for
the quantity his users demanded last tick and commits his whole cash stock
minus a safety margin, so his per-GCU bid price is (cash - margin) / quantity.
The provider fills the highest unit prices first, partially filling the
marginal bid; leftover GCUs are destroyed. Winners pay only for what they got.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarketState, MiddlemanAgent

# Payments may exceed remaining cash by at most this much (float round-off).
CASH_EPS = 1e-9


class InvariantViolation(RuntimeError):
    """Internal accounting broke; the run must abort."""


@dataclass(frozen=True)
class Bid:
    middleman_id: int
    quantity: int
    unit_price: float


@dataclass(frozen=True)
class AllocationResult:
    """One auction round's outcome, keyed by middleman id.

    Middlemen that submitted no bid are absent from the maps and received
    nothing. ``destroyed`` counts supply left unsold.
    """

    allocated: dict
    payments: dict
    destroyed: int

    def allocated_to(self, middleman_id: int) -> int:
        return self.allocated.get(middleman_id, 0)

    def payment_of(self, middleman_id: int) -> float:
        return self.payments.get(middleman_id, 0.0)


def compute_bid(middleman: MiddlemanAgent, margin: float):
    """Form the middleman's bid, or None if he cannot take part.

    Quantity is last tick's demand from his users; a middleman expecting no
    demand does not bid, and neither does one whose cash is at or below the
    safety margin (a zero-price bid can never win).
    """
    quantity = middleman.last_tick_demand
    if quantity == 0:
        return None
    budget = max(0.0, middleman.cash - margin)
    if budget == 0.0:
        return None
    return Bid(middleman_id=middleman.id, quantity=quantity,
               unit_price=budget / quantity)


def allocate(bids, supply: int, rng=None, tie_keys=None) -> AllocationResult:
    """Grant ``supply`` GCUs to the highest unit prices first.

    Equal unit prices are ordered by i.i.d. uniform tie keys, which is
    equivalent to a random shuffle ahead of a stable sort. Keys are drawn
    from ``rng`` (one per bid) unless ``tie_keys`` supplies them; the engine
    passes precomputed keys so that a tick's stream consumption is fixed.
    The marginal bid may be partially filled; everyone pays unit price times
    the quantity actually received.
    """
    bids = list(bids)
    if tie_keys is None:
        tie_keys = rng.random(len(bids))
    order = sorted(range(len(bids)),
                   key=lambda i: (-bids[i].unit_price, tie_keys[i], i))

    allocated = {}
    payments = {}
    remaining = int(supply)
    for i in order:
        if remaining == 0:
            break
        bid = bids[i]
        grant = min(bid.quantity, remaining)
        allocated[bid.middleman_id] = grant
        payments[bid.middleman_id] = grant * bid.unit_price
        remaining -= grant
    return AllocationResult(allocated=allocated, payments=payments,
                            destroyed=remaining)


def settle_wholesale(state: MarketState, result: AllocationResult) -> MarketState:
    """Charge winners and hand over their GCUs.

    Cash below a payment means the bid invariant was broken upstream; the
    run aborts rather than mint money.
    """
    for m in state.middlemen:
        payment = result.payment_of(m.id)
        if payment > m.cash + CASH_EPS:
            raise InvariantViolation(
                f"tick {state.tick}: middleman {m.id} owes {payment} "
                f"with only {m.cash} cash"
            )
        m.cash -= payment
        if -CASH_EPS < m.cash < 0.0:
            m.cash = 0.0  # snap round-off residue, cash stays non-negative
        m.inventory = result.allocated_to(m.id)
    return state
