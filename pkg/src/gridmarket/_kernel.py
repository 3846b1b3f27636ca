"""Compiled fast-tick window loop.

``run_fast_window`` advances a market by many fast ticks at once. It consumes
the generator stream exactly like the same number of :func:`dynamics.fast_tick`
calls (one block row per tick: n_middlemen tie keys then n_users demand
uniforms), and reproduces their arithmetic bit for bit; the equivalence is
pinned by tests/test_kernel_equivalence.py. Only middleman cash, demand
memory, and the user window counters evolve inside a window, so those are
the arrays the kernel touches.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import MarketState

# Rows are generated in chunks so huge windows never materialize at once.
_CHUNK_VALUES = 4_000_000


@njit(cache=True)
def _window_loop(block, q, mid_of_user, price, cash, margin, last_demand,
                 demands_w, satisfied_w, supply, cash_eps):
    T = block.shape[0]
    n_mid = price.shape[0]
    n_users = q.shape[0]

    qty = np.empty(n_mid, np.int64)
    unit = np.empty(n_mid, np.float64)
    alloc = np.empty(n_mid, np.int64)
    order = np.empty(n_mid, np.int64)
    demanded = np.empty(n_users, np.bool_)
    dcount = np.empty(n_mid, np.int64)
    offs = np.empty(n_mid + 1, np.int64)
    req = np.empty(n_users, np.int64)
    pos = np.empty(n_mid, np.int64)
    keys = np.empty(n_users, np.float64)
    taken = np.empty(n_users, np.bool_)

    for t in range(T):
        row = block[t]

        # bid formation: quantity from last demand, budget = cash - margin
        nlive = 0
        for m in range(n_mid):
            qty[m] = last_demand[m]
            budget = cash[m] - margin[m]
            if qty[m] >= 1 and budget > 0.0:
                unit[m] = budget / qty[m]
                order[nlive] = m
                nlive += 1

        # sort live bidders by (unit desc, tie key asc); stable, so id breaks
        # residual ties exactly like the reference path
        for i in range(1, nlive):
            mi = order[i]
            j = i - 1
            while j >= 0:
                mj = order[j]
                if (unit[mj] < unit[mi]) or (unit[mj] == unit[mi] and row[mj] > row[mi]):
                    order[j + 1] = mj
                    j -= 1
                else:
                    break
            order[j + 1] = mi

        # greedy fill and settlement
        for m in range(n_mid):
            alloc[m] = 0
        rem = supply
        for i in range(nlive):
            if rem == 0:
                break
            m = order[i]
            grant = qty[m] if qty[m] < rem else rem
            alloc[m] = grant
            cash[m] -= grant * unit[m]
            if -cash_eps < cash[m] < 0.0:
                cash[m] = 0.0
            rem -= grant

        # demand draws
        for m in range(n_mid):
            dcount[m] = 0
        for u in range(n_users):
            d = row[n_mid + u] < q[u]
            demanded[u] = d
            if d:
                dcount[mid_of_user[u]] += 1

        # group requesters by middleman, user id ascending
        offs[0] = 0
        for m in range(n_mid):
            offs[m + 1] = offs[m] + dcount[m]
            pos[m] = offs[m]
        for u in range(n_users):
            if demanded[u]:
                m = mid_of_user[u]
                req[pos[m]] = u
                pos[m] += 1

        # serve: requesters ranked by serve key (rescaled demand uniform)
        for m in range(n_mid):
            d = dcount[m]
            last_demand[m] = d
            if d == 0:
                continue
            inv = alloc[m]
            base = offs[m]
            if inv >= d:
                for i in range(base, base + d):
                    u = req[i]
                    demands_w[u] += 1
                    satisfied_w[u] += 1
                served = d
            else:
                for i in range(d):
                    u = req[base + i]
                    demands_w[u] += 1
                    keys[i] = row[n_mid + u] / q[u]
                    taken[i] = False
                miss = d - inv
                if inv <= miss:
                    # pick the inv smallest keys; first index wins ties,
                    # matching (key, user id) ascending order
                    for _ in range(inv):
                        best = -1
                        bk = 2.0
                        for i in range(d):
                            if not taken[i] and keys[i] < bk:
                                bk = keys[i]
                                best = i
                        taken[best] = True
                        satisfied_w[req[base + best]] += 1
                else:
                    # cheaper to pick the miss largest keys to exclude; last
                    # index wins ties so the larger user id goes unserved
                    for _ in range(miss):
                        worst = -1
                        wk = -1.0
                        for i in range(d):
                            if not taken[i] and keys[i] >= wk:
                                wk = keys[i]
                                worst = i
                        taken[worst] = True
                    for i in range(d):
                        if not taken[i]:
                            satisfied_w[req[base + i]] += 1
                served = inv
            cash[m] += served * price[m]


def run_fast_window(state: MarketState, ticks: int) -> MarketState:
    """Advance ``ticks`` fast ticks through the compiled loop."""
    cfg = state.config
    n_mid = cfg.n_middlemen
    n_users = cfg.n_users

    q = np.array([u.q for u in state.users])
    mid_of_user = np.array([u.middleman_id for u in state.users], dtype=np.int64)
    price = np.array([m.retail_price for m in state.middlemen])
    cash = np.array([m.cash for m in state.middlemen])
    margin = np.array([cfg.margin_for(m.initial_cash) for m in state.middlemen])
    last_demand = np.array([m.last_tick_demand for m in state.middlemen],
                           dtype=np.int64)
    demands_w = np.array([u.demands_in_window for u in state.users],
                         dtype=np.int64)
    satisfied_w = np.array([u.satisfied_in_window for u in state.users],
                           dtype=np.int64)

    width = n_mid + n_users
    rows_per_chunk = max(1, _CHUNK_VALUES // width)
    done = 0
    from .auction import CASH_EPS
    while done < ticks:
        n = min(rows_per_chunk, ticks - done)
        block = state.rng.random((n, width))
        _window_loop(block, q, mid_of_user, price, cash, margin, last_demand,
                     demands_w, satisfied_w, cfg.supply_per_tick, CASH_EPS)
        done += n

    for m in state.middlemen:
        m.cash = float(cash[m.id])
        m.last_tick_demand = int(last_demand[m.id])
        m.inventory = 0
    for u in state.users:
        u.demands_in_window = int(demands_w[u.id])
        u.satisfied_in_window = int(satisfied_w[u.id])
    state.tick += ticks
    return state
