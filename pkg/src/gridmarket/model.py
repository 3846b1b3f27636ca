"""Domain types, run configuration, and market initialization.

A market has one provider producing a fixed number of GCUs per fast tick,
``n_middlemen`` middlemen reselling them, and ``n_users`` users who each
demand one GCU per tick with a personal probability q. Middlemen and users
carry the bookkeeping needed by the two-timescale engine in
:mod:`gridmarket.dynamics`.

All randomness flows through a single ``numpy.random.Generator`` held by the
:class:`MarketState`. The generator is PCG64 keyed by ``SeedSequence(seed)``,
so a run is a pure function of its config. Initialization consumes the stream
in a fixed, documented order (see :func:`init_market`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

FIRST_TICK_POLICIES = ("user-count", "half-user-count")


class ConfigError(ValueError):
    """A configuration value violates its constraint. Message names the field."""


@dataclass(frozen=True)
class UniformSpec:
    """A per-agent value drawn i.i.d. from U[low, high) at init time."""

    low: float
    high: float

    def validate(self, name: str, positive: bool = False) -> None:
        floor = 0.0
        if self.low < floor or self.high < self.low:
            raise ConfigError(
                f"{name}: uniform range needs 0 <= low <= high, got [{self.low}, {self.high}]"
            )
        if positive and self.low <= 0.0:
            raise ConfigError(f"{name}: uniform range must stay positive, got low={self.low}")


ScalarOrUniform = Union[float, UniformSpec]
CashSpec = Union[float, tuple]


@dataclass(frozen=True)
class SimConfig:
    """Full parameterization of one simulation run.

    ``initial_cash`` may be a single value shared by every middleman or a
    per-middleman tuple. ``s_tol``/``c_tol`` are one value for all users or
    a :class:`UniformSpec` range sampled per user; ``initial_price`` is one
    price for all middlemen or a range sampled per middleman. The default
    price spread breaks the start symmetry: with every price equal, hold and
    adopt-mean are both identities and the market freezes instantly.
    """

    n_middlemen: int = 10
    n_users: int = 100
    supply_per_tick: int = 40
    ticks_per_slow_step: int = 10_000
    n_slow_steps: int = 2_000
    initial_cash: CashSpec = 21.0
    initial_price: ScalarOrUniform = UniformSpec(2.0, 6.0)
    safety_margin_fraction: float = 0.1
    s_tol: ScalarOrUniform = 0.5
    c_tol: ScalarOrUniform = 0.5
    rng_seed: int = 0
    first_tick_bid_policy: str = "user-count"

    def validate(self) -> None:
        if self.n_middlemen < 1:
            raise ConfigError(f"n_middlemen must be >= 1, got {self.n_middlemen}")
        if self.n_users < 1:
            raise ConfigError(f"n_users must be >= 1, got {self.n_users}")
        if self.supply_per_tick < 0:
            raise ConfigError(f"supply_per_tick must be >= 0, got {self.supply_per_tick}")
        if self.ticks_per_slow_step < 1:
            raise ConfigError(f"ticks_per_slow_step must be >= 1, got {self.ticks_per_slow_step}")
        if self.n_slow_steps < 1:
            raise ConfigError(f"n_slow_steps must be >= 1, got {self.n_slow_steps}")
        cash = self.initial_cash_per_middleman()
        if any(c <= 0 for c in cash):
            raise ConfigError(f"initial_cash must be positive, got {self.initial_cash}")
        if isinstance(self.initial_price, UniformSpec):
            self.initial_price.validate("initial_price", positive=True)
        elif self.initial_price <= 0:
            raise ConfigError(f"initial_price must be positive, got {self.initial_price}")
        if not (0.0 <= self.safety_margin_fraction < 1.0):
            raise ConfigError(
                f"safety_margin_fraction must lie in [0, 1), got {self.safety_margin_fraction}"
            )
        for name, tol in (("s_tol", self.s_tol), ("c_tol", self.c_tol)):
            if isinstance(tol, UniformSpec):
                tol.validate(name)
            elif tol < 0:
                raise ConfigError(f"{name} must be >= 0, got {tol}")
        if self.first_tick_bid_policy not in FIRST_TICK_POLICIES:
            raise ConfigError(
                f"first_tick_bid_policy must be one of {FIRST_TICK_POLICIES}, "
                f"got {self.first_tick_bid_policy!r}"
            )

    def initial_cash_per_middleman(self) -> tuple:
        """Initial cash resolved to one value per middleman."""
        if isinstance(self.initial_cash, (int, float)):
            return (float(self.initial_cash),) * self.n_middlemen
        cash = tuple(float(c) for c in self.initial_cash)
        if len(cash) != self.n_middlemen:
            raise ConfigError(
                f"initial_cash: expected {self.n_middlemen} values, got {len(cash)}"
            )
        return cash

    def margin_for(self, initial_cash: float) -> float:
        """Cash withheld from bidding: a fixed fraction of the initial stake."""
        return self.safety_margin_fraction * initial_cash


@dataclass
class UserAgent:
    """A satisficing consumer. q, s_tol and c_tol are fixed for the whole run."""

    id: int
    q: float
    s_tol: float
    c_tol: float
    middleman_id: int
    demands_in_window: int = 0
    satisfied_in_window: int = 0


@dataclass
class MiddlemanAgent:
    """A reseller holding cash and a posted retail price.

    ``last_tick_demand`` is the GCU count his users demanded on the previous
    fast tick; it sizes his next auction bid. ``inventory`` holds this tick's
    allocation and is zero between ticks (GCUs perish).
    """

    id: int
    cash: float
    initial_cash: float
    retail_price: float
    prev_retail_price: float
    last_tick_demand: int
    inventory: int = 0


@dataclass
class MarketState:
    """Mutable world state advanced by exactly one simulation loop at a time."""

    config: SimConfig
    tick: int
    slow_step: int
    middlemen: list
    users: list
    rng: np.random.Generator

    def user_counts(self) -> np.ndarray:
        counts = np.zeros(self.config.n_middlemen, dtype=np.int64)
        for u in self.users:
            counts[u.middleman_id] += 1
        return counts

    def retail_prices(self) -> np.ndarray:
        return np.array([m.retail_price for m in self.middlemen])


def make_rng(seed: int) -> np.random.Generator:
    """The run generator: PCG64 keyed by ``SeedSequence(seed)``.

    Distinct seeds give statistically independent streams, so sweep members
    derive their substream purely from their own seed value.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _draw(spec: ScalarOrUniform, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, UniformSpec):
        return rng.uniform(spec.low, spec.high, n)
    return np.full(n, float(spec))


def init_market(config: SimConfig) -> MarketState:
    """Create the initial market state from a validated config.

    Stream consumption order (fixed, part of the determinism contract):

    1. ``rng.random(n_users)`` for the demand probabilities q,
    2. ``rng.uniform(low, high, n_users)`` for s_tol, then c_tol, but only
       when the respective spec is a range (scalar specs consume nothing),
    3. ``rng.integers(0, n_middlemen, n_users)`` for the user assignment,
    4. ``rng.uniform(low, high, n_middlemen)`` for the initial prices when
       that spec is a range.
    """
    config.validate()
    rng = make_rng(config.rng_seed)

    q = rng.random(config.n_users)
    s_tols = _draw(config.s_tol, config.n_users, rng)
    c_tols = _draw(config.c_tol, config.n_users, rng)
    assignment = rng.integers(0, config.n_middlemen, config.n_users)
    prices = _draw(config.initial_price, config.n_middlemen, rng)

    users = [
        UserAgent(id=u, q=float(q[u]), s_tol=float(s_tols[u]), c_tol=float(c_tols[u]),
                  middleman_id=int(assignment[u]))
        for u in range(config.n_users)
    ]

    counts = np.bincount(assignment, minlength=config.n_middlemen)
    cash = config.initial_cash_per_middleman()
    middlemen = []
    for m in range(config.n_middlemen):
        if config.first_tick_bid_policy == "user-count":
            first_demand = int(counts[m])
        else:
            first_demand = int(counts[m]) // 2
        middlemen.append(
            MiddlemanAgent(
                id=m,
                cash=cash[m],
                initial_cash=cash[m],
                retail_price=float(prices[m]),
                prev_retail_price=float(prices[m]),
                last_tick_demand=first_demand,
            )
        )

    return MarketState(config=config, tick=0, slow_step=0,
                       middlemen=middlemen, users=users, rng=rng)
