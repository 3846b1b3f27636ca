import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridmarket import ConfigError, SimConfig, UniformSpec, init_market


def reference_config(**overrides):
    base = dict(n_middlemen=10, n_users=100, supply_per_tick=40,
                initial_cash=21.0, s_tol=0.5, c_tol=0.5, rng_seed=1)
    base.update(overrides)
    return SimConfig(**base)


class TestConfigValidation:
    def test_reference_config_valid(self):
        reference_config().validate()

    @pytest.mark.parametrize("field,value", [
        ("n_middlemen", 0),
        ("n_users", 0),
        ("supply_per_tick", -1),
        ("ticks_per_slow_step", 0),
        ("n_slow_steps", 0),
        ("initial_cash", 0.0),
        ("initial_cash", -3.0),
        ("initial_price", 0.0),
        ("safety_margin_fraction", 1.0),
        ("safety_margin_fraction", -0.1),
        ("s_tol", -0.5),
        ("c_tol", -2.0),
        ("first_tick_bid_policy", "whatever"),
    ])
    def test_rejection_names_field(self, field, value):
        with pytest.raises(ConfigError, match=field):
            reference_config(**{field: value}).validate()

    def test_per_middleman_cash_wrong_length(self):
        with pytest.raises(ConfigError, match="initial_cash"):
            reference_config(initial_cash=(21.0, 22.0)).validate()

    def test_price_range_must_be_positive(self):
        with pytest.raises(ConfigError, match="initial_price"):
            reference_config(initial_price=UniformSpec(0.0, 1.0)).validate()


class TestInitMarket:
    def test_rejects_invalid_config(self):
        with pytest.raises(ConfigError):
            init_market(reference_config(n_middlemen=0))

    def test_reference_config_shape(self):
        state = init_market(reference_config())
        assert len(state.users) == 100
        assert len(state.middlemen) == 10
        for m in state.middlemen:
            assert m.cash == 21.0
            assert m.retail_price == m.prev_retail_price > 0
            assert m.inventory == 0

    def test_mean_demand_near_fifty(self):
        # sum of q has mean 50 and sd sqrt(100/12); allow 4 sigma
        state = init_market(reference_config())
        total_q = sum(u.q for u in state.users)
        assert abs(total_q - 50.0) < 4 * math.sqrt(100 / 12)

    def test_q_uniform_mean(self):
        state = init_market(reference_config(n_users=400, rng_seed=5))
        mean_q = np.mean([u.q for u in state.users])
        assert abs(mean_q - 0.5) < 4 * math.sqrt(1 / (12 * 400))

    def test_single_middleman_assignment(self):
        state = init_market(SimConfig(n_middlemen=1, n_users=1, rng_seed=0))
        assert state.users[0].middleman_id == 0

    def test_every_user_references_valid_middleman(self):
        state = init_market(reference_config(rng_seed=9))
        for u in state.users:
            assert 0 <= u.middleman_id < 10

    def test_same_seed_identical_states(self):
        a = init_market(reference_config(rng_seed=123))
        b = init_market(reference_config(rng_seed=123))
        assert [(u.q, u.middleman_id, u.s_tol, u.c_tol) for u in a.users] == \
               [(u.q, u.middleman_id, u.s_tol, u.c_tol) for u in b.users]
        assert [(m.cash, m.retail_price, m.last_tick_demand) for m in a.middlemen] == \
               [(m.cash, m.retail_price, m.last_tick_demand) for m in b.middlemen]

    def test_first_tick_policy_user_count(self):
        state = init_market(reference_config(rng_seed=2))
        counts = state.user_counts()
        for m in state.middlemen:
            assert m.last_tick_demand == counts[m.id]

    def test_first_tick_policy_half(self):
        full = init_market(reference_config(rng_seed=2))
        half = init_market(reference_config(rng_seed=2,
                                        first_tick_bid_policy="half-user-count"))
        for a, b in zip(full.middlemen, half.middlemen):
            assert b.last_tick_demand == a.last_tick_demand // 2

    def test_per_middleman_cash(self):
        cash = tuple(float(10 + i) for i in range(10))
        state = init_market(reference_config(initial_cash=cash))
        assert tuple(m.cash for m in state.middlemen) == cash
        assert tuple(m.initial_cash for m in state.middlemen) == cash

    def test_tolerance_range_spec(self):
        cfg = reference_config(n_users=500, s_tol=UniformSpec(0.2, 0.8),
                           c_tol=UniformSpec(0.1, 0.3))
        state = init_market(cfg)
        s = [u.s_tol for u in state.users]
        c = [u.c_tol for u in state.users]
        assert min(s) >= 0.2 and max(s) < 0.8
        assert min(c) >= 0.1 and max(c) < 0.3
        assert np.std(s) > 0

    def test_scalar_price(self):
        state = init_market(reference_config(initial_price=2.5))
        assert all(m.retail_price == 2.5 for m in state.middlemen)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63 - 1),
       n_mid=st.integers(1, 12),
       n_users=st.integers(1, 60))
def test_init_pure_function_of_config(seed, n_mid, n_users):
    cfg = SimConfig(n_middlemen=n_mid, n_users=n_users, rng_seed=seed)
    a = init_market(cfg)
    b = init_market(cfg)
    assert [(u.q, u.middleman_id) for u in a.users] == \
           [(u.q, u.middleman_id) for u in b.users]
    assert all(0 <= u.middleman_id < n_mid for u in a.users)
    assert all(0.0 <= u.q <= 1.0 for u in a.users)
