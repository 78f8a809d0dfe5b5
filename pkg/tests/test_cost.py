import math
from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from mecoffload.cost import FAMILIES, CostWeights, DelayCostSpec, delay_cost, reward, total_cost


class TestDelayCost:
    def test_strict(self):
        spec = DelayCostSpec("strict", tau_th=1.0, c_max=100.0)
        assert delay_cost(spec, 0.5) == 0.0
        assert delay_cost(spec, 1.0) == 0.0
        assert delay_cost(spec, 2.0) == 100.0

    def test_power(self):
        assert delay_cost(DelayCostSpec("power", c2=2.0, c_max=10.0), 2.0) == 4.0
        assert delay_cost(DelayCostSpec("quadratic", c2=2.0, c_max=10.0), 2.0) == 4.0
        assert delay_cost(DelayCostSpec("power", c2=2.0, c_max=10.0), 5.0) == 10.0

    def test_logarithmic(self):
        assert delay_cost(DelayCostSpec("logarithmic", c4=1.0, c_max=10.0), math.e - 1) == pytest.approx(1.0)

    def test_exponential(self):
        spec = DelayCostSpec("exponential", c1=1.0, c_max=100.0)
        assert delay_cost(spec, 1.0) == pytest.approx(math.e - 1)
        assert delay_cost(spec, 10.0) == 100.0
        assert delay_cost(spec, 1e6) == 100.0

    def test_tolerant_power(self):
        assert delay_cost(DelayCostSpec("tolerant_power", c3=0.5), 9.0) == pytest.approx(3.0)

    def test_linear(self):
        spec = DelayCostSpec("linear", c_max=100.0)
        assert delay_cost(spec, 3.25) == 3.25
        assert delay_cost(spec, 250.0) == 100.0

    def test_negative_delay(self):
        with pytest.raises(ValueError):
            delay_cost(DelayCostSpec(), -1.0)

    @pytest.mark.parametrize("kwargs", [
        dict(family="power", c2=1.0),
        dict(family="quadratic", c2=0.5),
        dict(family="exponential", c1=0.0),
        dict(family="tolerant_power", c3=1.5),
        dict(family="tolerant_power", c3=0.0),
        dict(family="logarithmic", c4=0.0),
        dict(family="strict", tau_th=0.0),
        dict(family="linear", c_max=0.0),
        dict(family="cubic"),
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ValueError):
            DelayCostSpec(**kwargs)


class TestTotalCost:
    def test_delay_only(self):
        assert total_cost(CostWeights(1, 0), 4.0, 2.0) == 4.0

    def test_mixed(self):
        assert total_cost(CostWeights(0.5, 0.5), 4.0, 2.0) == 3.0

    def test_energy_only(self):
        assert total_cost(CostWeights(0, 1), 4.0, 2.0) == 2.0

    @pytest.mark.parametrize("w", [(0, 0), (-1, 1), (1, math.inf), (math.nan, 1)])
    def test_invalid_weights(self, w):
        with pytest.raises(ValueError):
            CostWeights(*w)

    def test_reduction_to_delay_objective(self):
        linear = DelayCostSpec("linear", c_max=1e9)
        for tau in (0.0, 0.37, 7.5, 123.0):
            assert total_cost(CostWeights(1, 0), delay_cost(linear, tau), 99.0) == tau


class TestReward:
    def outcome(self, **kw):
        base = dict(delay=0.0, cost=0.0, tau_local=0.0, tau_edge=0.0)
        base.update(kw)
        return SimpleNamespace(**base)

    def test_delay(self):
        assert reward(self.outcome(delay=3.5), "delay") == -3.5

    def test_partial(self):
        assert reward(self.outcome(tau_local=2.0, tau_edge=3.0), "partial") == -3.0

    def test_cost(self):
        assert reward(self.outcome(cost=7.0), "cost") == -7.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            reward(self.outcome(), "bogus")


@st.composite
def specs(draw):
    family = draw(st.sampled_from(FAMILIES))
    return DelayCostSpec(
        family=family,
        tau_th=draw(st.floats(0.01, 10)),
        c1=draw(st.floats(0.01, 5)),
        c2=draw(st.floats(1.01, 4)),
        c3=draw(st.floats(0.01, 1)),
        c4=draw(st.floats(0.01, 10)),
        c_max=draw(st.floats(0.1, 1e3)),
    )


@settings(max_examples=1000, deadline=None)
@given(specs(), st.floats(0, 100), st.floats(0, 100))
def test_monotone_and_capped(spec, a, b):
    lo, hi = sorted((a, b))
    c_lo, c_hi = delay_cost(spec, lo), delay_cost(spec, hi)
    assert 0.0 <= c_lo <= c_hi <= spec.c_max
