"""Cost model checks against two published study tables.

Each table row maps a fleet size and its optimized total gain to converter
cost, cell cost, and total cost in dollars. The tables are reproduced here
to 0.1% and the recommendation rule must pick the cheapest feasible row.
"""

import pytest

from bessdamp.cost import CostConfig, CostReport, fleet_cost, recommend

# rows: (n_es, objective, converter $M, cell $M, total $M, feasible)
PROPORTIONAL_SWEEP = [
    (1, 50.000, 21.072, 2.1852, 23.257, False),
    (2, 59.722, 25.169, 4.3704, 29.539, True),
    (3, 60.386, 25.448, 6.5556, 32.004, True),
    (4, 59.766, 25.187, 8.7408, 33.928, True),
    (5, 66.354, 27.964, 10.926, 38.890, True),
    (6, 72.739, 30.654, 13.111, 43.766, True),
]

STRESSED_SWEEP = [
    (1, 100.00, 42.143, 2.1852, 44.328, False),
    (2, 200.00, 84.286, 4.3704, 88.656, False),
    (3, 252.62, 106.46, 6.5556, 113.02, True),
    (4, 301.65, 127.12, 8.7408, 135.86, True),
    (5, 317.51, 133.81, 10.926, 144.74, True),
    (6, 271.03, 114.22, 13.111, 127.33, True),
]


def reports(rows):
    return [fleet_cost(obj, n, feasible=feas)
            for n, obj, _, _, _, feas in rows]


class TestTableReproduction:
    @pytest.mark.parametrize("row", PROPORTIONAL_SWEEP)
    def test_proportional_sweep_row(self, row):
        n, obj, conv, cell, total, feas = row
        r = fleet_cost(obj, n, feasible=feas)
        assert r.converter_usd == pytest.approx(conv * 1e6, rel=1e-3)
        assert r.cell_usd == pytest.approx(cell * 1e6, rel=1e-3)
        assert r.total_usd == pytest.approx(total * 1e6, rel=1e-3)
        assert r.feasible is feas

    @pytest.mark.parametrize("row", STRESSED_SWEEP)
    def test_stressed_sweep_row(self, row):
        n, obj, conv, cell, total, feas = row
        r = fleet_cost(obj, n, feasible=feas)
        assert r.converter_usd == pytest.approx(conv * 1e6, rel=1e-3)
        assert r.cell_usd == pytest.approx(cell * 1e6, rel=1e-3)
        assert r.total_usd == pytest.approx(total * 1e6, rel=1e-3)

    def test_proportional_recommendation(self):
        assert recommend(reports(PROPORTIONAL_SWEEP)).n_es == 2

    def test_stressed_recommendation(self):
        assert recommend(reports(STRESSED_SWEEP)).n_es == 3


class TestModelStructure:
    def test_rated_power_conversion(self):
        # 60 p.u. gain * 0.01 p.u. sizing deviation * 100 MVA = 60 MW
        r = fleet_cost(60.0, 3)
        assert r.rated_power_kw == pytest.approx(60_000.0)

    def test_converter_cost_linear_in_objective(self):
        a = fleet_cost(10.0, 2)
        b = fleet_cost(20.0, 2)
        assert b.converter_usd == pytest.approx(2.0 * a.converter_usd)
        assert b.cell_usd == a.cell_usd

    def test_cell_cost_linear_in_unit_count(self):
        a = fleet_cost(10.0, 1)
        b = fleet_cost(10.0, 4)
        assert b.cell_usd == pytest.approx(4.0 * a.cell_usd)
        assert b.converter_usd == a.converter_usd

    def test_total_is_the_sum(self):
        r = fleet_cost(33.3, 5)
        assert r.total_usd == r.converter_usd + r.cell_usd

    def test_custom_prices(self):
        cfg = CostConfig(converter_usd_per_kw=100.0, cell_usd_per_kwh=50.0,
                         dw_max=0.02, e_per_unit_mwh=5.0, s_base_mva=200.0)
        r = fleet_cost(10.0, 2, cfg)
        assert r.rated_power_kw == pytest.approx(10.0 * 0.02 * 200.0 * 1000.0)
        assert r.converter_usd == pytest.approx(r.rated_power_kw * 100.0)
        assert r.cell_usd == pytest.approx(2 * 5.0 * 1000.0 * 50.0)

    def test_zero_objective_prices_cells_only(self):
        r = fleet_cost(0.0, 2)
        assert r.converter_usd == 0.0
        assert r.total_usd == r.cell_usd


class TestRecommendation:
    def make(self, n, total, feasible=True):
        return CostReport(n_es=n, objective=1.0, rated_power_kw=1.0,
                          converter_usd=total / 2, cell_usd=total / 2,
                          total_usd=total, feasible=feasible)

    def test_cheapest_feasible_wins(self):
        rows = [self.make(1, 10.0, feasible=False), self.make(2, 30.0),
                self.make(3, 20.0)]
        assert recommend(rows).n_es == 3

    def test_tie_breaks_toward_fewer_units(self):
        rows = [self.make(4, 20.0), self.make(2, 20.0), self.make(3, 20.0)]
        assert recommend(rows).n_es == 2

    def test_all_infeasible_rejected(self):
        rows = [self.make(1, 10.0, feasible=False),
                self.make(2, 20.0, feasible=False)]
        with pytest.raises(ValueError):
            recommend(rows)


class TestValidation:
    def test_negative_objective_rejected(self):
        with pytest.raises(ValueError):
            fleet_cost(-1.0, 2)

    def test_zero_units_rejected(self):
        with pytest.raises(ValueError):
            fleet_cost(10.0, 0)

    def test_config_errors(self):
        with pytest.raises(ValueError):
            CostConfig(converter_usd_per_kw=-1.0)
        with pytest.raises(ValueError):
            CostConfig(dw_max=0.0)
        with pytest.raises(ValueError):
            CostConfig(s_base_mva=0.0)
        with pytest.raises(ValueError):
            CostConfig(e_per_unit_mwh=0.0)
