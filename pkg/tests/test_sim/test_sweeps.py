import pytest

from lima.core.model import Scenario
from lima.sim.sweeps import SIZES_KM, TRAFFIC_PERIODS_S, sweep_variable_size, sweep_variable_traffic


@pytest.fixture
def quick_base() -> Scenario:
    return Scenario.from_config(None, sim_hours=0.1, seed=2)


def test_size_grid():
    assert len(SIZES_KM) == 17
    assert (SIZES_KM[0], SIZES_KM[-1]) == (2.0, 10.0)
    assert TRAFFIC_PERIODS_S == (7200.0, 3600.0, 1800.0, 900.0, 600.0, 450.0, 300.0)


def test_size_sweep_rows_sorted_by_size_then_mode(quick_base):
    rows = sweep_variable_size(quick_base, sizes_km=(3.0, 2.0))

    assert [(r.area_side_km, r.mode) for r in rows] == [
        (2.0, "baseline"), (2.0, "lima"), (3.0, "baseline"), (3.0, "lima"),
    ]
    assert [r.ed_count for r in rows] == [4, 4, 9, 9], "ED count follows the area"


def test_traffic_sweep_uses_fixed_area(quick_base):
    rows = sweep_variable_traffic(quick_base, periods_s=(1800.0, 900.0))

    assert {r.area_side_km for r in rows} == {6.0}
    assert [r.packets_per_hour for r in rows] == [2.0, 2.0, 4.0, 4.0]


def test_seeds_multiply_rows(quick_base):
    rows = sweep_variable_size(quick_base, seeds=[5, 3], sizes_km=(2.0,))
    assert [(r.mode, r.seed) for r in rows] == [("baseline", 3), ("baseline", 5), ("lima", 3), ("lima", 5)]


@pytest.mark.slow
def test_full_grids_row_counts():
    base = Scenario.from_config(None, sim_hours=0.05)
    assert len(sweep_variable_size(base)) == 34
    assert len(sweep_variable_traffic(base)) == 14


@pytest.mark.slow
def test_process_pool_matches_serial(quick_base):
    serial = sweep_variable_size(quick_base, sizes_km=(2.0, 4.0), jobs=1)
    pooled = sweep_variable_size(quick_base, sizes_km=(2.0, 4.0), jobs=2)
    assert serial == pooled


@pytest.mark.slow
def test_mesh_outdelivers_single_hop_on_large_areas():
    base = Scenario.from_config(None, sim_hours=4.0, seed=1)
    rows = {r.mode: r for r in sweep_variable_size(base, sizes_km=(10.0,))}

    assert rows["lima"].pdr_percent > 2.0 * rows["baseline"].pdr_percent, (
        f"LIMA {rows['lima'].pdr_percent:.1f}% vs baseline {rows['baseline'].pdr_percent:.1f}%"
    )
