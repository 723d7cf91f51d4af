import pickle

import numpy as np
import pytest

from moeda.analysis import (
    Evaluator, Objectives, PowerConfig, chromosome_hash, evaluate, evaluate_netlist, gate_area,
    internal_power, leakage_power, objectives_row, power_breakdown, switching_power,
)
from moeda.errors import ConstraintError
from moeda.netlist import Chromosome, Gate, Netlist, apply_chromosome, load_benchmark, tech_map
from moeda.timing import TimingConstraint, WireModel, run_sta

from oracles import flat_library, inv_chain, table_value

PC = PowerConfig(voltage=1.2, frequency=250e6, switching_activity=0.2)


def _single_inv(cell="INVX1"):
    return inv_chain(1, cell)


class TestLeakage:
    def test_table_values(self, orig_lib):
        n = Netlist.build(["a", "b"], ["y"], [Gate("i0", "INV", ("a",)), Gate("i1", "INV", ("b",)),
                                              Gate("y", "NAND2", ("i0", "i1"))],
                          ["INVX1", "INVX1", "NANDX0"])
        assert leakage_power(n, orig_lib) == pytest.approx(4.18e-5, rel=1e-12)

    def test_empty(self, orig_lib):
        assert leakage_power(Netlist.build(["a"], [], [], []), orig_lib) == 0.0

    def test_swap_to_x24(self, orig_lib):
        n = inv_chain(3, "INVX1")
        swapped = n.with_cells(["INVX1", "INVX24", "INVX1"])
        delta = leakage_power(swapped, orig_lib) - leakage_power(n, orig_lib)
        assert delta == pytest.approx((0.5790 - 0.0133) * 1e-3, rel=1e-12)


class TestInternal:
    def test_flat_energy(self):
        lib = flat_library(0.1, energy=0.01)
        n = _single_inv()
        assert internal_power(n, lib, PC, run_sta(n, lib)) == pytest.approx(0.5, rel=1e-12)

    def test_zero_activity(self):
        lib = flat_library(0.1, energy=0.01, input_pin_energy=0.02)
        n = _single_inv()
        pc = PowerConfig(switching_activity=0.0)
        assert internal_power(n, lib, pc, run_sta(n, lib)) == 0.0

    def test_linear_in_frequency(self, fine_lib):
        n = tech_map(load_benchmark("c432"), fine_lib)
        sta = run_sta(n, fine_lib)
        one = internal_power(n, fine_lib, PowerConfig(frequency=250e6), sta)
        two = internal_power(n, fine_lib, PowerConfig(frequency=500e6), sta)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_input_pin_energy(self):
        # NAND2: two inputs at 0.004 pJ each plus 0.01 pJ per output toggle
        lib = flat_library(0.1, energy=0.01, input_pin_energy=0.004)
        n = Netlist.build(["a", "b"], ["y"], [Gate("y", "NAND2", ("a", "b"))], ["NANDX0"])
        expected = (0.01 + 2 * 0.004) * 1e-12 * 0.2 * 250e6 * 1e6
        assert internal_power(n, lib, PC, run_sta(n, lib)) == pytest.approx(expected, rel=1e-12)


class TestSwitching:
    def test_single_net(self):
        lib = flat_library(0.1, pin_cap=10.0)
        assert switching_power(_single_inv(), lib, PC) == pytest.approx(0.36, rel=1e-12)

    def test_zero_load(self):
        lib = flat_library(0.1, pin_cap=0.0)
        assert switching_power(_single_inv(), lib, PC) == 0.0

    def test_voltage_squared(self):
        lib = flat_library(0.1, pin_cap=10.0)
        double = PowerConfig(voltage=2.4)
        assert switching_power(_single_inv(), lib, double) == pytest.approx(4 * 0.36, rel=1e-12)

    def test_wire_adds_load(self):
        lib = flat_library(0.1, pin_cap=10.0)
        p = switching_power(_single_inv(), lib, PC, wire=WireModel(5.0))
        assert p == pytest.approx(0.36 * 1.5, rel=1e-12)


class TestArea:
    def test_x24(self, orig_lib):
        assert gate_area(_single_inv("INVX24"), orig_lib) == pytest.approx(11.88, rel=1e-12)

    def test_empty(self, orig_lib):
        assert gate_area(Netlist.build(["a"], [], [], []), orig_lib) == 0.0

    def test_small_cells_same_area(self, fine_lib):
        n = tech_map(load_benchmark("c432"), fine_lib)
        k = len(n.sizable_ids)
        areas = {gate_area(apply_chromosome(n, Chromosome([g] * k), fine_lib), fine_lib)
                 for g in (0, 1, 2)}
        assert len(areas) == 1


class TestEvaluate:
    def test_deterministic(self, fine_lib):
        n = tech_map(load_benchmark("c880"), fine_lib)
        c = Chromosome(np.random.default_rng(0).integers(0, 21, len(n.sizable_ids)))
        assert evaluate(n, c, fine_lib) == evaluate(n, c, fine_lib)

    def test_min_drive_min_area(self, fine_lib):
        n = tech_map(load_benchmark("c432"), fine_lib)
        k = len(n.sizable_ids)
        floor = evaluate(n, Chromosome([0] * k), fine_lib).A_gate
        rng = np.random.default_rng(4)
        for _ in range(20):
            assert floor <= evaluate(n, Chromosome(rng.integers(0, 21, k)), fine_lib).A_gate

    def test_three_inverter_hand_computation(self, orig_lib):
        cells = ["INVX1", "INVX2", "INVX4"]
        n = inv_chain(3).with_cells(cells)
        tc = TimingConstraint(output_load_cell="INVX3")
        lib = orig_lib
        caps = [lib.cell(c).input_pin_cap for c in cells]
        loads = [caps[1], caps[2], lib.cell("INVX3").input_pin_cap]
        # rise and fall alternate down the chain; the tables are rise/fall symmetric
        slew, arrival = lib.nominal_slew, 0.0
        leak = internal = 0.0
        for cell_name, load in zip(cells, loads):
            arc = lib.cell(cell_name).timing_arcs[0]
            p_arc = lib.cell(cell_name).power_arcs[0]
            e = 0.5 * (table_value(p_arc.rise_energy, slew, load)
                       + table_value(p_arc.fall_energy, slew, load)) + p_arc.input_pin_energy
            internal += e * 0.2 * 250e6 * 1e-12 * 1e6
            leak += lib.cell(cell_name).leakage_avg * 1e-3
            arrival += table_value(arc.cell_rise, slew, load)
            slew = table_value(arc.rise_transition, slew, load)
        switching = 0.5 * sum(loads) * 1e-15 * 1.2 ** 2 * 250e6 * 0.2 * 1e6
        area = sum(lib.cell(c).width * 1.8 for c in cells)
        got = evaluate_netlist(n, lib, tc)
        assert got.D_wc == pytest.approx(arrival, rel=1e-12)
        assert got.P_total == pytest.approx(leak + internal + switching, rel=1e-12)
        assert got.A_gate == pytest.approx(area, rel=1e-12)

    def test_breakdown_sums(self, fine_lib):
        n = tech_map(load_benchmark("c1908"), fine_lib)
        sta = run_sta(n, fine_lib)
        parts = power_breakdown(n, fine_lib, PC, sta)
        assert min(parts.leakage, parts.internal, parts.switching) >= 0
        assert evaluate_netlist(n, fine_lib, sta=sta).P_total == (
            parts.leakage + parts.internal + parts.switching)

    def test_dynamic_part_linear_in_activity(self, fine_lib):
        n = tech_map(load_benchmark("c432"), fine_lib)
        p = {a: evaluate_netlist(n, fine_lib, pc=PowerConfig(switching_activity=a)).P_total
             for a in (0.0, 0.1, 0.2, 0.4)}
        for a in (0.1, 0.2, 0.4):
            assert p[a] - p[0.0] == pytest.approx((p[0.1] - p[0.0]) * a / 0.1, rel=1e-9)

    def test_area_depends_on_multiset_only(self, fine_lib):
        n = tech_map(load_benchmark("c432"), fine_lib)
        k = len(n.sizable_ids)
        genes = list(np.random.default_rng(9).integers(0, 21, k))
        a = evaluate(n, Chromosome(genes), fine_lib).A_gate
        b = evaluate(n, Chromosome(genes[::-1]), fine_lib).A_gate
        assert a == pytest.approx(b, rel=1e-12)


class TestTypes:
    def test_power_config_validation(self):
        with pytest.raises(ConstraintError):
            PowerConfig(voltage=0.0)
        with pytest.raises(ConstraintError):
            PowerConfig(switching_activity=1.5)

    def test_objectives_validation(self):
        with pytest.raises(ConstraintError):
            Objectives(float("nan"), 1.0, 1.0)
        with pytest.raises(ConstraintError):
            Objectives(1.0, -1.0, 1.0)

    def test_evaluator_pickles(self, fine_lib):
        n = tech_map(load_benchmark("c17"), fine_lib)
        ev = Evaluator(n, fine_lib)
        c = Chromosome([3] * ev.gene_count)
        assert pickle.loads(pickle.dumps(ev))(c) == ev(c)
        assert ev.option_count == 21

    def test_objectives_row(self):
        c = Chromosome((1, 2))
        row = objectives_row(c, Objectives(1.0, 2.0, 3.0))
        assert row == {"chromosome_hash": chromosome_hash(c), "D_wc": 1.0, "P_total": 2.0,
                       "A_gate": 3.0}
