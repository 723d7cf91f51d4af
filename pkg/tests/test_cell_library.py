import json
import random
from dataclasses import replace

import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator

from moeda.cell_library import (
    CELL_HEIGHT, MINI_FINE_DRIVES, MINI_FINE_PAIRS, MINI_ORIG_DRIVES, Library, LookupTable2D,
    SyntheticParams, generate_synthetic_library, interpolate_fine_cells, library_to_dict,
    load_library, lookup, measure_drive_strength, save_library,
)
from moeda.errors import ConstraintError, MeasurementError, SchemaError, StructuralError

from oracles import bilinear


def _random_table(rng: np.random.Generator, shape=(7, 7)) -> LookupTable2D:
    xs = np.cumsum(rng.uniform(0.01, 1.0, shape[0]))
    ys = np.cumsum(rng.uniform(0.01, 5.0, shape[1]))
    return LookupTable2D(tuple(xs), tuple(ys), rng.uniform(-1, 1, shape).tolist())


class TestLookup:
    def test_grid_point_is_exact(self, orig_lib):
        t = orig_lib.cell("INVX2").timing_arcs[0].cell_rise
        assert lookup(t, t.slew_index[2], t.load_index[4]) == t.values[2][4]

    def test_all_grid_points_exact(self):
        t = _random_table(np.random.default_rng(1))
        for i, s in enumerate(t.slew_index):
            for j, c in enumerate(t.load_index):
                assert lookup(t, s, c) == t.values[i][j]

    def test_two_by_two_midpoint(self):
        t = LookupTable2D((0.0, 1.0), (0.0, 1.0), ((1.0, 2.0), (3.0, 4.0)))
        assert lookup(t, 0.5, 0.5) == 2.5

    def test_matches_hand_oracle(self):
        rng = np.random.default_rng(2)
        t = _random_table(rng)
        for _ in range(200):
            s = rng.uniform(t.slew_index[0], t.slew_index[-1])
            c = rng.uniform(t.load_index[0], t.load_index[-1])
            expected = bilinear(t.slew_index, t.load_index, t.values, s, c)
            assert lookup(t, s, c) == pytest.approx(expected, rel=1e-12, abs=1e-14)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        t = _random_table(rng)
        ref = RegularGridInterpolator((t.slew_index, t.load_index), np.array(t.values))
        pts = np.column_stack([rng.uniform(t.slew_index[0], t.slew_index[-1], 200),
                               rng.uniform(t.load_index[0], t.load_index[-1], 200)])
        for (s, c), v in zip(pts, ref(pts)):
            assert lookup(t, s, c) == pytest.approx(v, rel=1e-12, abs=1e-14)

    def test_inside_not_flagged(self):
        t = LookupTable2D((0.0, 1.0), (0.0, 1.0), ((1.0, 2.0), (3.0, 4.0)))
        assert t.evaluate(0.3, 1.0) == (pytest.approx(2.6), False)

    def test_extrapolation_is_linear_and_flagged(self):
        # f(s, c) = 1 + 2s + 3c is reproduced exactly by bilinear extrapolation
        t = LookupTable2D((0.0, 1.0, 2.0), (0.0, 1.0),
                          [[1 + 2 * s + 3 * c for c in (0.0, 1.0)] for s in (0.0, 1.0, 2.0)])
        for s, c in ((-1.0, 0.5), (3.0, 0.5), (0.5, 4.0), (5.0, -2.0)):
            value, outside = t.evaluate(s, c)
            assert outside
            assert value == pytest.approx(1 + 2 * s + 3 * c, abs=1e-12)

    def test_descending_index_rejected(self):
        with pytest.raises(StructuralError):
            LookupTable2D((0.0, 1.0), (1.0, 0.5), ((1, 2), (3, 4)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(StructuralError):
            LookupTable2D((0.0, 1.0), (0.0, 1.0), ((1, 2, 3), (3, 4, 5)))


class TestSyntheticLibrary:
    def test_mini_fine_contents(self, fine_lib):
        assert fine_lib.drive_set("INV") == MINI_FINE_DRIVES
        assert len(fine_lib.cells_of("INV")) == 21
        assert [c.name for c in fine_lib.cells_of("NAND2")] == ["NANDX0"]

    def test_custom_mini_fine_drive_set_accepted(self):
        lib = generate_synthetic_library(drive_sets={"INV": MINI_FINE_DRIVES, "NAND2": (0.0,)})
        assert len(lib.cells_of("INV")) == 21 and len(lib.cells_of("NAND2")) == 1

    def test_reference_rows(self, orig_lib, fine_lib):
        x1 = orig_lib.cell("INVX1")
        assert x1.leakage_avg == 0.0133
        assert x1.width == 0.6
        assert orig_lib.cell("INVX24").width == 6.6
        assert orig_lib.cell("NANDX0").leakage_avg == 0.0152
        assert fine_lib.cell("INVX7").width == 2.2

    def test_invx8_average_corrected(self, orig_lib):
        c = orig_lib.cell("INVX8")
        assert c.leakage_min <= c.leakage_avg <= c.leakage_max
        assert c.leakage_avg == pytest.approx(0.1675)

    def test_height_and_area(self, fine_lib):
        for c in fine_lib.cells:
            assert c.height == CELL_HEIGHT == 1.8
            assert c.area == c.width * c.height

    def test_four_tables_share_indexes(self, fine_lib):
        for c in fine_lib.cells:
            for arc in c.timing_arcs:
                tables = arc.tables()
                assert len(tables) == 4
                assert len({(t.slew_index, t.load_index) for t in tables}) == 1
                assert tables[0].shape == (7, 7)

    def test_library_invariants(self, orig_lib, fine_lib):
        assert orig_lib.check_invariants() == []
        assert fine_lib.check_invariants() == []

    def test_smallest_cells_share_width(self, fine_lib):
        widths = {fine_lib.cell(n).width for n in ("INVX0", "INVX0.5", "INVX1")}
        assert widths == {0.6}

    def test_load_index_spans_drive(self, orig_lib):
        for x in (1.0, 4.0, 24.0):
            idx = orig_lib.cell_for("INV", x).timing_arcs[0].cell_rise.load_index
            assert idx[0] == pytest.approx(0.1 * x * orig_lib.C_unit)
            assert idx[-1] == pytest.approx(4.0 * x * orig_lib.C_unit)

    def test_tables_follow_first_order_model(self, orig_lib):
        p = SyntheticParams()
        b = p.T_unit - p.delay_slew_coeff * p.nominal_slew - p.delay_load_coeff * p.C_unit
        for x in (1.0, 3.0, 12.0):
            t = orig_lib.cell_for("INV", x).timing_arcs[0].cell_fall
            for i, s in enumerate(t.slew_index):
                for j, c in enumerate(t.load_index):
                    expected = p.delay_slew_coeff * s + b + p.delay_load_coeff * c / x
                    assert t.values[i][j] == pytest.approx(expected, rel=1e-12)

    def test_unit_delay_at_rated_load(self, fine_lib):
        s0 = fine_lib.nominal_slew
        for c in fine_lib.cells_of("INV"):
            arc = c.timing_arcs[0]
            load = c.drive * fine_lib.C_unit
            d = 0.5 * (lookup(arc.cell_rise, s0, load) + lookup(arc.cell_fall, s0, load))
            assert abs(d - fine_lib.T_unit) / fine_lib.T_unit <= 0.02, c.name

    def test_pin_cap_affine_in_drive(self, orig_lib):
        caps = [(c.drive, c.input_pin_cap) for c in orig_lib.cells_of("INV")]
        slope = (caps[-1][1] - caps[0][1]) / (caps[-1][0] - caps[0][0])
        for x, cap in caps:
            assert cap == pytest.approx(caps[0][1] + slope * x)

    @pytest.mark.parametrize("drives", [(), (1.0, -1.0), (2.0, 1.0)])
    def test_bad_drive_sets(self, drives):
        with pytest.raises(ConstraintError):
            generate_synthetic_library(drive_sets={"INV": drives, "NAND2": (0.0,)})

    def test_non_positive_coefficient(self):
        with pytest.raises(ConstraintError):
            generate_synthetic_library(delay_load_coeff=0.0)

    def test_skew_keeps_mean_delay(self):
        lib = generate_synthetic_library(rise_fall_skew=1.4)
        arc = lib.cell("INVX2").timing_arcs[0]
        assert arc.cell_rise.values[3][3] > arc.cell_fall.values[3][3]
        assert measure_drive_strength(lib, lib.cell("INVX2")) == pytest.approx(2.0, rel=0.02)


class TestInterpolation:
    def test_mini_fine_additions(self, orig_lib):
        lib = interpolate_fine_cells(orig_lib, MINI_FINE_PAIRS)
        added = sorted(c.drive for c in lib.cells_of("INV") if c.interpolated)
        assert added == [0.5, 1.5, 2.5, 3.5, 5.0, 7.0, 10.0, 14.0, 18.0, 22.0]
        assert lib.drive_set("INV") == MINI_FINE_DRIVES

    def test_load_index_is_midpoint(self, orig_lib):
        lib = interpolate_fine_cells(orig_lib, [(4.0, 6.0)])
        a, b, m = (lib.cell_for("INV", x).timing_arcs[0].cell_rise for x in (4.0, 6.0, 5.0))
        for la, lb, lm in zip(a.load_index, b.load_index, m.load_index):
            assert lm == (la + lb) / 2

    def test_values_are_neighbour_average(self, orig_lib):
        lib = interpolate_fine_cells(orig_lib, [(8.0, 12.0)])
        lo, hi, mid = (lib.cell_for("INV", x) for x in (8.0, 12.0, 10.0))
        for ta, tb, tm in zip(lo.timing_arcs[0].tables(), hi.timing_arcs[0].tables(),
                              mid.timing_arcs[0].tables()):
            assert np.array_equal(np.array(tm.values), (np.array(ta.values) + np.array(tb.values)) / 2)
        assert mid.input_pin_cap == (lo.input_pin_cap + hi.input_pin_cap) / 2
        assert mid.leakage_avg == (lo.leakage_avg + hi.leakage_avg) / 2
        assert mid.width >= min(lo.width, hi.width)

    def test_identical_parents(self, orig_lib):
        twin = generate_synthetic_library(drive_sets={"INV": (2.0, 4.0), "NAND2": (0.0,)})
        a = twin.cell("INVX2")
        b = replace(a, name="INVX4", drive=4.0)
        lib = Library("T", twin.voltage, twin.corner, twin.C_unit, twin.T_unit,
                      twin.nominal_slew, (a, b, twin.cell("NANDX0")))
        mid = interpolate_fine_cells(lib, [(2.0, 4.0)]).cell_for("INV", 3.0)
        assert mid.timing_arcs == a.timing_arcs
        assert mid.power_arcs == a.power_arcs

    def test_non_adjacent_pair(self, orig_lib):
        with pytest.raises(ConstraintError):
            interpolate_fine_cells(orig_lib, [(1.0, 3.0)])

    def test_duplicate_drive(self, fine_lib):
        with pytest.raises(ConstraintError):
            interpolate_fine_cells(fine_lib, [(1.0, 2.0)])

    def test_measured_drive_between_neighbours(self, fine_lib):
        drives = {c.drive: measure_drive_strength(fine_lib, c) for c in fine_lib.cells_of("INV")}
        for lo, hi in MINI_FINE_PAIRS:
            assert drives[lo] < drives[(lo + hi) / 2] < drives[hi]


class TestMeasureDrive:
    @pytest.mark.parametrize("x", MINI_ORIG_DRIVES)
    def test_synthetic_drive(self, orig_lib, x):
        measured = measure_drive_strength(orig_lib, orig_lib.cell_for("INV", x))
        assert measured == pytest.approx(x, rel=0.02, abs=1e-9)

    def test_interpolated_x1_5(self, fine_lib):
        assert 1.0 < measure_drive_strength(fine_lib, fine_lib.cell("INVX1.5")) < 2.0

    def test_bisection_matches_closed_form(self, orig_lib):
        # a*s0 + b + c*C/X = T_unit solves to C = X * C_unit for the synthetic model
        p = SyntheticParams()
        for x in (2.0, 6.0, 20.0):
            b = p.T_unit - p.delay_slew_coeff * p.nominal_slew - p.delay_load_coeff * p.C_unit
            c_star = (p.T_unit - p.delay_slew_coeff * p.nominal_slew - b) * x / p.delay_load_coeff
            assert measure_drive_strength(orig_lib, orig_lib.cell_for("INV", x)) == pytest.approx(
                c_star / p.C_unit, rel=1e-4)

    def test_non_monotone_table(self, orig_lib):
        cell = orig_lib.cell("INVX2")
        arc = cell.timing_arcs[0]
        flipped = arc.cell_rise.map(lambda v: -v)
        bad = replace(cell, timing_arcs=(replace(arc, cell_rise=flipped, cell_fall=flipped),))
        with pytest.raises(MeasurementError):
            measure_drive_strength(orig_lib, bad)


class TestSerialisation:
    def test_round_trip(self, fine_lib, tmp_path):
        path = tmp_path / "fine.json"
        save_library(fine_lib, path)
        back = load_library(path)
        assert back == fine_lib
        assert library_to_dict(back) == library_to_dict(fine_lib)
        assert [c.interpolated for c in back.cells] == [c.interpolated for c in fine_lib.cells]

    def test_missing_leakage_names_cell(self, orig_lib, tmp_path):
        data = library_to_dict(orig_lib)
        del data["cells"][3]["leakage"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaError, match=data["cells"][3]["name"]):
            load_library(path)

    def test_descending_load_index(self, orig_lib, tmp_path):
        data = library_to_dict(orig_lib)
        table = data["cells"][1]["timing"][0]["cell_rise"]
        table["load_index"] = table["load_index"][::-1]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(StructuralError, match="load_index"):
            load_library(path)

    def test_unknown_field_rejected(self, orig_lib, tmp_path):
        data = library_to_dict(orig_lib)
        data["cells"][0]["colour"] = "red"
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaError):
            load_library(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(SchemaError, match="line 1"):
            load_library(path)

    def test_random_float_round_trip(self, tmp_path):
        rng = random.Random(5)
        lib = generate_synthetic_library(C_unit=rng.uniform(1, 4) / 3, T_unit=0.1 / 3)
        save_library(lib, tmp_path / "x.json")
        assert load_library(tmp_path / "x.json") == lib
