"""Standard-cell libraries with NLDM timing and power tables.

A :class:`Library` holds INV and NAND2 cells, each characterised by 2-D
lookup tables indexed by input slew (ns) and output load (fF). Libraries are
either generated from a first-order parametric delay model or derived from
an existing library by inserting cells midway between adjacent drives.

Units used throughout: ns, fF, pJ, nW, um.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import jsonschema

from .errors import ConstraintError, MeasurementError, RangeError, SchemaError, StructuralError

FUNCTIONS = ("INV", "NAND2")
INPUT_PINS = {"INV": ("A",), "NAND2": ("A", "B")}
NAME_PREFIX = {"INV": "INV", "NAND2": "NAND"}
CELL_HEIGHT = 1.8

MINI_ORIG_DRIVES = (0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 24.0)
MINI_FINE_DRIVES = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0,
                    8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0)
MINI_FINE_PAIRS = tuple(zip(MINI_ORIG_DRIVES[:-1], MINI_ORIG_DRIVES[1:]))

UNITS = {"time": "ns", "capacitance": "fF", "energy": "pJ", "leakage": "nW",
         "length": "um", "voltage": "V"}
SCHEMA_FORMAT = "moeda-library"
SCHEMA_VERSION = 1


def format_drive(drive: float) -> str:
    return f"{drive:g}"


def cell_name(function: str, drive: float) -> str:
    return f"{NAME_PREFIX[function]}X{format_drive(drive)}"


def _strictly_ascending(seq: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(seq, seq[1:]))


def _segment(index: tuple[float, ...], x: float) -> int:
    i = bisect_right(index, x) - 1
    if i < 0:
        return 0
    last = len(index) - 2
    return last if i > last else i


def _lerp(a: float, b: float, t: float) -> float:
    # exact at both ends and on constant spans
    return b if t == 1.0 else a + t * (b - a)


@dataclass(frozen=True)
class LookupTable2D:
    """NLDM table; ``values[i][j]`` belongs to ``(slew_index[i], load_index[j])``."""

    slew_index: tuple[float, ...]
    load_index: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        slew = tuple(float(v) for v in self.slew_index)
        load = tuple(float(v) for v in self.load_index)
        values = tuple(tuple(float(v) for v in row) for row in self.values)
        if len(slew) < 2 or len(load) < 2:
            raise StructuralError("lookup table needs at least 2 points per index")
        if not _strictly_ascending(slew):
            raise StructuralError(f"slew_index not strictly ascending: {slew}")
        if not _strictly_ascending(load):
            raise StructuralError(f"load_index not strictly ascending: {load}")
        if len(values) != len(slew) or any(len(row) != len(load) for row in values):
            raise StructuralError(
                f"values must be {len(slew)}x{len(load)} to match the indexes")
        if not all(math.isfinite(v) for row in values for v in row):
            raise StructuralError("table values must be finite")
        object.__setattr__(self, "slew_index", slew)
        object.__setattr__(self, "load_index", load)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.slew_index), len(self.load_index)

    def evaluate(self, slew: float, load: float) -> tuple[float, bool]:
        """Bilinear value at ``(slew, load)`` and whether the point lies off-grid.

        Off-grid points are extrapolated linearly from the nearest boundary cell.
        """
        xs, ys = self.slew_index, self.load_index
        i = _segment(xs, slew)
        j = _segment(ys, load)
        t = (slew - xs[i]) / (xs[i + 1] - xs[i])
        u = (load - ys[j]) / (ys[j + 1] - ys[j])
        lo, hi = self.values[i], self.values[i + 1]
        value = _lerp(_lerp(lo[j], hi[j], t), _lerp(lo[j + 1], hi[j + 1], t), u)
        outside = slew < xs[0] or slew > xs[-1] or load < ys[0] or load > ys[-1]
        return value, outside

    def map(self, fn) -> LookupTable2D:
        return LookupTable2D(self.slew_index, self.load_index,
                             tuple(tuple(fn(v) for v in row) for row in self.values))

    def to_dict(self) -> dict:
        return {"slew_index": list(self.slew_index), "load_index": list(self.load_index),
                "values": [list(row) for row in self.values]}

    @classmethod
    def from_dict(cls, data: Mapping) -> LookupTable2D:
        return cls(data["slew_index"], data["load_index"], data["values"])

    @classmethod
    def sample(cls, fn, slew_index: Sequence[float], load_index: Sequence[float]) -> LookupTable2D:
        return cls(slew_index, load_index, [[fn(s, c) for c in load_index] for s in slew_index])


def lookup(table: LookupTable2D, slew: float, load: float) -> float:
    return table.evaluate(slew, load)[0]


def average_tables(a: LookupTable2D, b: LookupTable2D) -> LookupTable2D:
    mid = lambda p, q: tuple((x + y) / 2.0 for x, y in zip(p, q))  # noqa: E731
    if a.shape != b.shape:
        raise StructuralError(f"cannot average tables of shape {a.shape} and {b.shape}")
    return LookupTable2D(mid(a.slew_index, b.slew_index), mid(a.load_index, b.load_index),
                         tuple(mid(ra, rb) for ra, rb in zip(a.values, b.values)))


@dataclass(frozen=True)
class TimingArc:
    related_input: str
    cell_rise: LookupTable2D
    cell_fall: LookupTable2D
    rise_transition: LookupTable2D
    fall_transition: LookupTable2D
    unateness: str = "negative_unate"

    def __post_init__(self):
        if self.unateness != "negative_unate":
            raise StructuralError(f"unsupported unateness {self.unateness!r}")
        tables = self.tables()
        first = tables[0]
        for t in tables[1:]:
            if t.slew_index != first.slew_index or t.load_index != first.load_index:
                raise StructuralError(
                    f"timing tables of pin {self.related_input} do not share index vectors")

    def tables(self) -> tuple[LookupTable2D, ...]:
        return self.cell_rise, self.cell_fall, self.rise_transition, self.fall_transition


@dataclass(frozen=True)
class PowerArc:
    related_input: str
    rise_energy: LookupTable2D
    fall_energy: LookupTable2D
    input_pin_energy: float

    def __post_init__(self):
        negative = any(v < 0 for t in (self.rise_energy, self.fall_energy)
                       for row in t.values for v in row)
        if negative or self.input_pin_energy < 0:
            raise StructuralError(f"negative energy on pin {self.related_input}")


@dataclass(frozen=True)
class Cell:
    """One library cell; ``drive`` is the X value (0, 0.5, 1, ...)."""

    name: str
    function: str
    drive: float
    width: float
    height: float
    input_pin_cap: float
    leakage_min: float
    leakage_avg: float
    leakage_max: float
    timing_arcs: tuple[TimingArc, ...]
    power_arcs: tuple[PowerArc, ...]
    interpolated: bool = False

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise StructuralError(f"{self.name}: unknown function {self.function!r}")
        object.__setattr__(self, "timing_arcs", tuple(self.timing_arcs))
        object.__setattr__(self, "power_arcs", tuple(self.power_arcs))
        pins = INPUT_PINS[self.function]
        if tuple(a.related_input for a in self.timing_arcs) != pins:
            raise StructuralError(f"{self.name}: need one timing arc per input pin {pins}")
        if tuple(a.related_input for a in self.power_arcs) != pins:
            raise StructuralError(f"{self.name}: need one power arc per input pin {pins}")
        if not self.leakage_min <= self.leakage_avg <= self.leakage_max:
            raise StructuralError(f"{self.name}: leakage must satisfy min <= avg <= max")
        if self.drive < 0:
            raise StructuralError(f"{self.name}: drive must be non-negative")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def pins(self) -> tuple[str, ...]:
        return INPUT_PINS[self.function]


@dataclass(frozen=True)
class Library:
    name: str
    voltage: float
    corner: str
    C_unit: float
    T_unit: float
    nominal_slew: float
    cells: tuple[Cell, ...]
    _by_name: dict = field(init=False, repr=False, compare=False)
    _by_function: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.C_unit <= 0 or self.T_unit <= 0 or self.nominal_slew <= 0:
            raise ConstraintError("C_unit, T_unit and nominal_slew must be positive")
        by_name = {}
        for cell in self.cells:
            if cell.name in by_name:
                raise StructuralError(f"duplicate cell name {cell.name}")
            by_name[cell.name] = cell
        if len({c.height for c in self.cells}) > 1:
            raise StructuralError("all cells must share one height")
        by_function = {}
        for function in FUNCTIONS:
            group = sorted((c for c in self.cells if c.function == function), key=lambda c: c.drive)
            drives = [c.drive for c in group]
            if not _strictly_ascending(drives):
                raise StructuralError(f"duplicate {function} drive in {drives}")
            by_function[function] = tuple(group)
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_by_function", by_function)

    def cell(self, name: str) -> Cell:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"library {self.name} has no cell {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def cells_of(self, function: str) -> tuple[Cell, ...]:
        """Cells implementing ``function``, ascending in drive."""
        return self._by_function[function]

    def drive_set(self, function: str = "INV") -> tuple[float, ...]:
        return tuple(c.drive for c in self._by_function[function])

    def cell_for(self, function: str, drive: float) -> Cell:
        for c in self._by_function[function]:
            if c.drive == drive:
                return c
        raise KeyError(f"library {self.name} has no {function} cell with drive {drive:g}")

    def check_invariants(self) -> list[str]:
        """Human-readable violations of the drive-monotonicity rules (empty if none)."""
        problems = []
        for function in FUNCTIONS:
            group = self._by_function[function]
            for a, b in zip(group, group[1:]):
                if b.width < a.width:
                    problems.append(f"{b.name} narrower than {a.name}")
                if b.leakage_avg < a.leakage_avg:
                    problems.append(f"{b.name} leaks less than {a.name}")
        return problems


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass(frozen=True)
class CellRecord:
    drive: float
    width: float
    leak_min: float
    leak_avg: float
    leak_max: float


@lru_cache(maxsize=None)
def reference_cells() -> dict[str, CellRecord]:
    """Published width/leakage rows for the MINI cells, keyed by cell name."""
    text = resources.files("moeda.data").joinpath("mini_cells.csv").read_text()
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    return {r["cell"]: CellRecord(float(r["drive"]), float(r["width"]), float(r["leak_min"]),
                                  float(r["leak_avg"]), float(r["leak_max"])) for r in rows}


def _interp_record(records: list[CellRecord], drive: float) -> CellRecord:
    # piecewise linear in drive, linear extrapolation past either end
    records = sorted(records, key=lambda r: r.drive)
    for r in records:
        if r.drive == drive:
            return r
    if drive < records[0].drive:
        a, b = records[0], records[1]
    elif drive > records[-1].drive:
        a, b = records[-2], records[-1]
    else:
        k = next(i for i, r in enumerate(records) if r.drive > drive)
        a, b = records[k - 1], records[k]
    w = (drive - a.drive) / (b.drive - a.drive)
    mix = lambda p, q: p + w * (q - p)  # noqa: E731
    return CellRecord(drive, mix(a.width, b.width), mix(a.leak_min, b.leak_min),
                      mix(a.leak_avg, b.leak_avg), mix(a.leak_max, b.leak_max))


@dataclass(frozen=True)
class FunctionModel:
    """Per-function scale factors applied on top of the inverter model."""

    pin_cap_scale: float = 1.0
    energy_scale: float = 1.0
    transition_scale: float = 1.0


@dataclass(frozen=True)
class SyntheticParams:
    """Coefficients of the first-order cell model.

    Delay for a cell of drive X > 0::

        delay(slew, C) = delay_slew_coeff * slew + intrinsic + delay_load_coeff * C / X

    where ``intrinsic`` is solved so that delay(nominal_slew, X * C_unit) == T_unit.
    An X0 cell behaves like X1 with one unit load built in, so it reaches T_unit
    at zero load; its load grid spans ``x0_grid_drive`` unit loads instead of
    zero. Transition follows the same form with its own coefficients.
    """

    name: str = "SYNTH"
    drive_sets: Mapping[str, tuple[float, ...]] = field(
        default_factory=lambda: {"INV": MINI_ORIG_DRIVES, "NAND2": (0.0,)})
    C_unit: float = 4.0
    T_unit: float = 0.03
    nominal_slew: float = 0.04
    voltage: float = 1.2
    corner: str = "TT, 1.2V, 25C"
    delay_slew_coeff: float = 0.2
    delay_load_coeff: float = 0.004
    trans_slew_coeff: float = 0.1
    trans_intrinsic: float = 0.01
    trans_load_coeff: float = 0.008
    rise_fall_skew: float = 1.0
    x0_grid_drive: float = 0.25
    pin_cap_offset: float = 0.2
    pin_cap_per_drive: float = 0.8
    energy_per_drive: float = 6e-4
    energy_slew_per_drive: float = 5e-4
    energy_per_load: float = 5e-5
    input_pin_energy_per_drive: float = 5e-5
    slew_index: tuple[float, ...] = (0.005, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64)
    load_fractions: tuple[float, ...] = (0.1, 0.25, 0.5, 1.0, 1.75, 2.75, 4.0)
    functions: Mapping[str, FunctionModel] = field(default_factory=lambda: {
        "INV": FunctionModel(),
        "NAND2": FunctionModel(pin_cap_scale=1.25, energy_scale=1.3, transition_scale=1.2)})

    @property
    def delay_intrinsic(self) -> float:
        return (self.T_unit - self.delay_slew_coeff * self.nominal_slew
                - self.delay_load_coeff * self.C_unit)


def _skewed(value: float, skew: float) -> tuple[float, float]:
    # rise/fall split whose mean is ``value``
    return value * 2.0 * skew / (1.0 + skew), value * 2.0 / (1.0 + skew)


def _synthetic_cell(p: SyntheticParams, function: str, drive: float) -> Cell:
    model = p.functions.get(function, FunctionModel())
    x = drive
    if drive > 0:
        divisor, built_in = drive, 0.0
    else:
        divisor, built_in = 1.0, p.C_unit
    grid = drive if drive > 0 else p.x0_grid_drive
    load_index = [f * grid * p.C_unit for f in p.load_fractions]
    b = p.delay_intrinsic

    def delay(s, c):
        return p.delay_slew_coeff * s + b + p.delay_load_coeff * (c + built_in) / divisor

    def trans(s, c):
        return model.transition_scale * (p.trans_slew_coeff * s + p.trans_intrinsic
                                         + p.trans_load_coeff * (c + built_in) / divisor)

    def energy(s, c):
        return model.energy_scale * (x * (p.energy_per_drive + p.energy_slew_per_drive * s)
                                     + p.energy_per_load * c)

    base_delay = LookupTable2D.sample(delay, p.slew_index, load_index)
    base_trans = LookupTable2D.sample(trans, p.slew_index, load_index)
    k = p.rise_fall_skew
    arcs, power = [], []
    for pin in INPUT_PINS[function]:
        arcs.append(TimingArc(pin,
                              cell_rise=base_delay.map(lambda v: _skewed(v, k)[0]),
                              cell_fall=base_delay.map(lambda v: _skewed(v, k)[1]),
                              rise_transition=base_trans.map(lambda v: _skewed(v, k)[0]),
                              fall_transition=base_trans.map(lambda v: _skewed(v, k)[1])))
        e = LookupTable2D.sample(energy, p.slew_index, load_index)
        power.append(PowerArc(pin, e, e, model.energy_scale * p.input_pin_energy_per_drive * x))

    refs = reference_cells()
    inv_rows = [r for name, r in refs.items() if name.startswith("INV")]
    if function == "INV":
        rec = _interp_record(inv_rows, drive)
    else:
        # NAND2 rows beyond NANDX0 follow the inverter trend, scaled to NANDX0
        base, inv = refs["NANDX0"], _interp_record(inv_rows, drive)
        inv0 = _interp_record(inv_rows, 0.0)
        rec = CellRecord(drive, base.width * inv.width / inv0.width,
                         base.leak_min * inv.leak_min / inv0.leak_min,
                         base.leak_avg * inv.leak_avg / inv0.leak_avg,
                         base.leak_max * inv.leak_max / inv0.leak_max)
    min_width = _interp_record(inv_rows, 1.0).width if function == "INV" else rec.width
    width = max(rec.width, min_width) if drive <= 1.0 else rec.width
    return Cell(
        name=cell_name(function, drive), function=function, drive=float(drive),
        width=width, height=CELL_HEIGHT,
        input_pin_cap=model.pin_cap_scale * (p.pin_cap_offset + p.pin_cap_per_drive * x),
        leakage_min=rec.leak_min, leakage_avg=rec.leak_avg, leakage_max=rec.leak_max,
        timing_arcs=tuple(arcs), power_arcs=tuple(power))


def generate_synthetic_library(params: SyntheticParams | None = None, **overrides) -> Library:
    """Build a library whose cells obey the unit-load drive definition by construction."""
    p = replace(params or SyntheticParams(), **overrides)
    for name in ("C_unit", "T_unit", "nominal_slew", "delay_slew_coeff", "delay_load_coeff",
                 "trans_slew_coeff", "trans_load_coeff", "x0_grid_drive", "rise_fall_skew"):
        if getattr(p, name) <= 0:
            raise ConstraintError(f"{name} must be positive")
    if p.delay_intrinsic <= 0:
        raise ConstraintError(
            f"T_unit {p.T_unit} too small for the slope coefficients (intrinsic delay "
            f"{p.delay_intrinsic:.4g} ns)")
    cells = []
    for function, drives in p.drive_sets.items():
        if function not in FUNCTIONS:
            raise ConstraintError(f"unknown function {function!r}")
        if not drives:
            raise ConstraintError(f"empty drive set for {function}")
        if any(d < 0 for d in drives):
            raise ConstraintError(f"negative drive in {function} drive set {drives}")
        if not _strictly_ascending(drives):
            raise ConstraintError(f"{function} drive set must be strictly ascending: {drives}")
        cells += [_synthetic_cell(p, function, float(d)) for d in drives]
    return Library(p.name, p.voltage, p.corner, p.C_unit, p.T_unit, p.nominal_slew, tuple(cells))


def mini_orig_library(**overrides) -> Library:
    return generate_synthetic_library(name="MINI_ORIG", **overrides)


def mini_fine_library(**overrides) -> Library:
    """MINI_ORIG with the ten midpoint inverters interpolated in.

    Tables come from interpolation; width and leakage of the new cells are the
    published reference rows rather than neighbour averages.
    """
    lib = interpolate_fine_cells(mini_orig_library(**overrides), MINI_FINE_PAIRS)
    refs = reference_cells()
    cells = []
    for c in lib.cells:
        r = refs.get(c.name) if c.interpolated else None
        if r is not None:
            c = replace(c, width=r.width, leakage_min=r.leak_min, leakage_avg=r.leak_avg,
                        leakage_max=r.leak_max)
        cells.append(c)
    return Library("MINI_FINE", lib.voltage, lib.corner, lib.C_unit, lib.T_unit,
                   lib.nominal_slew, tuple(cells))


def replace_name(lib: Library, name: str) -> Library:
    return Library(name, lib.voltage, lib.corner, lib.C_unit, lib.T_unit, lib.nominal_slew, lib.cells)


# ---------------------------------------------------------------------------
# interpolation and measurement


def _interpolate_pair(a: Cell, b: Cell) -> Cell:
    drive = (a.drive + b.drive) / 2.0
    avg = lambda p, q: (p + q) / 2.0  # noqa: E731
    arcs = tuple(
        TimingArc(ta.related_input,
                  *(average_tables(x, y) for x, y in zip(ta.tables(), tb.tables())))
        for ta, tb in zip(a.timing_arcs, b.timing_arcs))
    power = tuple(
        PowerArc(pa.related_input, average_tables(pa.rise_energy, pb.rise_energy),
                 average_tables(pa.fall_energy, pb.fall_energy),
                 avg(pa.input_pin_energy, pb.input_pin_energy))
        for pa, pb in zip(a.power_arcs, b.power_arcs))
    return Cell(
        name=cell_name(a.function, drive), function=a.function, drive=drive,
        width=max(avg(a.width, b.width), min(a.width, b.width)), height=a.height,
        input_pin_cap=avg(a.input_pin_cap, b.input_pin_cap),
        leakage_min=avg(a.leakage_min, b.leakage_min),
        leakage_avg=avg(a.leakage_avg, b.leakage_avg),
        leakage_max=avg(a.leakage_max, b.leakage_max),
        timing_arcs=arcs, power_arcs=power,
        interpolated=True)


def interpolate_fine_cells(lib: Library, pairs: Iterable[tuple[float, float]],
                           function: str = "INV") -> Library:
    """Insert a cell midway between each pair of adjacent drives of ``function``.

    Load indexes and every table value of the new cell are the element-wise
    mean of its two neighbours.
    """
    drives = lib.drive_set(function)
    position = {d: i for i, d in enumerate(drives)}
    new_cells = []
    for lo, hi in pairs:
        lo, hi = sorted((float(lo), float(hi)))
        if lo not in position or hi not in position:
            raise ConstraintError(f"drive pair ({lo:g}, {hi:g}) not in {function} drive set")
        if position[hi] - position[lo] != 1:
            raise ConstraintError(f"drives {lo:g} and {hi:g} are not adjacent")
        mid = (lo + hi) / 2.0
        if mid in position or any(c.drive == mid for c in new_cells):
            raise ConstraintError(f"{function} drive {mid:g} already present")
        new_cells.append(_interpolate_pair(lib.cell_for(function, lo), lib.cell_for(function, hi)))
    return Library(lib.name, lib.voltage, lib.corner, lib.C_unit, lib.T_unit, lib.nominal_slew,
                   lib.cells + tuple(new_cells))


def measure_drive_strength(lib: Library, cell: Cell, arc: int = 0, tol: float = 1e-6) -> float:
    """Drive X such that the cell drives X * C_unit in T_unit at the nominal slew.

    Binary search over load on the mean of the rise and fall delay tables.
    """
    timing = cell.timing_arcs[arc]
    s0, target = lib.nominal_slew, lib.T_unit

    def delay(c):
        return 0.5 * (lookup(timing.cell_rise, s0, c) + lookup(timing.cell_fall, s0, c))

    grid = timing.cell_rise.load_index
    lo, hi = 0.0, 10.0 * grid[-1]
    samples = [lo, *grid, hi]
    values = [delay(c) for c in samples]
    if any(b < a for a, b in zip(values, values[1:])) or values[-1] <= values[0]:
        raise MeasurementError(f"{cell.name}: delay is not monotone in load")
    if abs(values[0] - target) <= tol:
        return 0.0
    if not values[0] <= target <= values[-1]:
        raise RangeError(f"{cell.name}: T_unit {target} ns outside delay range "
                         f"[{values[0]:.4g}, {values[-1]:.4g}] ns")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = delay(mid)
        if abs(d - target) <= tol:
            break
        if d < target:
            lo = mid
        else:
            hi = mid
    return mid / lib.C_unit


# ---------------------------------------------------------------------------
# serialisation


@lru_cache(maxsize=None)
def library_schema() -> dict:
    return json.loads(resources.files("moeda.data").joinpath("library.schema.json").read_text())


def library_to_dict(lib: Library) -> dict:
    def arc_dict(a: TimingArc) -> dict:
        return {"related_pin": a.related_input, "unateness": a.unateness,
                "cell_rise": a.cell_rise.to_dict(), "cell_fall": a.cell_fall.to_dict(),
                "rise_transition": a.rise_transition.to_dict(),
                "fall_transition": a.fall_transition.to_dict()}

    cells = []
    for c in lib.cells:
        cells.append({
            "name": c.name, "function": c.function, "drive": c.drive,
            "interpolated": c.interpolated,
            "width": c.width, "height": c.height, "input_pin_cap": c.input_pin_cap,
            "leakage": {"min": c.leakage_min, "avg": c.leakage_avg, "max": c.leakage_max},
            "timing": [arc_dict(a) for a in c.timing_arcs],
            "power": [{"related_pin": p.related_input, "rise_energy": p.rise_energy.to_dict(),
                       "fall_energy": p.fall_energy.to_dict(),
                       "input_pin_energy": p.input_pin_energy} for p in c.power_arcs],
        })
    return {"format": SCHEMA_FORMAT, "version": SCHEMA_VERSION,
            "header": {"name": lib.name, "voltage": lib.voltage, "corner": lib.corner,
                       "C_unit": lib.C_unit, "T_unit": lib.T_unit,
                       "nominal_slew": lib.nominal_slew, "units": dict(UNITS)},
            "cells": cells}


def _schema_context(data: dict, error: jsonschema.ValidationError) -> str:
    path = list(error.absolute_path)
    where = "/".join(str(p) for p in path) or "<root>"
    if len(path) >= 2 and path[0] == "cells" and isinstance(path[1], int):
        try:
            where += f" (cell {data['cells'][path[1]]['name']})"
        except (KeyError, IndexError, TypeError):
            pass
    return where


def library_from_dict(data: dict) -> Library:
    validator = jsonschema.Draft202012Validator(library_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is not None:
        raise SchemaError(f"library schema violation at {_schema_context(data, error)}: "
                          f"{error.message}")
    h = data["header"]
    cells = []
    for k, c in enumerate(data["cells"]):
        try:
            arcs = tuple(TimingArc(a["related_pin"],
                                   LookupTable2D.from_dict(a["cell_rise"]),
                                   LookupTable2D.from_dict(a["cell_fall"]),
                                   LookupTable2D.from_dict(a["rise_transition"]),
                                   LookupTable2D.from_dict(a["fall_transition"]),
                                   a["unateness"]) for a in c["timing"])
            power = tuple(PowerArc(p["related_pin"], LookupTable2D.from_dict(p["rise_energy"]),
                                   LookupTable2D.from_dict(p["fall_energy"]),
                                   p["input_pin_energy"]) for p in c["power"])
            cells.append(Cell(
                name=c["name"], function=c["function"], drive=float(c["drive"]),
                width=float(c["width"]), height=float(c["height"]),
                input_pin_cap=float(c["input_pin_cap"]),
                leakage_min=float(c["leakage"]["min"]), leakage_avg=float(c["leakage"]["avg"]),
                leakage_max=float(c["leakage"]["max"]),
                timing_arcs=arcs, power_arcs=power,
                interpolated=c["interpolated"]))
        except StructuralError as exc:
            raise StructuralError(f"cells/{k} (cell {c['name']}): {exc}") from None
    return Library(h["name"], float(h["voltage"]), h["corner"], float(h["C_unit"]),
                   float(h["T_unit"]), float(h["nominal_slew"]), tuple(cells))


def save_library(lib: Library, path) -> None:
    Path(path).write_text(json.dumps(library_to_dict(lib), indent=1) + "\n")


def load_library(path) -> Library:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    return library_from_dict(data)
