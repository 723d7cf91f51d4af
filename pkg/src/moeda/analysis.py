"""Power, area and the three-objective evaluation of a drive assignment."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .cell_library import Library, lookup
from .errors import ConstraintError
from .netlist import Chromosome, Netlist, apply_chromosome
from .timing import TimingConstraint, TimingReport, WireModel, net_loads, run_sta

NW_TO_UW = 1e-3
# pJ per second -> uW
PJ_RATE_TO_UW = 1e-6
# fF * V^2 * Hz -> uW
FF_V2_HZ_TO_UW = 1e-9


@dataclass(frozen=True)
class PowerConfig:
    voltage: float = 1.2
    frequency: float = 250e6
    switching_activity: float = 0.2

    def __post_init__(self):
        if self.voltage <= 0 or self.frequency <= 0:
            raise ConstraintError("voltage and frequency must be positive")
        if not 0.0 <= self.switching_activity <= 1.0:
            raise ConstraintError("switching_activity must lie in [0, 1]")

    @property
    def toggle_rate(self) -> float:
        return self.switching_activity * self.frequency


@dataclass(frozen=True)
class Objectives:
    D_wc: float
    P_total: float
    A_gate: float

    def __post_init__(self):
        for name in ("D_wc", "P_total", "A_gate"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConstraintError(f"objective {name} = {v} is not finite and non-negative")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.D_wc, self.P_total, self.A_gate


@dataclass(frozen=True)
class PowerBreakdown:
    leakage: float
    internal: float
    switching: float

    @property
    def total(self) -> float:
        return self.leakage + self.internal + self.switching


def leakage_power(n: Netlist, lib: Library) -> float:
    """Sum of average leakage in uW."""
    return sum(lib.cell(c).leakage_avg for c in n.cells) * NW_TO_UW


def internal_power(n: Netlist, lib: Library, pc: PowerConfig, sta: TimingReport) -> float:
    """Internal (short-circuit) power in uW.

    Each gate toggles its output ``A*F`` times per second. The energy per output
    toggle is the mean of the rise and fall energy tables, looked up at the
    worse of the two input slews and the output load, averaged over the input
    arcs. Each input additionally toggles ``A*F`` times at its input-pin energy.
    """
    rate = pc.toggle_rate
    total_pj = 0.0
    for gate, cell_name in zip(n.gates, n.cells):
        cell = lib.cell(cell_name)
        load = sta.loads[gate.name]
        per_toggle = 0.0
        for arc, src in zip(cell.power_arcs, gate.fanins):
            pin = sta.pins[src]
            s_in = max(pin.slew_rise, pin.slew_fall)
            per_toggle += 0.5 * (lookup(arc.rise_energy, s_in, load)
                                 + lookup(arc.fall_energy, s_in, load))
            total_pj += arc.input_pin_energy * rate
        total_pj += per_toggle / len(cell.power_arcs) * rate
    return total_pj * PJ_RATE_TO_UW


def switching_power(n: Netlist, lib: Library, pc: PowerConfig, tc: TimingConstraint | None = None,
                    wire: WireModel | None = None, loads: dict[str, float] | None = None) -> float:
    """``0.5 * C_L * V^2 * F * A`` summed over gate-driven nets, in uW."""
    if loads is None:
        loads = net_loads(n, lib, tc or TimingConstraint(), wire)
    c_total = sum(loads[g.name] for g in n.gates)
    return 0.5 * c_total * pc.voltage ** 2 * pc.frequency * pc.switching_activity * FF_V2_HZ_TO_UW


def gate_area(n: Netlist, lib: Library) -> float:
    return sum(lib.cell(c).area for c in n.cells)


def power_breakdown(n: Netlist, lib: Library, pc: PowerConfig, sta: TimingReport) -> PowerBreakdown:
    return PowerBreakdown(leakage_power(n, lib), internal_power(n, lib, pc, sta),
                          switching_power(n, lib, pc, loads=sta.loads))


def evaluate_netlist(n: Netlist, lib: Library, tc: TimingConstraint | None = None,
                     pc: PowerConfig | None = None, wire: WireModel | None = None,
                     sta: TimingReport | None = None) -> Objectives:
    pc = pc or PowerConfig()
    sta = sta or run_sta(n, lib, tc, wire)
    return Objectives(sta.D_wc, power_breakdown(n, lib, pc, sta).total, gate_area(n, lib))


def evaluate(n: Netlist, c: Chromosome, lib: Library, tc: TimingConstraint | None = None,
             pc: PowerConfig | None = None, wire: WireModel | None = None) -> Objectives:
    """Objectives (D_wc, P_total, A_gate) of ``n`` with drive assignment ``c``."""
    return evaluate_netlist(apply_chromosome(n, c, lib), lib, tc, pc, wire)


def chromosome_hash(c: Chromosome) -> str:
    return hashlib.sha1(c.key().encode()).hexdigest()[:16]


def objectives_row(c: Chromosome, obj: Objectives) -> dict:
    return {"chromosome_hash": chromosome_hash(c), "D_wc": obj.D_wc, "P_total": obj.P_total,
            "A_gate": obj.A_gate}


class Evaluator:
    """Picklable ``Chromosome -> Objectives`` closure over one sizing problem."""

    def __init__(self, netlist: Netlist, lib: Library, tc: TimingConstraint | None = None,
                 pc: PowerConfig | None = None, wire: WireModel | None = None):
        self.netlist = netlist
        self.lib = lib
        self.tc = tc or TimingConstraint()
        self.pc = pc or PowerConfig()
        self.wire = wire or WireModel()
        netlist.check_library(lib)

    @property
    def gene_count(self) -> int:
        return len(self.netlist.sizable_ids)

    @property
    def option_count(self) -> int:
        return len(self.lib.cells_of("INV"))

    def timing(self, c: Chromosome) -> TimingReport:
        return run_sta(apply_chromosome(self.netlist, c, self.lib), self.lib, self.tc, self.wire)

    def __call__(self, c: Chromosome) -> Objectives:
        return evaluate(self.netlist, c, self.lib, self.tc, self.pc, self.wire)
