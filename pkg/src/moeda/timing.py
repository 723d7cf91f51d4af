"""Graph-based static timing analysis of mapped INV/NAND2 netlists.

Rise and fall are propagated separately. Both cells are negative unate, so an
input rise produces an output fall (``cell_fall``/``fall_transition``) and vice
versa. Where several inputs converge, the output keeps the latest arrival per
edge together with the slew that accompanied it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .cell_library import Library
from .errors import ConstraintError, EvaluationError
from .netlist import Netlist

RISE, FALL = 0, 1
EDGE_NAMES = ("rise", "fall")


@dataclass(frozen=True)
class TimingConstraint:
    """Single-clock max-delay constraint (all times in ns).

    ``pi_input_slew`` of ``None`` means the library's nominal slew.
    """

    clock_period: float = 4.0
    output_delay: float = 0.0
    input_delay: float = 0.0
    output_load_cell: str = "INVX1"
    pi_input_slew: float | None = None

    def __post_init__(self):
        if self.clock_period <= 0:
            raise ConstraintError("clock_period must be positive")
        if self.output_delay < 0 or self.input_delay < 0:
            raise ConstraintError("input/output delays must be non-negative")
        if self.pi_input_slew is not None and self.pi_input_slew < 0:
            raise ConstraintError("pi_input_slew must be non-negative")


@dataclass(frozen=True)
class WireModel:
    """Lumped wire capacitance added per fanout pin (fF)."""

    per_fanout_cap: float = 0.0

    def __post_init__(self):
        if self.per_fanout_cap < 0:
            raise ConstraintError("per_fanout_cap must be non-negative")


def required_time(tc: TimingConstraint) -> float:
    value = tc.clock_period - tc.output_delay
    if value <= 0:
        raise ConstraintError(
            f"required time {value:g} ns is not positive (period {tc.clock_period}, "
            f"output delay {tc.output_delay})")
    return value


@dataclass(frozen=True)
class PinTiming:
    arrival_rise: float
    arrival_fall: float
    slew_rise: float
    slew_fall: float

    def arrival(self, edge: int) -> float:
        return self.arrival_fall if edge else self.arrival_rise

    def slew(self, edge: int) -> float:
        return self.slew_fall if edge else self.slew_rise


@dataclass(frozen=True)
class Stage:
    gate: str
    cell: str
    input_net: str
    edge: str
    delay: float
    arrival: float


@dataclass(frozen=True)
class TimingPath:
    endpoint: str
    edge: str
    arrival: float
    slack: float
    start: str
    stages: tuple[Stage, ...]

    @property
    def delay(self) -> float:
        return sum(s.delay for s in self.stages)

    @property
    def gate_count(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class EndpointTiming:
    name: str
    edge: str
    arrival: float
    slack: float


@dataclass(frozen=True)
class TimingReport:
    D_wc: float
    worst_slack: float
    required_time: float
    per_endpoint: tuple[EndpointTiming, ...]
    critical_path: TimingPath | None
    pins: dict[str, PinTiming] = field(repr=False)
    loads: dict[str, float] = field(repr=False)
    extrapolations: int = 0
    # (net, edge) -> (fanin net, fanin edge, stage delay) of the latest-arriving input
    _pred: dict = field(default_factory=dict, repr=False, compare=False)
    _cells: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def total_negative_slack(self) -> float:
        return sum(min(0.0, e.slack) for e in self.per_endpoint)

    def path_to(self, endpoint: str, edge: int | None = None) -> TimingPath:
        """Backtrace the latest-arriving predecessor chain from ``endpoint`` to a PI."""
        pin = self.pins[endpoint]
        if edge is None:
            edge = FALL if pin.arrival_fall > pin.arrival_rise else RISE
        arrival = pin.arrival(edge)
        stages = []
        net, e = endpoint, edge
        while (net, e) in self._pred:
            src, src_edge, delay = self._pred[(net, e)]
            stages.append(Stage(net, self._cells[net], src, EDGE_NAMES[e], delay,
                                self.pins[net].arrival(e)))
            net, e = src, src_edge
        stages.reverse()
        return TimingPath(endpoint, EDGE_NAMES[edge], arrival, self.required_time - arrival,
                          net, tuple(stages))

    def to_dict(self) -> dict:
        return {
            "D_wc": self.D_wc, "worst_slack": self.worst_slack,
            "required_time": self.required_time, "extrapolations": self.extrapolations,
            "endpoints": [{"name": e.name, "edge": e.edge, "arrival": e.arrival,
                           "slack": e.slack} for e in self.per_endpoint],
            "critical_path": path_dict(self.critical_path) if self.critical_path else None,
        }


def path_dict(p: TimingPath) -> dict:
    return {"endpoint": p.endpoint, "edge": p.edge, "arrival": p.arrival, "slack": p.slack,
            "start": p.start, "delay": p.delay, "gate_count": p.gate_count,
            "stages": [{"gate": s.gate, "cell": s.cell, "input": s.input_net, "edge": s.edge,
                        "delay": s.delay, "arrival": s.arrival} for s in p.stages]}


def net_loads(n: Netlist, lib: Library, tc: TimingConstraint,
              wire: WireModel | None = None) -> dict[str, float]:
    """Capacitive load (fF) on every net: fanout pins, wire, and the PO load."""
    wire = wire or WireModel()
    topo = n.topology
    try:
        po_cap = lib.cell(tc.output_load_cell).input_pin_cap
    except KeyError as exc:
        raise EvaluationError(str(exc)) from None
    pin_cap = {g.name: lib.cell(c).input_pin_cap for g, c in zip(topo.gates, n.cells)}
    loads = {}
    for net, sinks in topo.fanouts.items():
        # ``sinks`` lists a gate once per connected pin
        cap = sum(pin_cap[s] for s in sinks)
        pins = len(sinks)
        if net in topo.output_set:
            cap += po_cap
            pins += 1
        loads[net] = cap + wire.per_fanout_cap * pins
    return loads


def run_sta(n: Netlist, lib: Library, tc: TimingConstraint | None = None,
            wire: WireModel | None = None) -> TimingReport:
    tc = tc or TimingConstraint()
    required = required_time(tc)
    n.check_library(lib)
    topo = n.topology
    loads = net_loads(n, lib, tc, wire)
    pi_slew = lib.nominal_slew if tc.pi_input_slew is None else tc.pi_input_slew
    # arrival/slew per net as [rise, fall]
    arr: dict[str, list[float]] = {}
    slew: dict[str, list[float]] = {}
    for pi in topo.primary_inputs:
        arr[pi] = [tc.input_delay, tc.input_delay]
        slew[pi] = [pi_slew, pi_slew]
    pred = {}
    cells = {}
    extrapolated = 0
    for idx in topo.topo_order:
        gate = topo.gates[idx]
        cell = lib.cell(n.cells[idx])
        cells[gate.name] = cell.name
        load = loads[gate.name]
        best_arr = [float("-inf"), float("-inf")]
        best_slew = [0.0, 0.0]
        best_pred = [None, None]
        for arc, src in zip(cell.timing_arcs, gate.fanins):
            src_arr, src_slew = arr[src], slew[src]
            for out_edge, delay_t, trans_t in ((RISE, arc.cell_rise, arc.rise_transition),
                                               (FALL, arc.cell_fall, arc.fall_transition)):
                in_edge = 1 - out_edge
                s_in = src_slew[in_edge]
                d, off1 = delay_t.evaluate(s_in, load)
                s_out, off2 = trans_t.evaluate(s_in, load)
                extrapolated += off1 or off2
                a = src_arr[in_edge] + d
                if a > best_arr[out_edge] or (a == best_arr[out_edge] and s_out > best_slew[out_edge]):
                    best_arr[out_edge] = a
                    best_slew[out_edge] = s_out
                    best_pred[out_edge] = (src, in_edge, d)
        arr[gate.name] = best_arr
        slew[gate.name] = best_slew
        pred[(gate.name, RISE)] = best_pred[RISE]
        pred[(gate.name, FALL)] = best_pred[FALL]

    pins = {net: PinTiming(a[0], a[1], slew[net][0], slew[net][1]) for net, a in arr.items()}
    endpoints = []
    for po in topo.primary_outputs:
        a = arr[po]
        edge = FALL if a[FALL] > a[RISE] else RISE
        endpoints.append(EndpointTiming(po, EDGE_NAMES[edge], a[edge], required - a[edge]))
    d_wc = max((e.arrival for e in endpoints), default=0.0)
    report = TimingReport(d_wc, required - d_wc, required, tuple(endpoints), None, pins, loads,
                          extrapolated, pred, cells)
    if endpoints:
        worst = min(endpoints, key=lambda e: (e.slack, e.name))
        path = report.path_to(worst.name, EDGE_NAMES.index(worst.edge))
        object.__setattr__(report, "critical_path", path)
    return report


def worst_paths(n: Netlist, lib: Library, tc: TimingConstraint | None = None, k: int = 10,
                wire: WireModel | None = None, report: TimingReport | None = None
                ) -> list[TimingPath]:
    """Worst path to each of the ``k`` lowest-slack endpoints, lowest slack first."""
    if k < 1:
        raise ConstraintError("k must be at least 1")
    report = report or run_sta(n, lib, tc, wire)
    ranked = sorted(report.per_endpoint, key=lambda e: (e.slack, e.name))
    return [report.path_to(e.name, EDGE_NAMES.index(e.edge)) for e in ranked[:k]]


def path_stats(n: Netlist, lib: Library, tc: TimingConstraint | None = None,
               wire: WireModel | None = None, report: TimingReport | None = None) -> dict:
    """Gate count of the critical path and mean gate count over endpoint worst paths."""
    paths = worst_paths(n, lib, tc, len(n.primary_outputs) or 1, wire, report)
    if not paths:
        return {"critical_gate_count": 0, "mean_endpoint_path_gate_count": 0.0}
    return {"critical_gate_count": paths[0].gate_count,
            "mean_endpoint_path_gate_count": sum(p.gate_count for p in paths) / len(paths)}


def format_paths(paths: Sequence[TimingPath]) -> str:
    lines = [f"{'#':>3} {'endpoint':<14} {'edge':<5} {'arrival':>9} {'slack':>9} {'gates':>5}  path"]
    for i, p in enumerate(paths, 1):
        chain = " -> ".join([p.start] + [f"{s.gate}({s.cell})" for s in p.stages])
        lines.append(f"{i:>3} {p.endpoint:<14} {p.edge:<5} {p.arrival:9.4f} {p.slack:9.4f} "
                     f"{p.gate_count:>5}  {chain}")
    return "\n".join(lines)


def format_report(report: TimingReport) -> str:
    head = [f"D_wc          {report.D_wc:.4f} ns",
            f"required time {report.required_time:.4f} ns",
            f"worst slack   {report.worst_slack:.4f} ns", ""]
    rows = [f"{'endpoint':<14} {'edge':<5} {'arrival':>9} {'slack':>9}"]
    for e in sorted(report.per_endpoint, key=lambda e: (e.slack, e.name)):
        rows.append(f"{e.name:<14} {e.edge:<5} {e.arrival:9.4f} {e.slack:9.4f}")
    return "\n".join(head + rows) + "\n"


def report_json(report: TimingReport) -> str:
    return json.dumps(report.to_dict(), indent=1) + "\n"
