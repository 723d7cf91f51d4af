"""Greedy timing-repair / power-recovery sizer used to seed the evolutionary search."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .analysis import Evaluator, PowerConfig
from .cell_library import Library
from .netlist import Chromosome, Netlist
from .timing import TimingConstraint, TimingReport, WireModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SizingStep:
    phase: int
    iteration: int
    gate: str
    old_drive: float
    new_drive: float
    D_wc: float
    worst_slack: float


@dataclass
class SizingResult:
    chromosome: Chromosome
    timing_met: bool
    D_wc: float
    worst_slack: float
    steps: list[SizingStep] = field(default_factory=list)

    @property
    def timing_failed(self) -> bool:
        return not self.timing_met

    def to_dict(self) -> dict:
        return {"genes": list(self.chromosome.genes), "timing_met": self.timing_met,
                "D_wc": self.D_wc, "worst_slack": self.worst_slack}

    def log_lines(self) -> list[str]:
        return [json.dumps({"phase": s.phase, "iteration": s.iteration, "gate": s.gate,
                            "old_drive": s.old_drive, "new_drive": s.new_drive,
                            "D_wc": s.D_wc, "worst_slack": s.worst_slack}) for s in self.steps]


def greedy_size(n: Netlist, lib: Library, tc: TimingConstraint | None = None,
                pc: PowerConfig | None = None, wire: WireModel | None = None,
                max_iterations: int = 100_000) -> SizingResult:
    """Smallest drives that meet timing, found greedily.

    Phase 1 starts every inverter at the smallest drive and, while the worst
    slack is negative, bumps one critical-path inverter to its next drive: the
    one with the largest delay reduction per unit of added area. A move must
    lower D_wc, or keep it and lower the total negative slack. Phase 2 walks the
    inverters in reverse topological order and steps each one down while the
    worst slack stays non-negative, repeating passes until nothing moves.
    """
    ev = Evaluator(n, lib, tc, pc, wire)
    options = lib.cells_of("INV")
    top = len(options) - 1
    sizable = n.sizable_ids
    position = {name: k for k, name in enumerate(sizable)}
    genes = [0] * len(sizable)
    steps: list[SizingStep] = []

    def sta(g) -> TimingReport:
        return ev.timing(Chromosome(g))

    report = sta(genes)
    iteration = 0
    while report.worst_slack < 0 and iteration < max_iterations:
        iteration += 1
        on_path = sorted({position[s.gate] for s in report.critical_path.stages
                          if s.gate in position and genes[position[s.gate]] < top})
        best = None
        for k in on_path:
            trial = genes.copy()
            trial[k] += 1
            r = sta(trial)
            d_area = options[trial[k]].area - options[genes[k]].area
            if r.D_wc < report.D_wc:
                tier, gain = 1, report.D_wc - r.D_wc
            elif r.D_wc == report.D_wc and r.total_negative_slack > report.total_negative_slack:
                tier, gain = 0, r.total_negative_slack - report.total_negative_slack
            else:
                continue
            score = (tier, gain / d_area if d_area > 0 else float("inf"), gain)
            if best is None or score > best[0]:
                best = (score, k, r)
        if best is None:
            break
        _, k, r = best
        genes[k] += 1
        steps.append(SizingStep(1, iteration, sizable[k], options[genes[k] - 1].drive,
                                options[genes[k]].drive, r.D_wc, r.worst_slack))
        report = r
    met = report.worst_slack >= 0
    if not met:
        log.info("timing not met after %d upsizing steps (worst slack %.4f ns)",
                 iteration, report.worst_slack)
        return SizingResult(Chromosome(genes), False, report.D_wc, report.worst_slack, steps)

    changed = True
    sweep = 0
    while changed:
        changed = False
        sweep += 1
        for k in reversed(range(len(sizable))):
            while genes[k] > 0:
                trial = genes.copy()
                trial[k] -= 1
                r = sta(trial)
                if r.worst_slack < 0:
                    break
                genes = trial
                report = r
                changed = True
                steps.append(SizingStep(2, sweep, sizable[k], options[genes[k] + 1].drive,
                                        options[genes[k]].drive, r.D_wc, r.worst_slack))
    return SizingResult(Chromosome(genes), True, report.D_wc, report.worst_slack, steps)
