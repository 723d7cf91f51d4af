"""Post-processing of sizing results: histograms, drive sums, comparison tables, CSV export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

from .analysis import Objectives
from .cell_library import Library, format_drive
from .errors import ConstraintError
from .moea import EvolutionResult, Individual
from .netlist import Chromosome, Netlist
from .timing import TimingPath

FRONT_COLUMNS = ("chromosome", "D_wc", "P_total", "A_gate", "rank", "crowding")
POPULATION_COLUMNS = ("label", "chromosome", "D_wc", "P_total", "A_gate", "rank")
GENERATION_COLUMNS = ("generation", "chromosome", "D_wc", "P_total", "A_gate", "front1")


@dataclass(frozen=True)
class DriveHistogram:
    original: dict[float, int]
    fine: dict[float, int]

    @property
    def counts(self) -> dict[float, int]:
        return dict(sorted({**self.original, **self.fine}.items()))

    @property
    def total(self) -> int:
        return sum(self.original.values()) + sum(self.fine.values())

    @property
    def fine_utilization(self) -> float:
        """Percentage of inverters that use an interpolated cell."""
        total = self.total
        return 100.0 * sum(self.fine.values()) / total if total else 0.0

    def to_rows(self) -> list[dict]:
        fine = set(self.fine)
        return [{"drive": format_drive(d), "kind": "fine" if d in fine else "original", "count": c}
                for d, c in self.counts.items()]


def drive_histogram(n: Netlist, lib: Library) -> DriveHistogram:
    """Inverter count per drive, with a bin for every INV drive in ``lib``."""
    original: dict[float, int] = {}
    fine: dict[float, int] = {}
    for cell in lib.cells_of("INV"):
        (fine if cell.interpolated else original)[cell.drive] = 0
    for g, name in zip(n.gates, n.cells):
        if g.function != "INV":
            continue
        cell = lib.cell(name)
        bins = fine if cell.interpolated else original
        bins[cell.drive] = bins.get(cell.drive, 0) + 1
    return DriveHistogram(original, fine)


def drive_sum(n: Netlist, lib: Library, path: TimingPath | None = None) -> dict[str, float]:
    """Sum of inverter drives over the circuit and over ``path`` when given."""
    drives = {g.name: lib.cell(c).drive for g, c in zip(n.gates, n.cells) if g.function == "INV"}
    out = {"circuit": sum(drives.values())}
    if path is not None:
        out["critical_path"] = sum(drives.get(s.gate, 0.0) for s in path.stages)
    return out


def _ratio(value: float, base: float) -> float:
    if base == 0:
        return float("nan")
    return float(Decimal(repr(value / base)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def compare_runs(runs: Sequence[tuple[str, Objectives]], baseline: str | None = None) -> list[dict]:
    """Raw objectives of each labelled run plus their ratios to the baseline run.

    The baseline defaults to the first run. Ratios are rounded half-up to two decimals.
    """
    if not runs:
        raise ConstraintError("compare_runs needs at least one run")
    labels = [label for label, _ in runs]
    if baseline is None:
        baseline = labels[0]
    if baseline not in labels:
        raise ConstraintError(f"baseline {baseline!r} is not among the runs")
    base = dict(runs)[baseline]
    rows = []
    for label, obj in runs:
        row = {"label": label}
        for name, v, b in zip(("D_wc", "P_total", "A_gate"), obj.as_tuple(), base.as_tuple()):
            row[name] = v
            row[f"{name}_norm"] = _ratio(v, b)
        rows.append(row)
    return rows


def format_comparison(rows: Sequence[dict]) -> str:
    lines = [f"{'run':<16} {'D_wc[ns]':>10} {'(N.)':>5} {'P[uW]':>11} {'(N.)':>5} "
             f"{'A[um2]':>11} {'(N.)':>5}"]
    for r in rows:
        lines.append(f"{r['label']:<16} {r['D_wc']:10.4f} {r['D_wc_norm']:5.2f} "
                     f"{r['P_total']:11.3f} {r['P_total_norm']:5.2f} "
                     f"{r['A_gate']:11.3f} {r['A_gate_norm']:5.2f}")
    return "\n".join(lines) + "\n"


def _front_order(ind: Individual):
    return (*ind.values(), ind.chromosome.genes)


def front_rows(front: Sequence[Individual]) -> list[dict]:
    """Rows of ``front`` in a deterministic order; ranks are 1-based."""
    return [{"chromosome": ind.chromosome.key(), "D_wc": repr(ind.objectives.D_wc),
             "P_total": repr(ind.objectives.P_total), "A_gate": repr(ind.objectives.A_gate),
             "rank": ind.rank + 1, "crowding": repr(ind.crowding)}
            for ind in sorted(front, key=_front_order)]


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def front_csv(result: EvolutionResult) -> str:
    return _csv_text(FRONT_COLUMNS, front_rows(result.front))


def population_csv(result: EvolutionResult) -> str:
    seed = result.seed
    rows = [{"label": "seed", "chromosome": seed.chromosome.key(),
             "D_wc": repr(seed.objectives.D_wc), "P_total": repr(seed.objectives.P_total),
             "A_gate": repr(seed.objectives.A_gate), "rank": ""}]
    for ind in sorted(result.population, key=lambda i: (i.rank, *_front_order(i))):
        rows.append({"label": "final", "chromosome": ind.chromosome.key(),
                     "D_wc": repr(ind.objectives.D_wc), "P_total": repr(ind.objectives.P_total),
                     "A_gate": repr(ind.objectives.A_gate), "rank": ind.rank + 1})
    return _csv_text(POPULATION_COLUMNS, rows)


def generation_csv(record) -> str:
    rows = [{"generation": record.generation, "chromosome": c, "D_wc": repr(o[0]),
             "P_total": repr(o[1]), "A_gate": repr(o[2]), "front1": int(f)}
            for c, o, f in zip(record.chromosomes, record.objectives, record.front1)]
    return _csv_text(GENERATION_COLUMNS, rows)


def pareto_export(result: EvolutionResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the run's scatter data under ``out_dir``.

    Files: ``final_front.csv`` (front 1 of the final population),
    ``population.csv`` (seed row plus every final individual),
    ``generations/gen_NNNN.csv`` (one per generation) and ``history.jsonl``.
    """
    out = Path(out_dir)
    gen_dir = out / "generations"
    gen_dir.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(result.history))))
    written = {"final_front": out / "final_front.csv", "population": out / "population.csv",
               "history": out / "history.jsonl", "generations": gen_dir}
    written["final_front"].write_text(front_csv(result))
    written["population"].write_text(population_csv(result))
    with open(written["history"], "w") as fh:
        for record in result.history:
            fh.write(record.to_json() + "\n")
    for record in result.history:
        (gen_dir / f"gen_{record.generation:0{width}d}.csv").write_text(generation_csv(record))
    return written


def read_front_csv(path: str | Path) -> list[tuple[Chromosome, Objectives, int]]:
    with open(path, newline="") as fh:
        return [(Chromosome.from_key(r["chromosome"]),
                 Objectives(float(r["D_wc"]), float(r["P_total"]), float(r["A_gate"])),
                 int(r["rank"])) for r in csv.DictReader(fh)]


def histogram_csv(h: DriveHistogram) -> str:
    return _csv_text(("drive", "kind", "count"), h.to_rows())
