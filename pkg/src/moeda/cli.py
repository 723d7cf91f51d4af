"""Command-line interface: ``moeda <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from . import __version__
from .analysis import Evaluator, PowerConfig, evaluate_netlist, power_breakdown
from .cell_library import (MINI_FINE_PAIRS, SyntheticParams, generate_synthetic_library,
                           interpolate_fine_cells, library_to_dict, load_library,
                           measure_drive_strength, mini_fine_library, mini_orig_library,
                           replace_name, save_library)
from .errors import ConstraintError, MoedaError, ParseError
from .moea import EvolutionConfig, best_tradeoff, evolve, normalized_distance
from .netlist import (Chromosome, Netlist, apply_chromosome, benchmark_names, extract_chromosome,
                      load_benchmark, parse_bench, tech_map)
from .reporting import (compare_runs, drive_histogram, drive_sum, format_comparison,
                        histogram_csv, pareto_export)
from .sizer import greedy_size
from .timing import (
    TimingConstraint, WireModel, format_paths, format_report, path_dict, run_sta, worst_paths,
)

log = logging.getLogger("moeda")

CONFIG_SECTIONS = {"timing": TimingConstraint, "power": PowerConfig, "wire": WireModel,
                   "evolution": EvolutionConfig}


class Config:
    """Typed view of the ``--config`` file (JSON or YAML)."""

    def __init__(self, data: dict | None = None, rng_seed: int | None = None):
        data = dict(data or {})
        unknown = set(data) - set(CONFIG_SECTIONS)
        if unknown:
            raise ParseError(f"unknown config sections: {sorted(unknown)}")
        built = {}
        for section, cls in CONFIG_SECTIONS.items():
            values = dict(data.get(section) or {})
            allowed = {f.name for f in fields(cls)}
            bad = set(values) - allowed
            if bad:
                raise ParseError(f"unknown keys in [{section}]: {sorted(bad)}")
            if section == "evolution" and rng_seed is not None:
                values["rng_seed"] = rng_seed
            try:
                built[section] = cls(**values)
            except TypeError as exc:
                raise ParseError(f"[{section}]: {exc}") from None
        self.timing: TimingConstraint = built["timing"]
        self.power: PowerConfig = built["power"]
        self.wire: WireModel = built["wire"]
        self.evolution: EvolutionConfig = built["evolution"]

    @classmethod
    def load(cls, path: str | None, rng_seed: int | None = None) -> Config:
        if path is None:
            return cls(None, rng_seed)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ParseError(f"{path}: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ParseError(f"{path}: top level must be a mapping")
        return cls(data, rng_seed)

    def to_dict(self) -> dict:
        return {s: asdict(getattr(self, s)) for s in CONFIG_SECTIONS}


# ---------------------------------------------------------------------------
# input helpers


def _library(args) -> object:
    if args.library is None:
        log.info("no --library given; using the synthetic MINI_FINE library")
        return mini_fine_library()
    if not Path(args.library).exists():
        raise ParseError(f"library {args.library} not found")
    return load_library(args.library)


def _netlist(args, lib) -> Netlist:
    """Mapped netlist from a JSON dump, a .bench file or a bundled benchmark name."""
    if args.netlist is None:
        raise ConstraintError("--netlist is required")
    path = Path(args.netlist)
    if path.suffix == ".json":
        if not path.exists():
            raise ParseError(f"netlist {args.netlist} not found")
        n = Netlist.load(path)
    elif path.exists():
        n = tech_map(parse_bench(path), lib)
    elif args.netlist in benchmark_names():
        n = tech_map(load_benchmark(args.netlist), lib)
    else:
        raise ParseError(f"netlist {args.netlist} not found")
    n.check_library(lib)
    return n


def _out_dir(args, default: str | None = None) -> Path | None:
    out = args.out or default
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _pairs(text: str) -> tuple[tuple[float, float], ...]:
    try:
        return tuple(tuple(float(v) for v in p.split(":")) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi pairs, got {text!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_lib_gen(args, cfg: Config) -> int:
    if args.preset == "orig":
        lib = mini_orig_library()
    elif args.preset == "fine":
        lib = mini_fine_library()
    else:
        overrides = {"name": args.name or "CUSTOM"}
        drive_sets = dict(SyntheticParams().drive_sets)
        if args.inv_drives:
            drive_sets["INV"] = args.inv_drives
        if args.nand_drives:
            drive_sets["NAND2"] = args.nand_drives
        overrides["drive_sets"] = drive_sets
        lib = generate_synthetic_library(**overrides)
    _emit_library(args, lib)
    return 0


def cmd_lib_interp(args, cfg: Config) -> int:
    if args.library is None:
        raise ConstraintError("--library is required")
    lib = load_library(args.library)
    pairs = args.pairs
    if pairs is None:
        drives = set(lib.drive_set("INV"))
        pairs = tuple(p for p in MINI_FINE_PAIRS if p[0] in drives and p[1] in drives)
    lib = replace_name(interpolate_fine_cells(lib, pairs), args.name or f"{lib.name}_FINE")
    _emit_library(args, lib)
    return 0


def _emit_library(args, lib) -> None:
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(json.dumps(library_to_dict(lib), indent=1) + "\n")
        return
    save_library(lib, out / "library.json")
    if args.measure:
        for cell in lib.cells_of("INV"):
            print(f"{cell.name:<10} labelled {cell.drive:g}  measured "
                  f"{measure_drive_strength(lib, cell):.4f}")
    print(f"{lib.name}: {len(lib.cells)} cells -> {out / 'library.json'}")


def cmd_map(args, cfg: Config) -> int:
    lib = _library(args)
    if args.netlist is None:
        raise ConstraintError("--netlist is required")
    path = Path(args.netlist)
    g = parse_bench(path) if path.exists() else load_benchmark(args.netlist)
    n = tech_map(g, lib, default_drive=args.drive)
    counts = n.counts()
    print(f"{n.name}: {len(n.primary_inputs)} inputs, {len(n.primary_outputs)} outputs, "
          f"{counts['INV']} INV, {counts['NAND2']} NAND2")
    out = _out_dir(args)
    if out is not None:
        n.save(out / "netlist.json")
    return 0


def cmd_sta(args, cfg: Config) -> int:
    lib = _library(args)
    n = _netlist(args, lib)
    report = run_sta(n, lib, cfg.timing, cfg.wire)
    paths = worst_paths(n, lib, cfg.timing, args.paths, cfg.wire, report)
    sys.stdout.write(format_report(report) + "\n" + format_paths(paths) + "\n")
    out = _out_dir(args)
    if out is not None:
        data = {**report.to_dict(), "worst_paths": [path_dict(p) for p in paths]}
        _write(out / "timing.json", json.dumps(data, indent=1) + "\n")
    return 0


def cmd_power(args, cfg: Config) -> int:
    lib = _library(args)
    n = _netlist(args, lib)
    sta = run_sta(n, lib, cfg.timing, cfg.wire)
    pb = power_breakdown(n, lib, cfg.power, sta)
    obj = evaluate_netlist(n, lib, cfg.timing, cfg.power, cfg.wire, sta)
    result = {"leakage": pb.leakage, "internal": pb.internal, "switching": pb.switching,
              "P_total": pb.total, "D_wc": obj.D_wc, "A_gate": obj.A_gate}
    for k, v in result.items():
        unit = "ns" if k == "D_wc" else "um2" if k == "A_gate" else "uW"
        print(f"{k:<10} {v:12.6f} {unit}")
    out = _out_dir(args)
    if out is not None:
        _write(out / "power.json", json.dumps(result, indent=1) + "\n")
    return 0


def cmd_seed_size(args, cfg: Config) -> int:
    lib = _library(args)
    n = _netlist(args, lib)
    res = greedy_size(n, lib, cfg.timing, cfg.power, cfg.wire)
    sized = apply_chromosome(n, res.chromosome, lib)
    obj = evaluate_netlist(sized, lib, cfg.timing, cfg.power, cfg.wire)
    status = "met" if res.timing_met else "FAILED"
    print(f"timing {status}: D_wc {obj.D_wc:.4f} ns, worst slack {res.worst_slack:.4f} ns, "
          f"P_total {obj.P_total:.4f} uW, A_gate {obj.A_gate:.3f} um2, {len(res.steps)} moves")
    out = _out_dir(args)
    if out is not None:
        sized.save(out / "seed_netlist.json")
        _write(out / "seed.json", json.dumps({**res.to_dict(), "P_total": obj.P_total,
                                              "A_gate": obj.A_gate}, indent=1) + "\n")
        _write(out / "sizing_log.jsonl", "".join(line + "\n" for line in res.log_lines()))
    return 0


def cmd_optimize(args, cfg: Config) -> int:
    lib = _library(args)
    n = _netlist(args, lib)
    evo = cfg.evolution
    overrides = {k: v for k, v in (("N", args.N), ("M", args.M), ("rho", args.rho),
                                   ("parallelism", args.parallelism)) if v is not None}
    if overrides:
        evo = EvolutionConfig(**{**asdict(evo), **overrides})
    if args.seed == "greedy":
        res = greedy_size(n, lib, cfg.timing, cfg.power, cfg.wire)
        if not res.timing_met:
            log.warning("greedy seed does not meet timing (worst slack %.4f ns)", res.worst_slack)
        seed = res.chromosome
    elif args.seed == "netlist":
        seed = extract_chromosome(n, lib)
    else:
        seed = Chromosome.from_key(args.seed)
    ev = Evaluator(n, lib, cfg.timing, cfg.power, cfg.wire)

    def progress(t, parents):
        log.info("generation %d/%d", t, evo.M)

    result = evolve(seed, evo, ev, callback=progress)
    out = _out_dir(args, "moeda_out")
    pareto_export(result, out)
    best = best_tradeoff(result.front, result.seed.objectives)
    summary = {"config": {**cfg.to_dict(), "evolution": asdict(evo)},
               "seed": {"chromosome": seed.key(), **asdict(result.seed.objectives)},
               "best_tradeoff": {"chromosome": best.chromosome.key(), **asdict(best.objectives),
                                 "distance": normalized_distance(best.objectives,
                                                                 result.seed.objectives)},
               "front_size": len(result.front), "evaluations": result.evaluations}
    _write(out / "summary.json", json.dumps(summary, indent=1) + "\n")
    apply_chromosome(n, best.chromosome, lib).save(out / "best_netlist.json")
    s, b = result.seed.objectives, best.objectives
    print(f"seed          D_wc {s.D_wc:.4f} ns  P {s.P_total:.4f} uW  A {s.A_gate:.3f} um2")
    print(f"best tradeoff D_wc {b.D_wc:.4f} ns  P {b.P_total:.4f} uW  A {b.A_gate:.3f} um2")
    print(f"front size {len(result.front)}, {result.evaluations} evaluations -> {out}")
    return 0


def cmd_report(args, cfg: Config) -> int:
    lib = _library(args)
    n = _netlist(args, lib)
    sta = run_sta(n, lib, cfg.timing, cfg.wire)
    hist = drive_histogram(n, lib)
    sums = drive_sum(n, lib, sta.critical_path)
    print("drive histogram (count per INV drive)")
    for row in hist.to_rows():
        print(f"  X{row['drive']:<6} {row['kind']:<8} {row['count']}")
    print(f"fine utilisation {hist.fine_utilization:.2f} %")
    print(f"drive sum: circuit {sums['circuit']:g}, critical path {sums['critical_path']:g}")
    print(format_paths(worst_paths(n, lib, cfg.timing, args.paths, cfg.wire, sta)))
    text = None
    if args.compare:
        runs = []
        for item in args.compare:
            label, _, path = item.partition("=")
            if not path:
                raise ConstraintError(f"--compare expects label=netlist.json, got {item!r}")
            other = Netlist.load(path)
            runs.append((label, evaluate_netlist(other, lib, cfg.timing, cfg.power, cfg.wire)))
        text = format_comparison(compare_runs(runs))
        print(text, end="")
    out = _out_dir(args)
    if out is not None:
        _write(out / "drive_histogram.csv", histogram_csv(hist))
        _write(out / "drive_sum.json", json.dumps(sums, indent=1) + "\n")
        if text is not None:
            _write(out / "comparison.txt", text)
    return 0


# ---------------------------------------------------------------------------
# parser


def _common_flags(default) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--library", default=default,
                   help="library JSON (default: synthetic MINI_FINE)")
    p.add_argument("--netlist", default=default,
                   help=".bench file, netlist JSON or bundled benchmark name")
    p.add_argument("--config", default=default,
                   help="JSON or YAML config with timing/power/wire/evolution sections")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--rng-seed", type=int, default=default, help="overrides evolution.rng_seed")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=False if default is None else default)
    return p


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the subcommand
    # copies suppress their defaults so they do not clobber earlier values
    common = _common_flags(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="moeda", parents=[_common_flags(None)],
                                     description="Drive-strength sizing toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    lib = sub.add_parser("lib", help="library generation and interpolation")
    lib_sub = lib.add_subparsers(dest="lib_command", required=True)
    gen = lib_sub.add_parser("gen", parents=[common], help="generate a synthetic library")
    gen.add_argument("--preset", choices=("orig", "fine", "custom"), default="orig")
    gen.add_argument("--name")
    gen.add_argument("--inv-drives", type=_floats, help="comma-separated INV drives (custom)")
    gen.add_argument("--nand-drives", type=_floats, help="comma-separated NAND2 drives (custom)")
    gen.add_argument("--measure", action="store_true", help="print measured INV drives")
    gen.set_defaults(func=cmd_lib_gen)
    interp = lib_sub.add_parser("interp", parents=[common],
                                help="insert midpoint inverters into --library")
    interp.add_argument("--name", help="name of the new library")
    interp.add_argument("--pairs", type=_pairs, help="lo:hi drive pairs (default: all adjacent)")
    interp.add_argument("--measure", action="store_true", help="print measured INV drives")
    interp.set_defaults(func=cmd_lib_interp)

    m = sub.add_parser("map", parents=[common], help="map a .bench netlist to INV/NAND2")
    m.add_argument("--drive", type=float, default=1.0, help="initial INV drive")
    m.set_defaults(func=cmd_map)

    sta = sub.add_parser("sta", parents=[common], help="static timing report")
    sta.add_argument("-k", "--paths", type=int, default=10, help="worst paths to list")
    sta.set_defaults(func=cmd_sta)

    pw = sub.add_parser("power", parents=[common], help="power breakdown and objectives")
    pw.set_defaults(func=cmd_power)

    ss = sub.add_parser("seed-size", parents=[common], help="greedy baseline sizing")
    ss.set_defaults(func=cmd_seed_size)

    opt = sub.add_parser("optimize", parents=[common], help="run the evolutionary sizer")
    opt.add_argument("--seed", default="greedy",
                     help="'greedy', 'netlist' (current assignment) or a gene key like 1-0-2")
    opt.add_argument("-N", type=int, help="population size")
    opt.add_argument("-M", type=int, help="generations")
    opt.add_argument("--rho", type=float, help="per-gene mutation probability")
    opt.add_argument("--parallelism", type=int, help="worker processes")
    opt.set_defaults(func=cmd_optimize)

    rep = sub.add_parser("report", parents=[common], help="drive histogram, drive sums, paths")
    rep.add_argument("-k", "--paths", type=int, default=10)
    rep.add_argument("--compare", nargs="+", metavar="LABEL=NETLIST",
                     help="objective comparison; the first run is the baseline")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = Config.load(args.config, args.rng_seed)
        return args.func(args, cfg)
    except MoedaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
