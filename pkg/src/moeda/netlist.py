"""Benchmark netlists, INV/NAND2 technology mapping and drive chromosomes."""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .cell_library import Library
from .errors import ConstraintError, EvaluationError, ParseError

GENERIC_OPS = ("AND", "OR", "NAND", "NOR", "NOT", "XOR", "XNOR", "BUFF")
_OP_ALIASES = {"BUF": "BUFF", "INV": "NOT"}
_PORT_RE = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^\s()]+)\s*\)$", re.IGNORECASE)
_GATE_RE = re.compile(r"^([^\s=]+)\s*=\s*([A-Za-z]+)\s*\(([^()]*)\)$")


class BenchParseError(ParseError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path or '<bench>'}" + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {message}")
        self.line = line


def _topological(names: Iterable[str], preds: dict[str, Sequence[str]]) -> list[str]:
    """Kahn's algorithm, ties broken by name; raises ValueError listing cycle members."""
    names = list(names)
    indegree = {n: 0 for n in names}
    succs: dict[str, list[str]] = {n: [] for n in names}
    for n in names:
        for p in preds[n]:
            if p in indegree:
                indegree[n] += 1
                succs[p].append(n)
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for s in succs[n]:
            indegree[s] -= 1
            if indegree[s] == 0:
                heapq.heappush(ready, s)
    if len(order) != len(names):
        stuck = sorted(n for n, d in indegree.items() if d > 0)
        raise ValueError(", ".join(stuck[:10]))
    return order


@dataclass(frozen=True)
class GenericNode:
    name: str
    op: str
    fanins: tuple[str, ...]


@dataclass(frozen=True)
class GenericNetlist:
    primary_inputs: tuple[str, ...]
    primary_outputs: tuple[str, ...]
    nodes: tuple[GenericNode, ...]
    name: str = "circuit"

    @cached_property
    def topo_order(self) -> tuple[str, ...]:
        preds = {n.name: n.fanins for n in self.nodes}
        return tuple(_topological(preds, preds))

    @cached_property
    def node_map(self) -> dict[str, GenericNode]:
        return {n.name: n for n in self.nodes}


def parse_bench(source, name: str | None = None) -> GenericNetlist:
    """Parse ISCAS ``.bench`` text from a path or a string containing the text."""
    path = None
    looks_like_path = isinstance(source, str) and "\n" not in source and (
        "(" not in source or Path(source).is_file())
    if isinstance(source, Path) or looks_like_path:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise BenchParseError(f"cannot read file: {exc}", path) from None
        name = name or path.stem
    else:
        text = source
    inputs, outputs, nodes = [], [], {}
    defined: dict[str, int] = {}
    # a single-line program "INPUT(a) OUTPUT(y) y = NOT(a)" is split into statements
    statements = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        for stmt in re.findall(r"[^\s=()]+\s*=\s*[A-Za-z]+\s*\([^()]*\)|[A-Za-z]+\s*\([^()]*\)|\S+",
                               line):
            statements.append((lineno, stmt.strip()))
    for lineno, stmt in statements:
        port = _PORT_RE.match(stmt)
        if port:
            kind, signal = port.group(1).upper(), port.group(2)
            if kind == "INPUT":
                if signal in defined:
                    raise BenchParseError(f"duplicate definition of {signal}", path, lineno)
                defined[signal] = lineno
                inputs.append(signal)
            else:
                outputs.append(signal)
            continue
        gate = _GATE_RE.match(stmt)
        if not gate:
            raise BenchParseError(f"cannot parse statement {stmt!r}", path, lineno)
        out, op, args = gate.group(1), gate.group(2).upper(), gate.group(3)
        op = _OP_ALIASES.get(op, op)
        if op not in GENERIC_OPS:
            raise BenchParseError(f"unknown operator {gate.group(2)!r}", path, lineno)
        fanins = tuple(a.strip() for a in args.split(",") if a.strip())
        if not fanins:
            raise BenchParseError(f"{out} = {op}() has no inputs", path, lineno)
        if op in ("NOT", "BUFF") and len(fanins) != 1:
            raise BenchParseError(f"{op} takes exactly one input", path, lineno)
        if out in defined:
            raise BenchParseError(f"duplicate definition of {out}", path, lineno)
        defined[out] = lineno
        nodes[out] = GenericNode(out, op, fanins)
    for node in nodes.values():
        for f in node.fanins:
            if f not in defined:
                raise BenchParseError(f"undefined signal {f!r} used by {node.name}", path,
                                      defined[node.name])
    for o in outputs:
        if o not in defined:
            raise BenchParseError(f"undefined output signal {o!r}", path)
    if len(set(outputs)) != len(outputs):
        raise BenchParseError("duplicate OUTPUT declaration", path)
    g = GenericNetlist(tuple(inputs), tuple(outputs), tuple(nodes.values()), name or "circuit")
    try:
        g.topo_order
    except ValueError as exc:
        raise BenchParseError(f"combinational cycle through {exc}", path) from None
    return g


def benchmark_names() -> list[str]:
    folder = resources.files("moeda.data").joinpath("iscas85")
    return sorted(p.name[:-6] for p in folder.iterdir() if p.name.endswith(".bench"))


def load_benchmark(name: str) -> GenericNetlist:
    """One of the bundled ISCAS85 circuits, e.g. ``load_benchmark("c1908")``."""
    ref = resources.files("moeda.data").joinpath("iscas85", f"{name.lower()}.bench")
    if not ref.is_file():
        raise BenchParseError(f"no bundled benchmark {name!r}; have {benchmark_names()}")
    return parse_bench(ref.read_text(), name=name.lower())


# ---------------------------------------------------------------------------
# mapped netlists


@dataclass(frozen=True)
class Gate:
    name: str
    function: str
    fanins: tuple[str, ...]


class Topology:
    """Structure shared by every drive assignment of one mapped netlist."""

    def __init__(self, primary_inputs, primary_outputs, gates: Sequence[Gate]):
        self.primary_inputs = tuple(primary_inputs)
        self.primary_outputs = tuple(primary_outputs)
        self.gates = tuple(gates)
        self.index = {g.name: i for i, g in enumerate(self.gates)}
        if len(self.index) != len(self.gates):
            raise ConstraintError("duplicate gate names")
        pis = set(self.primary_inputs)
        if pis & set(self.index):
            raise ConstraintError("gate name collides with a primary input")
        for g in self.gates:
            want = 1 if g.function == "INV" else 2
            if g.function not in ("INV", "NAND2") or len(g.fanins) != want:
                raise ConstraintError(f"gate {g.name}: {g.function} with {len(g.fanins)} fanins")
            for f in g.fanins:
                if f not in self.index and f not in pis:
                    raise ConstraintError(f"gate {g.name}: undefined fanin {f!r}")
        for o in self.primary_outputs:
            if o not in self.index and o not in pis:
                raise ConstraintError(f"undefined primary output {o!r}")
        preds = {g.name: tuple(f for f in g.fanins if f in self.index) for g in self.gates}
        try:
            order = _topological(preds, preds)
        except ValueError as exc:
            raise ConstraintError(f"combinational cycle through {exc}") from None
        self.topo_order = tuple(self.index[n] for n in order)
        fanouts: dict[str, list[str]] = {n: [] for n in (*self.primary_inputs, *self.index)}
        for i in self.topo_order:
            g = self.gates[i]
            for f in g.fanins:
                fanouts[f].append(g.name)
        self.fanouts = {k: tuple(v) for k, v in fanouts.items()}
        self.sizable_ids = tuple(self.gates[i].name for i in self.topo_order
                                 if self.gates[i].function == "INV")
        self.sizable_index = tuple(self.index[n] for n in self.sizable_ids)
        self.output_set = frozenset(self.primary_outputs)

    def edges(self) -> set[tuple[str, str]]:
        return {(f, g.name) for g in self.gates for f in g.fanins}


@dataclass(frozen=True, eq=False)
class Netlist:
    """Technology-mapped INV/NAND2 netlist with one cell assigned per gate."""

    topology: Topology
    cells: tuple[str, ...]
    name: str = "circuit"

    def __post_init__(self):
        if len(self.cells) != len(self.topology.gates):
            raise ConstraintError("one cell name per gate required")

    def __eq__(self, other):
        if not isinstance(other, Netlist):
            return NotImplemented
        t, o = self.topology, other.topology
        return (self.cells == other.cells and t.gates == o.gates
                and t.primary_inputs == o.primary_inputs and t.primary_outputs == o.primary_outputs)

    __hash__ = None

    @classmethod
    def build(cls, primary_inputs, primary_outputs, gates: Sequence[Gate], cells: Sequence[str],
              name: str = "circuit") -> Netlist:
        return cls(Topology(primary_inputs, primary_outputs, gates), tuple(cells), name)

    @property
    def primary_inputs(self) -> tuple[str, ...]:
        return self.topology.primary_inputs

    @property
    def primary_outputs(self) -> tuple[str, ...]:
        return self.topology.primary_outputs

    @property
    def gates(self) -> tuple[Gate, ...]:
        return self.topology.gates

    @property
    def sizable_ids(self) -> tuple[str, ...]:
        return self.topology.sizable_ids

    def cell_of(self, gate: str) -> str:
        return self.cells[self.topology.index[gate]]

    def with_cells(self, cells: Sequence[str]) -> Netlist:
        return Netlist(self.topology, tuple(cells), self.name)

    def counts(self) -> dict[str, int]:
        inv = sum(1 for g in self.gates if g.function == "INV")
        return {"INV": inv, "NAND2": len(self.gates) - inv, "total": len(self.gates)}

    def check_library(self, lib: Library) -> None:
        for g, c in zip(self.gates, self.cells):
            if c not in lib:
                raise EvaluationError(f"gate {g.name}: cell {c!r} not in library {lib.name}")
            if lib.cell(c).function != g.function:
                raise EvaluationError(f"gate {g.name}: cell {c} does not implement {g.function}")

    def to_dict(self) -> dict:
        return {"format": "moeda-netlist", "version": 1, "name": self.name,
                "primary_inputs": list(self.primary_inputs),
                "primary_outputs": list(self.primary_outputs),
                "gates": [{"name": g.name, "function": g.function, "cell": c,
                           "fanins": list(g.fanins)} for g, c in zip(self.gates, self.cells)]}

    @classmethod
    def from_dict(cls, data: dict) -> Netlist:
        try:
            if data.get("format") != "moeda-netlist":
                raise ParseError("not a moeda netlist dump")
            gates = [Gate(g["name"], g["function"], tuple(g["fanins"])) for g in data["gates"]]
            return cls.build(data["primary_inputs"], data["primary_outputs"], gates,
                             [g["cell"] for g in data["gates"]], data.get("name", "circuit"))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed netlist dump: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> Netlist:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


class _Mapper:
    def __init__(self):
        self.gates: list[Gate] = []
        self.names: set[str] = set()
        self.counter = 0

    def fresh(self, base: str) -> str:
        while True:
            self.counter += 1
            name = f"{base}.{self.counter}"
            if name not in self.names:
                return name

    def emit(self, function: str, fanins: Sequence[str], base: str, out: str | None) -> str:
        name = out or self.fresh(base)
        self.names.add(name)
        self.gates.append(Gate(name, function, tuple(fanins)))
        return name

    # each helper returns the net carrying the requested function of ``ins``;
    # ``out`` names the final gate when the caller needs a specific net name

    def inv(self, x, base, out=None):
        return self.emit("INV", (x,), base, out)

    def nand(self, ins, base, out=None):
        if len(ins) == 1:
            return self.inv(ins[0], base, out)
        half = (len(ins) + 1) // 2
        return self.emit("NAND2", (self.and_(ins[:half], base), self.and_(ins[half:], base)),
                         base, out)

    def and_(self, ins, base, out=None):
        if len(ins) == 1 and out is None:
            return ins[0]
        return self.inv(self.nand(ins, base), base, out)

    def nor(self, ins, base, out=None):
        if len(ins) == 1:
            return self.inv(ins[0], base, out)
        return self.inv(self.or_(ins, base), base, out)

    def or_(self, ins, base, out=None):
        if len(ins) == 1:
            return ins[0] if out is None else self.buff(ins[0], base, out)
        half = (len(ins) + 1) // 2
        return self.emit("NAND2", (self.nor(ins[:half], base), self.nor(ins[half:], base)),
                         base, out)

    def buff(self, x, base, out=None):
        return self.inv(self.inv(x, base), base, out)

    def xor(self, ins, base, out=None):
        if len(ins) == 1:
            return ins[0] if out is None else self.buff(ins[0], base, out)
        half = (len(ins) + 1) // 2
        a, b = self.xor(ins[:half], base), self.xor(ins[half:], base)
        n1 = self.emit("NAND2", (a, b), base, None)
        n2 = self.emit("NAND2", (a, n1), base, None)
        n3 = self.emit("NAND2", (b, n1), base, None)
        return self.emit("NAND2", (n2, n3), base, out)

    def xnor(self, ins, base, out=None):
        return self.inv(self.xor(ins, base), base, out)


def tech_map(g: GenericNetlist, lib: Library | None = None, default_drive: float = 1.0,
             nand_drive: float | None = None) -> Netlist:
    """Rewrite a generic netlist into INV and NAND2 gates.

    Every inverter gets the ``default_drive`` cell (``INVX1`` by default), every
    NAND2 the smallest NAND2 cell of ``lib`` (``NANDX0`` if no library is given).
    The original node names survive as the names of the gates driving them.
    """
    m = _Mapper()
    m.names.update(g.primary_inputs)
    m.names.update(n.name for n in g.nodes)
    dispatch = {"NOT": lambda ins, b, o: m.inv(ins[0], b, o),
                "BUFF": lambda ins, b, o: m.buff(ins[0], b, o),
                "AND": m.and_, "NAND": m.nand, "OR": m.or_, "NOR": m.nor,
                "XOR": m.xor, "XNOR": m.xnor}
    for name in g.topo_order:
        node = g.node_map[name]
        if node.op not in dispatch:
            raise ConstraintError(f"cannot map operator {node.op}")
        dispatch[node.op](list(node.fanins), name, name)
    if lib is not None:
        inv_cell = lib.cell_for("INV", default_drive).name
        nand_cells = lib.cells_of("NAND2")
        if not nand_cells:
            raise ConstraintError(f"library {lib.name} has no NAND2 cell")
        nand_cell = (lib.cell_for("NAND2", nand_drive).name if nand_drive is not None
                     else nand_cells[0].name)
    else:
        inv_cell = f"INVX{default_drive:g}"
        nand_cell = f"NANDX{(nand_drive or 0.0):g}"
    cells = [inv_cell if gate.function == "INV" else nand_cell for gate in m.gates]
    return Netlist.build(g.primary_inputs, g.primary_outputs, m.gates, cells, g.name)


# ---------------------------------------------------------------------------
# simulation

_GENERIC_EVAL = {
    "NOT": lambda v, mask: ~v[0] & mask,
    "BUFF": lambda v, mask: v[0],
}


def _reduce(op, values, mask):
    acc = values[0]
    for v in values[1:]:
        if op in ("AND", "NAND"):
            acc &= v
        elif op in ("OR", "NOR"):
            acc |= v
        else:
            acc ^= v
    if op in ("NAND", "NOR", "XNOR"):
        acc = ~acc & mask
    return acc


def simulate_words(n: Netlist | GenericNetlist, words: Sequence[int], width: int) -> list[int]:
    """Bit-parallel simulation: bit k of ``words[i]`` is input i under vector k."""
    if len(words) != len(n.primary_inputs):
        raise ConstraintError(
            f"expected {len(n.primary_inputs)} input words, got {len(words)}")
    mask = (1 << width) - 1
    value = dict(zip(n.primary_inputs, (w & mask for w in words)))
    if isinstance(n, Netlist):
        gates = n.gates
        for i in n.topology.topo_order:
            gate = gates[i]
            if gate.function == "INV":
                value[gate.name] = ~value[gate.fanins[0]] & mask
            else:
                value[gate.name] = ~(value[gate.fanins[0]] & value[gate.fanins[1]]) & mask
    else:
        for name in n.topo_order:
            node = n.node_map[name]
            ins = [value[f] for f in node.fanins]
            if node.op in _GENERIC_EVAL:
                value[name] = _GENERIC_EVAL[node.op](ins, mask)
            else:
                value[name] = _reduce(node.op, ins, mask)
    return [value[o] for o in n.primary_outputs]


def simulate(n: Netlist | GenericNetlist, input_vector: Sequence[int]) -> list[int]:
    """Output bits for one input vector (ordered as ``primary_inputs``)."""
    if len(input_vector) != len(n.primary_inputs):
        raise ConstraintError(
            f"input vector has {len(input_vector)} bits, netlist has "
            f"{len(n.primary_inputs)} primary inputs")
    return [w & 1 for w in simulate_words(n, [int(bool(b)) for b in input_vector], 1)]


# ---------------------------------------------------------------------------
# chromosomes


@dataclass(frozen=True)
class Chromosome:
    """Drive-set indexes for the sizable inverters, in ``sizable_ids`` order."""

    genes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(int(g) for g in self.genes))

    def __len__(self):
        return len(self.genes)

    def key(self) -> str:
        return "-".join(map(str, self.genes))

    @classmethod
    def from_key(cls, key: str) -> Chromosome:
        return cls(tuple(int(x) for x in key.split("-")) if key else ())


def extract_chromosome(n: Netlist, lib: Library) -> Chromosome:
    position = {c.name: i for i, c in enumerate(lib.cells_of("INV"))}
    try:
        return Chromosome(tuple(position[n.cells[i]] for i in n.topology.sizable_index))
    except KeyError as exc:
        raise EvaluationError(f"inverter cell {exc.args[0]} not in library {lib.name}") from None


def apply_chromosome(n: Netlist, c: Chromosome, lib: Library) -> Netlist:
    """New netlist with inverter cells replaced; topology is shared, not copied."""
    sizable = n.topology.sizable_index
    if len(c.genes) != len(sizable):
        raise ConstraintError(f"chromosome has {len(c.genes)} genes, netlist has "
                              f"{len(sizable)} sizable inverters")
    options = lib.cells_of("INV")
    cells = list(n.cells)
    for idx, gene in zip(sizable, c.genes):
        if not 0 <= gene < len(options):
            raise ConstraintError(f"gene {gene} outside drive set of size {len(options)}")
        cells[idx] = options[gene].name
    return n.with_cells(cells)
