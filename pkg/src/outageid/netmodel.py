"""Network topology, incidence and admittance structures.

Case files are read from a plain-text subset of the MATPOWER case format
(see ``docs/case-format.md``).  Bus numbers in the file may be sparse; they
are densified to ``1..N`` in ascending order of the original ids, and the
original numbers are kept in :attr:`NetworkModel.bus_ids` for reporting.
"""

from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass, replace
from functools import cached_property
from importlib import resources
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "BusKind",
    "Bus",
    "Branch",
    "NetworkModel",
    "CaseFormatError",
    "CaseSyntaxError",
    "CaseSemanticError",
    "parse_case",
    "load_case",
    "case39",
    "serialize",
    "from_json",
    "build_admittance",
    "incidence_matrix",
    "remove_lines",
    "count_islands",
]


class CaseFormatError(ValueError):
    """Base class for case-file problems."""


class CaseSyntaxError(CaseFormatError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseSemanticError(CaseFormatError):
    pass


class BusKind(enum.Enum):
    REFERENCE = "Reference"
    GENERATOR = "Generator"
    LOAD = "Load"


@dataclass(frozen=True)
class Bus:
    """One bus, quantities in per-unit on the system base.

    ``id`` is the dense 1-based index; ``orig_id`` is the number used in
    the case file.
    """

    id: int
    kind: BusKind
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    v_setpoint: float = 1.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    orig_id: int | None = None

    @property
    def p_inject(self) -> float:
        return self.p_gen - self.p_load

    @property
    def q_inject(self) -> float:
        return self.q_gen - self.q_load


@dataclass(frozen=True)
class Branch:
    """A transmission line or fixed-ratio transformer (pi model).

    ``ratio`` is the off-nominal tap on the from side; 0 in a MATPOWER
    file means 1.
    """

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    ratio: float = 1.0
    status: bool = True

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0
    name: str = ""

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.branches)

    @cached_property
    def bus_ids(self) -> np.ndarray:
        """Original bus numbers, indexed by dense id - 1."""
        return np.array(
            [b.orig_id if b.orig_id is not None else b.id for b in self.buses]
        )

    @cached_property
    def reference(self) -> int:
        """Dense 1-based id of the reference bus."""
        return next(b.id for b in self.buses if b.kind is BusKind.REFERENCE)

    @cached_property
    def in_service(self) -> np.ndarray:
        return np.array([br.status for br in self.branches], dtype=bool)

    @cached_property
    def M(self) -> np.ndarray:
        return incidence_matrix(self)

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([br.admittance for br in self.branches], dtype=complex)

    @cached_property
    def Y(self) -> np.ndarray:
        Y = build_admittance(self)
        Y.flags.writeable = False
        return Y

    @cached_property
    def p_spec(self) -> np.ndarray:
        return np.array([b.p_inject for b in self.buses])

    @cached_property
    def q_spec(self) -> np.ndarray:
        return np.array([b.q_inject for b in self.buses])

    def line_index(self, line_id: int) -> int:
        if not 1 <= line_id <= self.n_line:
            raise ValueError(f"unknown line id {line_id} (model has {self.n_line} lines)")
        return line_id - 1

    def bus_index(self, orig_id: int) -> int:
        """Zero-based position of the bus numbered ``orig_id`` in the case file."""
        hits = np.flatnonzero(self.bus_ids == orig_id)
        if hits.size == 0:
            raise ValueError(f"unknown bus {orig_id}")
        return int(hits[0])

    def scale_loads(self, factors: np.ndarray) -> "NetworkModel":
        """Copy with each bus load (P and Q) multiplied by ``factors[i]``."""
        factors = np.asarray(factors, dtype=float)
        if factors.shape != (self.n_bus,):
            raise ValueError(f"expected {self.n_bus} load factors, got {factors.shape}")
        buses = tuple(
            replace(b, p_load=b.p_load * f, q_load=b.q_load * f)
            for b, f in zip(self.buses, factors)
        )
        out = replace(self, buses=buses)
        # loads do not enter Y, so the branch-side caches carry over
        for key in _BRANCH_CACHES:
            if key in self.__dict__:
                out.__dict__[key] = self.__dict__[key]
        return out


_BRANCH_CACHES = ("in_service", "M", "y", "Y")


def incidence_matrix(model: NetworkModel) -> np.ndarray:
    """Signed N x L incidence: +1 at a line's from bus, -1 at its to bus."""
    M = np.zeros((model.n_bus, model.n_line))
    for l, br in enumerate(model.branches):
        M[br.from_bus - 1, l] = 1.0
        M[br.to_bus - 1, l] = -1.0
    return M


def build_admittance(model: NetworkModel) -> np.ndarray:
    """Bus admittance matrix of the in-service network.

    Series terms enter as ``M diag(y) M^T``; tap ratios scale the from
    side, and line charging plus bus shunts go on the diagonal.  With unit
    taps and no charging or shunts the result is exactly ``M diag(y) M^T``.
    """
    on = model.in_service
    M = model.M[:, on]
    ys = model.y[on]
    taps = np.array([br.ratio for br in model.branches])[on]
    if np.all(taps == 1.0):
        Y = (M * ys) @ M.T
    else:
        # from-side rows of M carry 1/t
        Mt = M.astype(complex)
        for k, br in enumerate(b for b, s in zip(model.branches, on) if s):
            Mt[br.from_bus - 1, k] /= br.ratio
        Y = (Mt * ys) @ Mt.T
    Y = Y.astype(complex)
    idx = np.arange(model.n_bus)
    for br in (b for b in model.branches if b.status):
        half = 0.5j * br.b_charging
        Y[br.from_bus - 1, br.from_bus - 1] += half / br.ratio**2
        Y[br.to_bus - 1, br.to_bus - 1] += half
    Y[idx, idx] += np.array([complex(b.shunt_g, b.shunt_b) for b in model.buses])
    return Y


def remove_lines(model: NetworkModel, lines: Iterable[int]) -> NetworkModel:
    """Copy of ``model`` with the given 1-based lines taken out of service."""
    lines = set(lines)
    for l in lines:
        model.line_index(l)
    if not lines:
        return model
    branches = tuple(
        replace(br, status=False) if br.id in lines else br for br in model.branches
    )
    return replace(model, branches=branches)


def count_islands(model: NetworkModel) -> tuple[int, np.ndarray]:
    """Connected components of the in-service branch graph over all buses."""
    on = model.in_service
    f = np.array([br.from_bus - 1 for br in model.branches], dtype=int)[on]
    t = np.array([br.to_bus - 1 for br in model.branches], dtype=int)[on]
    n = model.n_bus
    graph = csr_matrix((np.ones(f.size), (f, t)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    return int(count), labels


# --------------------------------------------------------------------------
# case-file parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>%[^\n]*)
  | (?P<cont>\.\.\.[^\n]*\n)
  | (?P<nl>\n)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?Inf|NaN)
  | (?P<str>'[^'\n]*'|"[^"\n]*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<punct>[\[\]{}=;,()])
    """,
    re.VERBOSE,
)

_BUS_COLS = 13
_GEN_COLS = 10
_BRANCH_COLS = 11


def _tokenize(text: str):
    pos, line, col = 0, 1, 1
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise CaseSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind in ("num", "str", "name", "punct"):
            tokens.append((kind, value, line, col))
        elif kind == "nl":
            tokens.append(("nl", value, line, col))
        if kind in ("nl", "cont"):
            line += 1
            col = 1
        else:
            col += len(value)
        pos = m.end()
    tokens.append(("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise CaseSyntaxError(msg, tok[2], tok[3])

    def expect(self, value):
        tok = self.next()
        if tok[1] != value:
            self.fail(f"expected {value!r}, found {tok[1] or 'end of file'!r}", tok)
        return tok

    def skip_newlines(self):
        while self.peek()[0] == "nl" or self.peek()[1] in (";", ","):
            self.next()

    def parse(self) -> dict:
        fields: dict[str, object] = {}
        self.skip_newlines()
        if self.peek()[1] == "function":
            # function mpc = caseXX
            while self.peek()[0] not in ("nl", "eof"):
                self.next()
        while True:
            self.skip_newlines()
            tok = self.peek()
            if tok[0] == "eof":
                break
            if tok[0] != "name":
                self.fail(f"expected an assignment, found {tok[1]!r}")
            self.next()
            name = tok[1]
            self.expect("=")
            fields[name.split(".")[-1]] = self.value()
            end = self.peek()
            if end[1] == ";" or end[0] in ("nl", "eof"):
                continue
            self.fail(f"unexpected {end[1]!r} after value of {name}")
        return fields

    def value(self):
        tok = self.next()
        if tok[0] == "num":
            return float(tok[1])
        if tok[0] == "str":
            return tok[1][1:-1]
        if tok[1] == "[":
            return self.matrix(tok)
        if tok[1] == "{":
            self.skip_cell(tok)
            return None
        self.fail(f"expected a value, found {tok[1] or 'end of file'!r}", tok)

    def matrix(self, open_tok):
        rows: list[list[float]] = []
        row: list[float] = []
        while True:
            tok = self.next()
            kind, val = tok[0], tok[1]
            if kind == "eof":
                self.fail("unterminated matrix", open_tok)
            if val == "]":
                break
            if kind == "num":
                row.append(float(val))
            elif val == ";" or kind == "nl":
                if row:
                    rows.append(row)
                    row = []
            elif val == ",":
                continue
            else:
                self.fail(f"unexpected {val!r} inside matrix", tok)
        if row:
            rows.append(row)
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            self.fail(f"ragged matrix: row lengths {sorted(widths)}", open_tok)
        return rows

    def skip_cell(self, open_tok):
        depth = 1
        while depth:
            tok = self.next()
            if tok[0] == "eof":
                self.fail("unterminated cell array", open_tok)
            depth += {"{": 1, "}": -1}.get(tok[1], 0)


def _table(fields, key, min_cols):
    rows = fields.get(key)
    if rows is None:
        raise CaseSemanticError(f"missing mpc.{key} table")
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise CaseSemanticError(f"mpc.{key} is empty")
    if arr.shape[1] < min_cols:
        raise CaseSemanticError(
            f"mpc.{key} has {arr.shape[1]} columns, at least {min_cols} required"
        )
    return arr


def parse_case(text: str, name: str = "") -> NetworkModel:
    """Parse MATPOWER-style case text into a validated :class:`NetworkModel`.

    Raises :class:`CaseSyntaxError` (with line and column) for malformed
    text and :class:`CaseSemanticError` for inconsistent data.
    """
    fields = _Parser(text).parse()
    base = fields.get("baseMVA", 100.0)
    if not isinstance(base, float) or base <= 0:
        raise CaseSemanticError("baseMVA must be a positive number")
    bus = _table(fields, "bus", _BUS_COLS)
    branch = _table(fields, "branch", _BRANCH_COLS)
    gen = fields.get("gen")
    gen = np.array(gen, dtype=float) if gen else np.zeros((0, _GEN_COLS))
    if gen.size and gen.shape[1] < 8:
        raise CaseSemanticError("mpc.gen needs at least 8 columns")

    orig = bus[:, 0].astype(int)
    if np.any(bus[:, 0] != orig):
        raise CaseSemanticError("bus numbers must be integers")
    seen = set()
    for b in orig:
        if b in seen:
            raise CaseSemanticError(f"duplicate bus id {b}")
        seen.add(b)
    order = np.argsort(orig, kind="stable")
    dense = {int(orig[k]): pos + 1 for pos, k in enumerate(order)}

    types = bus[:, 1].astype(int)
    refs = [int(orig[k]) for k in range(len(orig)) if types[k] == 3]
    if not refs:
        raise CaseSemanticError("no reference bus (type 3)")
    if len(refs) > 1:
        raise CaseSemanticError(f"more than one reference bus: {refs}")

    pg = np.zeros(len(orig))
    qg = np.zeros(len(orig))
    vg: dict[int, float] = {}
    for row in gen:
        gb = int(row[0])
        if gb not in dense:
            raise CaseSemanticError(f"generator at unknown bus {gb}")
        if row[7] <= 0:
            continue
        k = dense[gb] - 1
        pg[k] += row[1] / base
        qg[k] += row[2] / base
        vg.setdefault(k, row[5])

    buses = []
    for pos, k in enumerate(order):
        t = types[k]
        if t == 3:
            kind = BusKind.REFERENCE
        elif t == 2 and pos in vg:
            kind = BusKind.GENERATOR
        else:
            kind = BusKind.LOAD
        vset = vg.get(pos, bus[k, 7] if t == 3 else 1.0)
        buses.append(
            Bus(
                id=pos + 1,
                kind=kind,
                p_load=bus[k, 2] / base,
                q_load=bus[k, 3] / base,
                p_gen=pg[pos],
                q_gen=qg[pos],
                v_setpoint=float(vset),
                shunt_g=bus[k, 4] / base,
                shunt_b=bus[k, 5] / base,
                orig_id=int(orig[k]),
            )
        )

    branches = []
    for i, row in enumerate(branch):
        f, t = int(row[0]), int(row[1])
        for b in (f, t):
            if b not in dense:
                raise CaseSemanticError(f"branch {i + 1} references unknown bus {b}")
        if f == t:
            raise CaseSemanticError(f"branch {i + 1} connects bus {f} to itself")
        status = bool(row[10] > 0)
        if row[3] == 0 and status:
            raise CaseSemanticError(f"branch {i + 1} has zero reactance")
        if branch.shape[1] > 9 and row[9] != 0:
            raise CaseSemanticError(f"branch {i + 1}: phase shifters are not supported")
        ratio = row[8] if row[8] != 0 else 1.0
        branches.append(
            Branch(
                id=i + 1,
                from_bus=dense[f],
                to_bus=dense[t],
                r=float(row[2]),
                x=float(row[3]),
                b_charging=float(row[4]),
                ratio=float(ratio),
                status=status,
            )
        )
    return NetworkModel(tuple(buses), tuple(branches), base_mva=float(base), name=name)


def load_case(source: str) -> NetworkModel:
    """Load a case by file path, or a bundled case by name (``"case39"``).

    ``.json`` files are read as the canonical serialization.
    """
    if not os.path.exists(source):
        bundled = resources.files("outageid.data").joinpath(f"{source}.m")
        if bundled.is_file():
            return parse_case(bundled.read_text(), name=source)
        raise FileNotFoundError(f"no case file or bundled case named {source!r}")
    with open(source) as fh:
        text = fh.read()
    if source.endswith(".json"):
        return from_json(text)
    stem = os.path.splitext(os.path.basename(source))[0]
    return parse_case(text, name=stem)


def case39() -> NetworkModel:
    """The bundled IEEE 39-bus New England system."""
    return load_case("case39")


def serialize(model: NetworkModel) -> str:
    """Canonical JSON form of a model (sorted keys, round-trip floats)."""
    doc = {
        "name": model.name,
        "base_mva": model.base_mva,
        "buses": [
            {
                "id": b.id,
                "orig_id": b.orig_id,
                "kind": b.kind.value,
                "p_load": b.p_load,
                "q_load": b.q_load,
                "p_gen": b.p_gen,
                "q_gen": b.q_gen,
                "v_setpoint": b.v_setpoint,
                "shunt_g": b.shunt_g,
                "shunt_b": b.shunt_b,
            }
            for b in model.buses
        ],
        "branches": [
            {
                "id": br.id,
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "r": br.r,
                "x": br.x,
                "b_charging": br.b_charging,
                "ratio": br.ratio,
                "status": br.status,
            }
            for br in model.branches
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def from_json(text: str) -> NetworkModel:
    doc = json.loads(text)
    buses = tuple(
        Bus(**{**b, "kind": BusKind(b["kind"])}) for b in doc["buses"]
    )
    branches = tuple(Branch(**br) for br in doc["branches"])
    return NetworkModel(buses, branches, base_mva=doc["base_mva"], name=doc["name"])
