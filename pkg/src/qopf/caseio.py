"""
MATPOWER-subset case files, bundled test cases and run reports.

Only the ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen``, ``mpc.branch`` and
``mpc.gencost`` assignments are interpreted. Other ``mpc.*`` assignments are
skipped, ``%`` comments and a leading ``function`` line are ignored. Columns
follow the MATPOWER convention::

    bus     = [id type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin]
    gen     = [bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin ...]
    branch  = [from to r x b rateA rateB rateC tap shift status ...]
    gencost = [2 startup shutdown n c(n-1) ... c0]

Out-of-service generators and branches (status column 0) are dropped.
Shunts, tap ratios and phase shifts are not modelled.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

BUILTIN_CASES = ("case3", "case5", "case118", "case300")
BUS_TYPES = {1: "PQ", 2: "PV", 3: "ref"}
_BUS_CODES = {v: k for k, v in BUS_TYPES.items()}


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseSyntaxError(CaseError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseSemanticError(CaseError):
    """Well-formed text describing an invalid network."""


class UnknownCaseError(CaseError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown case"


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    p_demand: float
    q_demand: float
    v_min: float
    v_max: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    susceptance: float
    rating: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost: Tuple[float, float, float]  # (c2, c1, c0)


@dataclass(frozen=True)
class CaseData:
    name: str
    base_mva: float
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...]
    generators: Tuple[Generator, ...]

    @property
    def bus_index(self) -> Dict[int, int]:
        """Map bus id to its position in ``buses``."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def ref_bus(self) -> int:
        """Position (not id) of the reference bus in ``buses``."""
        return next(i for i, b in enumerate(self.buses) if b.type == "ref")

    def summary(self) -> str:
        return (f"{self.name}: {len(self.buses)} buses, {len(self.generators)} generators, "
                f"{len(self.branches)} branches")


# --------------------------------------------------------------------------
# tokenizer / parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<cont>\.\.\.[^\n]*)
  | (?P<comment>[%#][^\n]*)
  | (?P<newline>\n)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eEdD][+-]?\d+)?|[+-]?(?:Inf|inf|NaN|nan)\b)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<string>'[^'\n]*')
  | (?P<punct>[=;,\[\]{}()])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise CaseSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "newline":
            tokens.append(_Token("newline", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind == "cont":
            # line continuation: swallow the rest of the line and the newline
            end = m.end()
            if end < len(text) and text[end] == "\n":
                end += 1
                line += 1
                line_start = end
            pos = end
            continue
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise CaseSyntaxError(f"expected {text!r}, found {tok.text or tok.kind!r}", tok.line, tok.col)
        return tok

    def skip_newlines(self):
        while self.peek().kind == "newline" or self.peek().text == ";":
            self.next()

    def parse(self) -> Tuple[Optional[str], Dict[str, Tuple[object, _Token]]]:
        name = None
        values: Dict[str, Tuple[object, _Token]] = {}
        self.skip_newlines()
        if self.peek().text == "function":
            self.next()
            self.expect_ident()
            self.expect("=")
            name = self.expect_ident().text
            self.end_statement()
        while True:
            self.skip_newlines()
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.text == "end":
                self.next()
                continue
            target = self.expect_ident()
            self.expect("=")
            value = self.parse_value()
            self.end_statement()
            values[target.text] = (value, target)
        return name, values

    def expect_ident(self) -> _Token:
        tok = self.next()
        if tok.kind != "ident":
            raise CaseSyntaxError(f"expected a name, found {tok.text or tok.kind!r}", tok.line, tok.col)
        return tok

    def end_statement(self):
        tok = self.peek()
        if tok.text == ";" or tok.kind in ("newline", "eof"):
            if tok.kind != "eof":
                self.next()
            return
        raise CaseSyntaxError(f"expected end of statement, found {tok.text!r}", tok.line, tok.col)

    def parse_value(self):
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            return _to_float(tok)
        if tok.kind == "string":
            self.next()
            return tok.text[1:-1]
        if tok.text == "[":
            return self.parse_matrix()
        if tok.text == "{":
            self.skip_balanced("{", "}")
            return None
        raise CaseSyntaxError(f"unexpected {tok.text or tok.kind!r} in assignment", tok.line, tok.col)

    def skip_balanced(self, open_, close):
        depth = 0
        while True:
            tok = self.next()
            if tok.kind == "eof":
                raise CaseSyntaxError(f"unterminated {open_!r}", tok.line, tok.col)
            if tok.text == open_:
                depth += 1
            elif tok.text == close:
                depth -= 1
                if depth == 0:
                    return

    def parse_matrix(self) -> List[List[float]]:
        open_tok = self.expect("[")
        rows: List[List[float]] = []
        row: List[float] = []
        row_tok = None
        width = None

        def close_row():
            nonlocal row, width
            if not row:
                return
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CaseSyntaxError(
                    f"row has {len(row)} columns, expected {width}", row_tok.line, row_tok.col
                )
            rows.append(row)
            row = []

        while True:
            tok = self.next()
            if tok.kind == "eof":
                raise CaseSyntaxError("unterminated matrix", open_tok.line, open_tok.col)
            if tok.text == "]":
                close_row()
                return rows
            if tok.kind == "number":
                if not row:
                    row_tok = tok
                row.append(_to_float(tok))
            elif tok.text == ";" or tok.kind == "newline":
                close_row()
            elif tok.text == ",":
                continue
            else:
                raise CaseSyntaxError(f"unexpected {tok.text!r} in matrix", tok.line, tok.col)


def _to_float(tok: _Token) -> float:
    text = tok.text.replace("d", "e").replace("D", "e")
    try:
        return float(text)
    except ValueError:
        raise CaseSyntaxError(f"malformed number {tok.text!r}", tok.line, tok.col) from None


def _matrix(values, key: str, min_cols: int) -> List[List[float]]:
    if key not in values:
        raise CaseSemanticError(f"missing assignment {key}")
    rows, tok = values[key]
    if not isinstance(rows, list):
        raise CaseSemanticError(f"{key} must be a matrix")
    for r in rows:
        if len(r) < min_cols:
            raise CaseSemanticError(f"{key} rows need at least {min_cols} columns, got {len(r)}")
    return rows


def _as_int(value: float, what: str) -> int:
    if not math.isfinite(value) or value != int(value):
        raise CaseSemanticError(f"{what} must be an integer, got {value}")
    return int(value)


def parse_matpower(text: str, name: Optional[str] = None) -> CaseData:
    """Parse MATPOWER-subset text into a validated :class:`CaseData`."""
    fname, values = _Parser(text).parse()
    name = name or fname or "case"
    if "mpc.baseMVA" not in values:
        raise CaseSemanticError("missing assignment mpc.baseMVA")
    base_mva = values["mpc.baseMVA"][0]
    if not isinstance(base_mva, float):
        raise CaseSemanticError("mpc.baseMVA must be a scalar")
    bus_rows = _matrix(values, "mpc.bus", 13)
    gen_rows = _matrix(values, "mpc.gen", 10)
    branch_rows = _matrix(values, "mpc.branch", 6)
    cost_rows = _matrix(values, "mpc.gencost", 4)

    buses = []
    for r in bus_rows:
        code = _as_int(r[1], "bus type")
        if code not in BUS_TYPES:
            raise CaseSemanticError(f"bus {r[0]:g}: unsupported bus type {code}")
        buses.append(Bus(_as_int(r[0], "bus id"), BUS_TYPES[code], r[2], r[3], r[12], r[11]))

    if len(cost_rows) != len(gen_rows):
        raise CaseSemanticError(
            f"gencost has {len(cost_rows)} rows for {len(gen_rows)} generators"
        )
    generators = []
    for r, c in zip(gen_rows, cost_rows):
        if r[7] <= 0:
            continue
        generators.append(
            Generator(_as_int(r[0], "generator bus"), r[9], r[8], r[4], r[3], _poly_cost(c))
        )

    branches = []
    for r in branch_rows:
        if len(r) > 10 and r[10] <= 0:
            continue
        branches.append(
            Branch(_as_int(r[0], "branch endpoint"), _as_int(r[1], "branch endpoint"), r[2], r[3], r[4], r[5])
        )
    case = CaseData(name, base_mva, tuple(buses), tuple(branches), tuple(generators))
    validate_case(case)
    return case


def _poly_cost(row: Sequence[float]) -> Tuple[float, float, float]:
    model = _as_int(row[0], "gencost model")
    if model != 2:
        raise CaseSemanticError(f"gencost model {model} unsupported; only polynomial (2) is accepted")
    n = _as_int(row[3], "gencost coefficient count")
    if not 1 <= n <= 3:
        raise CaseSemanticError(f"gencost with {n} coefficients unsupported (at most 3)")
    if len(row) < 4 + n:
        raise CaseSemanticError("gencost row shorter than its coefficient count")
    coeffs = [0.0] * (3 - n) + list(row[4:4 + n])
    return (coeffs[0], coeffs[1], coeffs[2])


def validate_case(case: CaseData) -> None:
    """Raise :class:`CaseSemanticError` if any structural invariant fails."""
    if not case.base_mva > 0:
        raise CaseSemanticError(f"baseMVA must be positive, got {case.base_mva}")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise CaseSemanticError("duplicate bus ids")
    refs = [b.id for b in case.buses if b.type == "ref"]
    if len(refs) != 1:
        raise CaseSemanticError(f"expected exactly one reference bus, found {len(refs)}")
    known = set(ids)
    for b in case.buses:
        if b.v_min > b.v_max:
            raise CaseSemanticError(f"bus {b.id}: Vmin > Vmax")
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                raise CaseSemanticError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
    for g in case.generators:
        if g.bus not in known:
            raise CaseSemanticError(f"generator at unknown bus {g.bus}")
        if g.p_min > g.p_max:
            raise CaseSemanticError(f"generator at bus {g.bus}: Pmin > Pmax")
        if g.q_min > g.q_max:
            raise CaseSemanticError(f"generator at bus {g.bus}: Qmin > Qmax")


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def serialize_matpower(case: CaseData) -> str:
    """Write ``case`` in the accepted subset; ``parse_matpower`` inverts it exactly."""
    out = io.StringIO()
    w = out.write
    w(f"function mpc = {case.name}\n")
    w("mpc.version = '2';\n")
    w(f"mpc.baseMVA = {_fmt(case.base_mva)};\n\n")
    w("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n")
    w("mpc.bus = [\n")
    for b in case.buses:
        cols = [b.id, _BUS_CODES[b.type], b.p_demand, b.q_demand, 0, 0, 1, 1, 0, 0, 1, b.v_max, b.v_min]
        w("\t" + "\t".join(_fmt(c) for c in cols) + ";\n")
    w("];\n\n%% generator data\n")
    w("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n")
    w("mpc.gen = [\n")
    for g in case.generators:
        cols = [g.bus, 0, 0, g.q_max, g.q_min, 1, case.base_mva, 1, g.p_max, g.p_min]
        w("\t" + "\t".join(_fmt(c) for c in cols) + ";\n")
    w("];\n\n%% branch data\n")
    w("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n")
    w("mpc.branch = [\n")
    for br in case.branches:
        cols = [br.from_bus, br.to_bus, br.resistance, br.reactance, br.susceptance,
                br.rating, 0, 0, 0, 0, 1, -360, 360]
        w("\t" + "\t".join(_fmt(c) for c in cols) + ";\n")
    w("];\n\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n")
    w("mpc.gencost = [\n")
    for g in case.generators:
        cols = [2, 0, 0, 3, *g.cost]
        w("\t" + "\t".join(_fmt(c) for c in cols) + ";\n")
    w("];\n")
    return out.getvalue()


def load_case_file(path) -> CaseData:
    path = Path(path)
    return parse_matpower(path.read_text(), name=None)


def builtin_case(name: str) -> CaseData:
    """Bundled case by name: case3, case5, case118 or case300."""
    if name not in BUILTIN_CASES:
        raise UnknownCaseError(f"unknown case {name!r}; choose from {', '.join(BUILTIN_CASES)}")
    text = resources.files("qopf.data").joinpath(f"{name}.m").read_text()
    return parse_matpower(text, name=name)


# --------------------------------------------------------------------------
# run reports
# --------------------------------------------------------------------------

CSV_COLUMNS = ("k", "objective", "mu", "kappa", "inner_iters", "inner_cost")


@dataclass
class IterationRecord:
    k: int
    objective: float
    mu: float
    kappa: float
    residual: float = 0.0
    step: float = 1.0
    mu_frozen: bool = False
    inner_iters: int = 0
    inner_cost: Optional[float] = None
    inner_trace: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "objective": self.objective,
            "mu": self.mu,
            # JSON has no NaN/inf; an unrecorded kappa is stored as null
            "kappa": self.kappa if math.isfinite(self.kappa) else None,
            "residual": self.residual,
            "step": self.step,
            "mu_frozen": self.mu_frozen,
            "inner": {"iters": self.inner_iters, "final_cost": self.inner_cost, "trace": list(self.inner_trace)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        inner = d.get("inner", {})
        return cls(
            k=d["k"],
            objective=d["objective"],
            mu=d["mu"],
            kappa=float("nan") if d["kappa"] is None else d["kappa"],
            residual=d.get("residual", 0.0),
            step=d.get("step", 1.0),
            mu_frozen=d.get("mu_frozen", False),
            inner_iters=inner.get("iters", 0),
            inner_cost=inner.get("final_cost"),
            inner_trace=list(inner.get("trace", [])),
        )


@dataclass
class RunReport:
    case: str
    formulation: str
    backend: str
    seed: Optional[int] = None
    iterations: List[IterationRecord] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)
    converged: bool = False
    message: str = ""
    final_objective: Optional[float] = None

    @property
    def objective_trace(self) -> List[float]:
        return [it.objective for it in self.iterations]

    @property
    def mu_trace(self) -> List[float]:
        return [it.mu for it in self.iterations]

    @property
    def kappa_trace(self) -> List[float]:
        return [it.kappa for it in self.iterations]

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "formulation": self.formulation,
            "backend": self.backend,
            "seed": self.seed,
            "converged": self.converged,
            "message": self.message,
            "final_objective": self.final_objective,
            "iterations": [it.to_dict() for it in self.iterations],
            "timing": dict(self.timing),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            case=d["case"],
            formulation=d["formulation"],
            backend=d["backend"],
            seed=d.get("seed"),
            iterations=[IterationRecord.from_dict(it) for it in d.get("iterations", [])],
            timing=dict(d.get("timing", {})),
            converged=d.get("converged", False),
            message=d.get("message", ""),
            final_objective=d.get("final_objective"),
        )


def report_to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def report_to_csv(report: RunReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for it in report.iterations:
        writer.writerow([
            it.k,
            repr(float(it.objective)),
            repr(float(it.mu)),
            repr(float(it.kappa)),
            it.inner_iters,
            "" if it.inner_cost is None else repr(float(it.inner_cost)),
        ])
    return out.getvalue()


def write_report(report: RunReport, fmt: str, sink) -> None:
    """Write ``report`` as ``json`` or ``csv`` to the path ``sink``."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValueError(f"unsupported report format {fmt!r}")
    Path(sink).write_text(text)


def read_report(source) -> RunReport:
    """Read a JSON report written by :func:`write_report`."""
    return RunReport.from_dict(json.loads(Path(source).read_text()))
