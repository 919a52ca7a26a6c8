"""Bounded fan-in boolean circuits and their S-expression form.

A :class:`Circuit` is a DAG of gates stored in topological order (children
always precede parents).  Depth counts only AND/OR gates; NOT, INPUT and
CONST contribute nothing.

Input names carry ownership: ``x<k>`` is publisher metadata bit k and
``b<k>`` is a subscriber-controlled bit.

DSL grammar::

    expr    := atom | "(" "not" expr ")" | "(" ("and"|"or") expr expr ")"
             | "(" "let" "(" binding* ")" expr ")"
    binding := "(" name expr ")"          ; bindings are sequential (let*)
    atom    := x<k> | b<k> | 0 | 1 | name
"""
from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Sequence, Union

import numpy as np

INPUT, CONST, NOT, AND, OR = "input", "const", "not", "and", "or"

PUBLISHER, SUBSCRIBER = "publisher", "subscriber"


class CircuitError(ValueError):
    pass


class ParseError(CircuitError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class ArityError(ParseError):
    pass


class UnknownSymbol(ParseError):
    pass


class MissingInput(CircuitError):
    pass


@dataclass(frozen=True)
class Gate:
    op: str
    args: tuple[int, ...] = ()
    name: Optional[str] = None
    value: Optional[int] = None


def owner_of(name: str) -> str:
    if name.startswith("x"):
        return PUBLISHER
    if name.startswith("b"):
        return SUBSCRIBER
    raise CircuitError(f"input {name!r} has no owner prefix (x or b)")


def input_index(name: str) -> int:
    return int(name[1:])


class Circuit:
    """Immutable gate DAG with a single output."""

    def __init__(self, gates: Sequence[Gate], output: int, inputs: Sequence[str]):
        self.gates: tuple[Gate, ...] = tuple(gates)
        self.output = output
        self.inputs: tuple[str, ...] = tuple(inputs)
        self._input_pos = {name: i for i, name in enumerate(self.inputs)}
        for i, gate in enumerate(self.gates):
            if any(a >= i for a in gate.args):
                raise CircuitError("gates must be in topological order")
            expected = {INPUT: 0, CONST: 0, NOT: 1, AND: 2, OR: 2}[gate.op]
            if len(gate.args) != expected:
                raise CircuitError(f"{gate.op} gate needs {expected} operands")
            if gate.op == INPUT and gate.name not in self._input_pos:
                raise CircuitError(f"input {gate.name!r} missing from input order")
        self._depths = self._compute_depths()

    def _compute_depths(self) -> list[int]:
        depths = []
        for gate in self.gates:
            if gate.op in (INPUT, CONST):
                depths.append(0)
            elif gate.op == NOT:
                depths.append(depths[gate.args[0]])
            else:
                depths.append(1 + max(depths[a] for a in gate.args))
        return depths

    @property
    def depth(self) -> int:
        return self._depths[self.output]

    def gate_depth(self, node: int) -> int:
        return self._depths[node]

    @property
    def owners(self) -> tuple[str, ...]:
        return tuple(owner_of(name) for name in self.inputs)

    def input_position(self, name: str) -> int:
        return self._input_pos[name]

    def __len__(self) -> int:
        return len(self.gates)

    def __repr__(self) -> str:
        return f"Circuit(gates={len(self.gates)}, inputs={len(self.inputs)}, depth={self.depth})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return to_sexp(self) == to_sexp(other) and self.inputs == other.inputs


class CircuitBuilder:
    """Hash-consing gate factory; structurally equal gates are shared."""

    def __init__(self) -> None:
        self.gates: list[Gate] = []
        self._index: dict[Gate, int] = {}
        self.inputs: list[str] = []

    def _add(self, gate: Gate) -> int:
        found = self._index.get(gate)
        if found is not None:
            return found
        self.gates.append(gate)
        self._index[gate] = len(self.gates) - 1
        return len(self.gates) - 1

    def input(self, name: str) -> int:
        owner_of(name)
        if name not in self.inputs:
            self.inputs.append(name)
        return self._add(Gate(INPUT, name=name))

    def const(self, value: int) -> int:
        return self._add(Gate(CONST, value=int(bool(value))))

    def not_(self, a: int) -> int:
        gate = self.gates[a]
        if gate.op == NOT:
            return gate.args[0]
        return self._add(Gate(NOT, (a,)))

    def and_(self, a: int, b: int) -> int:
        return self._add(Gate(AND, (a, b)))

    def or_(self, a: int, b: int) -> int:
        return self._add(Gate(OR, (a, b)))

    def reduce(self, op: str, nodes: Sequence[int]) -> int:
        """Balanced tree of ``op`` over ``nodes`` (depth ceil(lg len))."""
        if not nodes:
            raise CircuitError("cannot reduce an empty list")
        combine = self.and_ if op == AND else self.or_
        layer = list(nodes)
        while len(layer) > 1:
            nxt = [combine(layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
            if len(layer) % 2:
                nxt.append(layer[-1])
            layer = nxt
        return layer[0]

    def build(self, output: int, inputs: Optional[Sequence[str]] = None) -> Circuit:
        keep = _reachable(self.gates, output)
        remap: dict[int, int] = {}
        gates = []
        for i, gate in enumerate(self.gates):
            if i in keep:
                remap[i] = len(gates)
                gates.append(Gate(gate.op, tuple(remap[a] for a in gate.args), gate.name, gate.value))
        order = list(inputs) if inputs is not None else list(self.inputs)
        return Circuit(gates, remap[output], order)


def _reachable(gates: Sequence[Gate], output: int) -> set[int]:
    seen = {output}
    stack = [output]
    while stack:
        for a in gates[stack.pop()].args:
            if a not in seen:
                seen.add(a)
                stack.append(a)
    return seen


# --------------------------------------------------------------------- eval

Assignment = Union[Mapping[str, int], Sequence[int]]


def _assignment_vector(c: Circuit, a: Assignment) -> list[int]:
    if isinstance(a, Mapping):
        try:
            return [int(bool(a[name])) for name in c.inputs]
        except KeyError as exc:
            raise MissingInput(f"assignment lacks input {exc.args[0]!r}") from None
    if len(a) < len(c.inputs):
        raise MissingInput(f"assignment has {len(a)} values for {len(c.inputs)} inputs")
    return [int(bool(v)) for v in a[: len(c.inputs)]]


def evaluate(c: Circuit, a: Assignment) -> int:
    x = _assignment_vector(c, a)
    vals: list[int] = []
    for gate in c.gates:
        if gate.op == INPUT:
            vals.append(x[c.input_position(gate.name)])
        elif gate.op == CONST:
            vals.append(gate.value)
        elif gate.op == NOT:
            vals.append(1 - vals[gate.args[0]])
        elif gate.op == AND:
            vals.append(vals[gate.args[0]] & vals[gate.args[1]])
        else:
            vals.append(vals[gate.args[0]] | vals[gate.args[1]])
    return vals[c.output]


def evaluate_batch(c: Circuit, xs: np.ndarray) -> np.ndarray:
    """Evaluate on every row of a (m, len(inputs)) 0/1 matrix at once."""
    xs = np.asarray(xs, dtype=bool)
    if xs.ndim != 2 or xs.shape[1] < len(c.inputs):
        raise MissingInput(f"need a 2-D array with {len(c.inputs)} columns")
    vals: list[np.ndarray] = []
    for gate in c.gates:
        if gate.op == INPUT:
            vals.append(xs[:, c.input_position(gate.name)])
        elif gate.op == CONST:
            vals.append(np.full(xs.shape[0], bool(gate.value)))
        elif gate.op == NOT:
            vals.append(~vals[gate.args[0]])
        elif gate.op == AND:
            vals.append(vals[gate.args[0]] & vals[gate.args[1]])
        else:
            vals.append(vals[gate.args[0]] | vals[gate.args[1]])
    return vals[c.output].astype(np.uint8)


def all_assignments(n: int) -> np.ndarray:
    """All 2^n bit vectors as rows; column i is bit i, row r is the binary of r."""
    rows = np.arange(1 << n, dtype=np.int64)[:, None]
    return ((rows >> np.arange(n)) & 1).astype(np.uint8)


# ------------------------------------------------------------------- parser

_TOKEN = re.compile(r";[^\n]*|\(|\)|[^\s();]+")
_INPUT_ATOM = re.compile(r"[xb]\d+")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
    toks = []
    for m in _TOKEN.finditer(text):
        if m.group().startswith(";"):
            continue
        line = bisect.bisect_right(line_starts, m.start())
        toks.append(_Tok(m.group(), line, m.start() - line_starts[line - 1] + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.b = CircuitBuilder()
        self.scopes: list[dict[str, int]] = []

    def peek(self) -> _Tok:
        if self.i >= len(self.toks):
            last = self.toks[-1] if self.toks else _Tok("", 1, 0)
            raise ParseError("unexpected end of input", last.line, last.col + len(last.text))
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def lookup(self, tok: _Tok) -> int:
        for scope in reversed(self.scopes):
            if tok.text in scope:
                return scope[tok.text]
        if _INPUT_ATOM.fullmatch(tok.text):
            return self.b.input(tok.text)
        if tok.text in ("0", "1"):
            return self.b.const(int(tok.text))
        raise UnknownSymbol(f"unknown symbol {tok.text!r}", tok.line, tok.col)

    def expr(self) -> int:
        tok = self.take()
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        if tok.text != "(":
            return self.lookup(tok)
        head = self.take()
        if head.text == "let":
            return self.let_form(head)
        if head.text not in ("not", "and", "or"):
            if head.text in ("(", ")"):
                raise ParseError("expected an operator", head.line, head.col)
            raise UnknownSymbol(f"unknown operator {head.text!r}", head.line, head.col)
        operands = []
        while self.peek().text != ")":
            operands.append(self.expr())
        self.take()
        arity = 1 if head.text == "not" else 2
        if len(operands) != arity:
            raise ArityError(
                f"{head.text} takes {arity} operand(s), got {len(operands)}", head.line, head.col
            )
        if head.text == "not":
            return self.b.not_(operands[0])
        if head.text == "and":
            return self.b.and_(*operands)
        return self.b.or_(*operands)

    def let_form(self, head: _Tok) -> int:
        self.expect("(")
        scope: dict[str, int] = {}
        self.scopes.append(scope)
        while self.peek().text != ")":
            self.expect("(")
            name = self.take()
            if not _NAME.fullmatch(name.text) or _INPUT_ATOM.fullmatch(name.text):
                raise ParseError(f"bad binding name {name.text!r}", name.line, name.col)
            scope[name.text] = self.expr()
            self.expect(")")
        self.take()
        body = self.expr()
        tok = self.take()
        if tok.text != ")":
            raise ArityError("let takes bindings and exactly one body", head.line, head.col)
        self.scopes.pop()
        return body

    def parse(self) -> Circuit:
        out = self.expr()
        if self.i != len(self.toks):
            tok = self.toks[self.i]
            raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
        return self.b.build(out)


def parse_sexp(text: str) -> Circuit:
    return _Parser(text).parse()


def load_circuit(path: str) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_sexp(fh.read())


def to_sexp(c: Circuit) -> str:
    """Canonical text: gates used more than once are let-bound as t0, t1, ..."""
    fanout = [0] * len(c.gates)
    for gate in c.gates:
        for a in gate.args:
            fanout[a] += 1
    shared = [
        i for i, g in enumerate(c.gates)
        if fanout[i] > 1 and g.op in (NOT, AND, OR) and i != c.output
    ]
    names = {node: f"t{j}" for j, node in enumerate(shared)}

    def render(node: int, top: bool = False) -> str:
        if node in names and not top:
            return names[node]
        gate = c.gates[node]
        if gate.op == INPUT:
            return gate.name
        if gate.op == CONST:
            return str(gate.value)
        return "(" + " ".join([gate.op] + [render(a) for a in gate.args]) + ")"

    body = render(c.output)
    if not shared:
        return body
    bindings = " ".join(f"({names[n]} {render(n, top=True)})" for n in shared)
    return f"(let ({bindings}) {body})"


def iter_gates(c: Circuit) -> Iterator[tuple[int, Gate]]:
    return enumerate(c.gates)
