"""Search-space expressions: parsing, validation and prior sampling.

A search space is a small program made of named statements::

    a = normal(0, 1)
    b = choice(0, log(uniform(2, 10)), a)

Each statement becomes a root of an expression DAG.  Stochastic nodes
(``normal``, ``lognormal``, ``uniform``, ``randint``, ``choice``) carry a
label that identifies the hyperparameter across configurations: the top
stochastic node of a statement takes the statement name, and the top
stochastic node of option ``i`` of a choice labelled ``L`` is labelled
``L.i.<kind>`` (``b.1.uniform`` above).  Deterministic wrappers
(``log``, ``exp``, ``neg``) are transparent to labelling.

A statement may be made conditional on the selected option of an earlier
choice statement::

    depth = choice(0, 1, 2)
    size = randint(2, 6) if depth in {1, 2}

Guarded statements, and every label inside them, are inactive whenever the
guard does not hold.  Identifiers refer to earlier statements and share one
sample per configuration.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "STOCHASTIC_KINDS",
    "Assignment",
    "Diagnostic",
    "EvaluationError",
    "ExprGraph",
    "ExprNode",
    "Guard",
    "SpaceError",
    "SpaceSyntaxError",
    "active_labels",
    "evaluate",
    "format_space",
    "parse_space",
    "sample_prior",
    "validate_graph",
]

STOCHASTIC_KINDS = frozenset({"normal", "lognormal", "uniform", "randint", "choice"})
FUNCTIONS = {"log": math.log, "exp": math.exp, "neg": lambda x: -x}
_ARITY = {"normal": 2, "lognormal": 2, "uniform": 2, "randint": 2}


class SpaceError(ValueError):
    """Raised for malformed search spaces or unusable assignments."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class SpaceSyntaxError(SpaceError):
    def __init__(self, message, pos, text):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")
        self.pos = pos
        self.line = line
        self.column = col


class EvaluationError(SpaceError):
    """A deterministic function was applied outside its domain."""


@dataclass(frozen=True)
class ExprNode:
    """One node of the expression DAG.

    ``params`` holds numeric arguments (distribution parameters, the constant
    value, or the function name for ``func`` nodes); ``children`` holds node
    ids (choice options, the function argument, or the reference target).
    """

    kind: str
    params: tuple = ()
    children: tuple[int, ...] = ()
    label: str | None = None

    @property
    def stochastic(self) -> bool:
        return self.kind in STOCHASTIC_KINDS


@dataclass(frozen=True)
class Guard:
    root: str
    options: frozenset[int]


@dataclass(frozen=True)
class ExprGraph:
    nodes: tuple[ExprNode, ...]
    roots: Mapping[str, int]
    guards: Mapping[str, Guard] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "roots", MappingProxyType(dict(self.roots)))
        object.__setattr__(self, "guards", MappingProxyType(dict(self.guards)))

    @property
    def labels(self) -> dict[str, int]:
        """Stochastic label -> node id, in node order."""
        return {n.label: i for i, n in enumerate(self.nodes) if n.stochastic and n.label}

    def node_for(self, label: str) -> ExprNode:
        return self.nodes[self.labels[label]]

    def __eq__(self, other):
        if not isinstance(other, ExprGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and list(self.roots.items()) == list(other.roots.items())
            and dict(self.guards) == dict(other.guards)
        )

    __hash__ = None


@dataclass(frozen=True)
class Assignment:
    """Sampled hyperparameter values plus the resolved statement values."""

    values: Mapping[str, float | int]
    resolved: Mapping[str, float | int]

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))
        object.__setattr__(self, "resolved", MappingProxyType(dict(self.resolved)))

    def to_json(self) -> str:
        return json.dumps(
            {"values": dict(self.values), "resolved": dict(self.resolved)},
            sort_keys=True,
        )

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return dict(self.values) == dict(other.values) and dict(self.resolved) == dict(
            other.resolved
        )

    __hash__ = None


@dataclass(frozen=True)
class Diagnostic:
    code: str
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message} [{self.code}]"


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<sep>[\n;])
  | (?P<num>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),={}])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    depth = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpaceSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        value = m.group()
        if kind == "punct":
            if value in "({":
                depth += 1
            elif value in ")}":
                depth -= 1
        if kind == "ws" or (kind == "sep" and depth > 0):
            pass
        else:
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.nodes: list[ExprNode] = []
        self.roots: dict[str, int] = {}
        self.guards: dict[str, Guard] = {}

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise SpaceSyntaxError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.next()
        if tok[1] != value:
            self.fail(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)
        return tok

    def add(self, node):
        self.nodes.append(node)
        return len(self.nodes) - 1

    def number(self, integer=False):
        tok = self.next()
        if tok[0] != "num":
            self.fail("expected a number", tok)
        if integer:
            if not re.fullmatch(r"[+-]?\d+", tok[1]):
                self.fail("expected an integer", tok)
            return int(tok[1])
        return float(tok[1])

    def parse(self):
        while self.peek()[0] != "eof":
            if self.peek()[0] == "sep":
                self.next()
                continue
            self.statement()
        return ExprGraph(tuple(self.nodes), self.roots, self.guards)

    def statement(self):
        tok = self.next()
        if tok[0] != "ident":
            self.fail("expected a statement name", tok)
        name = tok[1]
        if name in FUNCTIONS or name in STOCHASTIC_KINDS or name in ("if", "in"):
            self.fail(f"{name!r} is reserved", tok)
        if name in self.roots:
            raise SpaceError(
                f"duplicate statement name {name!r} at offset {tok[2]}",
                [Diagnostic("duplicate-root", name, "statement defined twice")],
            )
        self.expect("=")
        nid = self.expr()
        if self.peek()[1] == "if":
            self.next()
            gtok = self.next()
            if gtok[0] != "ident" or gtok[1] not in self.roots:
                raise SpaceError(
                    f"undefined guard {gtok[1]!r} at offset {gtok[2]}",
                    [Diagnostic("undefined-reference", name, f"guard {gtok[1]!r}")],
                )
            self.expect("in")
            self.expect("{")
            opts = [self.number(integer=True)]
            while self.peek()[1] == ",":
                self.next()
                opts.append(self.number(integer=True))
            self.expect("}")
            self.guards[name] = Guard(gtok[1], frozenset(opts))
        end = self.peek()
        if end[0] not in ("sep", "eof"):
            self.fail("expected end of statement", end)
        self.roots[name] = nid

    def expr(self):
        tok = self.next()
        kind, value = tok[0], tok[1]
        if kind == "num":
            text = value
            if re.fullmatch(r"[+-]?\d+", text):
                return self.add(ExprNode("constant", (int(text),)))
            return self.add(ExprNode("constant", (float(text),)))
        if kind != "ident":
            self.fail("expected an expression", tok)
        if self.peek()[1] != "(":
            if value not in self.roots:
                raise SpaceError(
                    f"undefined reference {value!r} at offset {tok[2]}",
                    [Diagnostic("undefined-reference", value, "not defined earlier")],
                )
            return self.add(ExprNode("ref", (), (self.roots[value],)))
        self.expect("(")
        if value in _ARITY:
            integer = value == "randint"
            a = self.number(integer)
            self.expect(",")
            b = self.number(integer)
            self.expect(")")
            return self.add(ExprNode(value, (a, b)))
        if value == "choice":
            options = [self.expr()]
            while self.peek()[1] == ",":
                self.next()
                options.append(self.expr())
            self.expect(")")
            return self.add(ExprNode("choice", (), tuple(options)))
        if value in FUNCTIONS:
            arg = self.expr()
            self.expect(")")
            return self.add(ExprNode("func", (value,), (arg,)))
        self.fail(f"unknown function {value!r}", tok)


def _top(nodes, nid):
    """Follow func wrappers down to the first non-func node."""
    seen = set()
    while nodes[nid].kind == "func" and nid not in seen:
        seen.add(nid)
        nid = nodes[nid].children[0]
    return nid


def _assign_labels(nodes, roots):
    nodes = list(nodes)

    def assign(nid, label):
        top = _top(nodes, nid)
        node = nodes[top]
        if not node.stochastic:
            return
        nodes[top] = ExprNode(node.kind, node.params, node.children, label)
        if node.kind == "choice":
            for i, opt in enumerate(node.children):
                sub = nodes[_top(nodes, opt)]
                if sub.stochastic:
                    assign(opt, f"{label}.{i}.{sub.kind}")

    for name, nid in roots.items():
        assign(nid, name)
    return tuple(nodes)


def parse_space(text: str, validate: bool = True) -> ExprGraph:
    """Parse DSL source into a validated, labelled :class:`ExprGraph`.

    With ``validate=False`` only syntax and name resolution are checked;
    run :func:`validate_graph` to list the remaining problems.

    Raises
    ------
    SpaceSyntaxError
        Malformed text; carries ``line`` and ``column``.
    SpaceError
        Undefined references, duplicate statement names, or any invariant
        violation reported by :func:`validate_graph` (e.g. ``uniform(3, 2)``).
    """
    raw = _Parser(text).parse()
    graph = ExprGraph(_assign_labels(raw.nodes, raw.roots), raw.roots, raw.guards)
    problems = validate_graph(graph) if validate else []
    if problems:
        raise SpaceError("; ".join(map(str, problems)), problems)
    return graph


def _fmt_num(x):
    return repr(x)


def format_space(graph: ExprGraph) -> str:
    """Render a graph back into DSL text that reparses to an equal graph."""
    owner = {nid: name for name, nid in graph.roots.items()}

    def fmt(nid, top=False):
        node = graph.nodes[nid]
        if not top and nid in owner:
            return owner[nid]
        if node.kind == "constant":
            return _fmt_num(node.params[0])
        if node.kind == "ref":
            target = node.children[0]
            if target not in owner:
                raise SpaceError(f"reference to unnamed node {target}")
            return owner[target]
        if node.kind == "func":
            return f"{node.params[0]}({fmt(node.children[0])})"
        if node.kind == "choice":
            return "choice(" + ", ".join(fmt(c) for c in node.children) + ")"
        return f"{node.kind}({_fmt_num(node.params[0])}, {_fmt_num(node.params[1])})"

    lines = []
    for name, nid in graph.roots.items():
        line = f"{name} = {fmt(nid, top=True)}"
        guard = graph.guards.get(name)
        if guard is not None:
            opts = ", ".join(str(o) for o in sorted(guard.options))
            line += f" if {guard.root} in {{{opts}}}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# -- validation ------------------------------------------------------------


def _where(node, nid):
    return node.label if node.label else f"node {nid}"


def _scope(graph, name):
    """Chain of guards that must hold for statement ``name`` to be active."""
    chain = []
    while name in graph.guards and len(chain) <= len(graph.roots):
        guard = graph.guards[name]
        chain.append(guard)
        name = guard.root
    return chain


def validate_graph(graph: ExprGraph) -> list[Diagnostic]:
    """Check every structural invariant; returns an empty list when valid."""
    out: list[Diagnostic] = []
    nodes = graph.nodes
    n = len(nodes)

    for nid, node in enumerate(nodes):
        where = _where(node, nid)
        bad_child = [c for c in node.children if not (0 <= c < n)]
        if bad_child:
            out.append(Diagnostic("dangling", where, f"children {bad_child} do not exist"))
        k = node.kind
        if k in _ARITY:
            if len(node.params) != 2 or not all(math.isfinite(p) for p in node.params):
                out.append(Diagnostic("arity", where, f"{k} needs two finite parameters"))
                continue
            lo, hi = node.params
            if k in ("normal", "lognormal") and not hi > 0:
                out.append(Diagnostic("bounds", where, f"{k} scale must be > 0, got {hi}"))
            if k == "uniform" and not lo < hi:
                out.append(Diagnostic("bounds", where, f"uniform needs lo < hi, got ({lo}, {hi})"))
            if k == "randint":
                if not (float(lo).is_integer() and float(hi).is_integer()):
                    out.append(Diagnostic("bounds", where, "randint bounds must be integers"))
                elif not lo <= hi:
                    out.append(Diagnostic("bounds", where, f"randint needs lo <= hi, got ({lo}, {hi})"))
        elif k == "choice":
            if len(node.children) < 1:
                out.append(Diagnostic("arity", where, "choice needs at least one option"))
        elif k == "func":
            if len(node.children) != 1 or len(node.params) != 1 or node.params[0] not in FUNCTIONS:
                out.append(Diagnostic("arity", where, f"bad function node {node.params!r}"))
        elif k == "ref":
            if len(node.children) != 1:
                out.append(Diagnostic("arity", where, "reference needs exactly one target"))
        elif k == "constant":
            if len(node.params) != 1 or not math.isfinite(node.params[0]):
                out.append(Diagnostic("arity", where, "constant needs one finite value"))
        else:
            out.append(Diagnostic("kind", where, f"unknown node kind {k!r}"))
        if node.stochastic and not node.label:
            out.append(Diagnostic("label", where, "stochastic node without a label"))

    labels = [nd.label for nd in nodes if nd.stochastic and nd.label]
    for dup in sorted({lb for lb in labels if labels.count(lb) > 1}):
        out.append(Diagnostic("label", dup, "label used by more than one node"))

    for name, nid in graph.roots.items():
        if not (0 <= nid < n):
            out.append(Diagnostic("dangling", name, f"root points at missing node {nid}"))
    if any(d.code == "dangling" for d in out):
        return out

    # cycles: iterative DFS with colouring
    state = [0] * n
    for start in range(n):
        if state[start]:
            continue
        stack = [(start, iter(nodes[start].children))]
        state[start] = 1
        while stack:
            nid, it = stack[-1]
            child = next(it, None)
            if child is None:
                state[nid] = 2
                stack.pop()
            elif state[child] == 1:
                out.append(Diagnostic("cycle", _where(nodes[child], child), "node is part of a cycle"))
                state[child] = 2
            elif state[child] == 0:
                state[child] = 1
                stack.append((child, iter(nodes[child].children)))
    if any(d.code == "cycle" for d in out):
        return out

    reached = set()
    stack = list(graph.roots.values())
    while stack:
        nid = stack.pop()
        if nid in reached:
            continue
        reached.add(nid)
        stack.extend(nodes[nid].children)
    for nid in range(n):
        if nid not in reached:
            out.append(Diagnostic("unreachable", _where(nodes[nid], nid), "not reachable from any root"))

    order = list(graph.roots)
    for name, guard in graph.guards.items():
        if name not in graph.roots:
            out.append(Diagnostic("guard", name, "guard on unknown statement"))
            continue
        if guard.root not in graph.roots or order.index(guard.root) >= order.index(name):
            out.append(Diagnostic("guard", name, f"guard {guard.root!r} must be an earlier statement"))
            continue
        target = nodes[graph.roots[guard.root]]
        if target.kind != "choice":
            out.append(Diagnostic("guard", name, f"guard {guard.root!r} is not a choice statement"))
        elif not guard.options or not all(0 <= o < len(target.children) for o in guard.options):
            out.append(Diagnostic("guard", name, f"guard options {sorted(guard.options)} out of range"))

    # references into guarded statements must be at least as guarded
    owner = {nid: name for name, nid in graph.roots.items()}
    for name, nid in graph.roots.items():
        mine = _scope(graph, name)
        stack = [nid]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            node = nodes[cur]
            if node.kind == "ref":
                target = owner.get(node.children[0])
                if target is not None:
                    for g in _scope(graph, target):
                        if not any(h.root == g.root and h.options <= g.options for h in mine):
                            out.append(
                                Diagnostic("scope", name, f"refers to {target!r}, which may be inactive")
                            )
                            break
                continue
            stack.extend(node.children)
    return out


# -- evaluation ------------------------------------------------------------


def _guard_holds(graph, name, values, active):
    guard = graph.guards.get(name)
    if guard is None:
        return True
    if guard.root not in active:
        return False
    label = graph.nodes[graph.roots[guard.root]].label
    return values[label] in guard.options


def _walk(graph: ExprGraph, draw: Callable[[ExprNode], float | int]) -> Assignment:
    nodes = graph.nodes
    memo: dict[int, float | int] = {}
    values: dict[str, float | int] = {}

    def ev(nid):
        if nid in memo:
            return memo[nid]
        node = nodes[nid]
        k = node.kind
        if k == "constant":
            v = node.params[0]
        elif k == "ref":
            v = ev(node.children[0])
        elif k == "func":
            x = ev(node.children[0])
            op = node.params[0]
            if op == "log" and not x > 0:
                raise EvaluationError(f"log of non-positive value {x!r}")
            try:
                v = FUNCTIONS[op](x)
            except OverflowError as exc:
                raise EvaluationError(f"{op}({x!r}) overflowed") from exc
        elif k == "choice":
            idx = draw(node)
            values[node.label] = idx
            v = ev(node.children[idx])
        else:
            v = draw(node)
            values[node.label] = v
        memo[nid] = v
        return v

    resolved: dict[str, float | int] = {}
    for name, nid in graph.roots.items():
        if _guard_holds(graph, name, values, resolved):
            resolved[name] = ev(nid)
    return Assignment(values, resolved)


def _prior_draw(rng):
    def draw(node):
        a = node.params
        k = node.kind
        if k == "normal":
            return float(rng.normal(a[0], a[1]))
        if k == "lognormal":
            return float(np.exp(rng.normal(a[0], a[1])))
        if k == "uniform":
            return float(rng.uniform(a[0], a[1]))
        if k == "randint":
            return int(rng.integers(a[0], a[1] + 1))
        return int(rng.integers(len(node.children)))

    return draw


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_prior(graph: ExprGraph, rng) -> Assignment:
    """Draw one configuration from the prior.

    ``rng`` is a :class:`numpy.random.Generator` or anything accepted by
    :func:`numpy.random.default_rng`.  Only stochastic nodes on active paths
    are sampled, in statement order.
    """
    return _walk(graph, _prior_draw(as_generator(rng)))


def evaluate(graph: ExprGraph, values: Mapping[str, float | int]) -> Assignment:
    """Resolve statement values from given hyperparameter values.

    Labels in ``values`` that are inactive under its own choices are dropped.
    """

    def draw(node):
        try:
            v = values[node.label]
        except KeyError:
            raise SpaceError(f"no value for active label {node.label!r}") from None
        if node.kind in ("choice", "randint"):
            return int(v)
        return float(v)

    return _walk(graph, draw)


def active_labels(graph: ExprGraph, choice_values: Mapping[str, int]) -> set[str]:
    """Labels reachable once every choice is collapsed to its selection."""
    nodes = graph.nodes
    active: set[str] = set()
    seen: set[int] = set()

    def visit(nid):
        if nid in seen:
            return
        seen.add(nid)
        node = nodes[nid]
        if node.stochastic:
            active.add(node.label)
        if node.kind == "choice":
            try:
                idx = int(choice_values[node.label])
            except KeyError:
                raise SpaceError(f"no selection for choice {node.label!r}") from None
            visit(node.children[idx])
        else:
            for c in node.children:
                visit(c)

    on = set()
    for name, nid in graph.roots.items():
        guard = graph.guards.get(name)
        if guard is not None:
            if guard.root not in on:
                continue
            label = nodes[graph.roots[guard.root]].label
            if int(choice_values[label]) not in guard.options:
                continue
        on.add(name)
        visit(nid)
    return active
