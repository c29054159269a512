"""The constitution language: a small declarative DSL for mission rules.

A constitution states, in one program, (i) the star map supplying
probabilistic spatial relations, (ii) exclusive parameter groups chosen
at mission time, (iii) continuous background facts, (iv) propositional
rules over spatial relations and those facts, and (v) the objectives the
router must consider.

Grammar (statements end with '.', comments run from '#' to end of line,
identifiers match [a-z][a-z0-9_]*)::

    program    := statement+
    statement  := starmap | paramgrp | contfact | rule | objective
    starmap    := 'star_map' '(' STRING ')' '.'
    paramgrp   := 'parameter' '{' IDENT (',' IDENT)+ '}' '.'
    contfact   := IDENT '~' IDENT '(' NUMBER (',' NUMBER)* ')' '.'
    rule       := 'field'? IDENT 'if' body '.'
    objective  := ('field'|'path') 'objective' IDENT
                  ( 'if' body | '(' STRING ')' )? '.'
    body       := disj ;  disj := conj ('or' conj)* ;  conj := unary ('and' unary)*
    unary      := 'not' unary | primary
    primary    := '(' body ')' | comparison | relatom | IDENT
    relatom    := ('over'|'distance') '(' IDENT ')'
    comparison := cterm ('<'|'>'|'<='|'>=') NUMBER
    cterm      := 'distance' '(' IDENT ')' | 'altitude' | IDENT

Operator precedence is ``not`` over ``and`` over ``or``.  A bare
``distance(...)`` or ``altitude`` must be part of a comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

KEYWORDS = frozenset(
    {
        "star_map",
        "parameter",
        "field",
        "path",
        "objective",
        "if",
        "and",
        "or",
        "not",
        "over",
        "distance",
        "altitude",
    }
)

COMPARISON_OPS = ("<", ">", "<=", ">=")


class ConstitutionError(ValueError):
    """Syntax or structural error in a constitution source."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


# ----------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Over:
    tag: str


@dataclass(frozen=True)
class Distance:
    tag: str


@dataclass(frozen=True)
class Altitude:
    pass


CTerm = Union[Distance, Altitude, "FactTerm"]


@dataclass(frozen=True)
class FactTerm:
    name: str


@dataclass(frozen=True)
class Comparison:
    term: CTerm
    op: str
    literal: float


@dataclass(frozen=True)
class Not:
    operand: "BodyExpr"


@dataclass(frozen=True)
class And:
    left: "BodyExpr"
    right: "BodyExpr"


@dataclass(frozen=True)
class Or:
    left: "BodyExpr"
    right: "BodyExpr"


BodyExpr = Union[Atom, Over, Comparison, Not, And, Or]


@dataclass(frozen=True)
class ParameterGroup:
    options: tuple[str, ...]


@dataclass(frozen=True)
class ContinuousFact:
    name: str
    distribution: str
    params: tuple[float, ...]

    @property
    def mean(self) -> float:
        return self.params[0]

    @property
    def std(self) -> float:
        return self.params[1]


@dataclass(frozen=True)
class Rule:
    head: str
    is_field: bool
    body: BodyExpr


@dataclass(frozen=True)
class ObjectiveDecl:
    scope: str  # 'field' | 'path'
    name: str
    body: BodyExpr | None = None  # inline definition ('if' form)
    model_ref: str | None = None  # model-sourced ('(...)' form)

    @property
    def is_logic(self) -> bool:
        return self.model_ref is None


@dataclass(frozen=True)
class Constitution:
    star_map_ref: str | None
    parameter_groups: tuple[ParameterGroup, ...]
    continuous_facts: tuple[ContinuousFact, ...]
    rules: tuple[Rule, ...]
    objectives: tuple[ObjectiveDecl, ...]

    @property
    def rule_by_head(self) -> dict[str, Rule]:
        return {r.head: r for r in self.rules}

    @property
    def fact_by_name(self) -> dict[str, ContinuousFact]:
        return {f.name: f for f in self.continuous_facts}

    @property
    def options(self) -> frozenset[str]:
        return frozenset(o for g in self.parameter_groups for o in g.options)

    @property
    def logic_objectives(self) -> tuple[ObjectiveDecl, ...]:
        return tuple(o for o in self.objectives if o.is_logic)

    @property
    def model_objectives(self) -> tuple[ObjectiveDecl, ...]:
        return tuple(o for o in self.objectives if not o.is_logic)

    def defined_bodies(self) -> dict[str, BodyExpr]:
        """Every defined head (rules plus logic objectives with a body)."""
        out = {r.head: r.body for r in self.rules}
        for obj in self.objectives:
            if obj.is_logic and obj.body is not None:
                out[obj.name] = obj.body
        return out

    def relations(self) -> list[tuple[str, str]]:
        """All (kind, tag) relation atoms used anywhere, sorted."""
        found: set[tuple[str, str]] = set()

        def walk(expr):
            if isinstance(expr, Over):
                found.add(("over", expr.tag))
            elif isinstance(expr, Comparison) and isinstance(expr.term, Distance):
                found.add(("distance", expr.term.tag))
            elif isinstance(expr, Not):
                walk(expr.operand)
            elif isinstance(expr, (And, Or)):
                walk(expr.left)
                walk(expr.right)

        for body in self.defined_bodies().values():
            walk(body)
        return sorted(found)


# ----------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>\#[^\n]*)
    | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
    | (?P<ident>[a-z][a-z0-9_]*)
    | (?P<string>"[^"\n]*")
    | (?P<op><=|>=|<|>)
    | (?P<punct>[(){},.~])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'number' | 'ident' | 'keyword' | 'string' | 'op' | 'punct' | 'eof'
    value: str
    line: int
    column: int


def tokenize(text: str) -> Iterator[Token]:
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ConstitutionError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = match.lastgroup
        value = match.group()
        if kind not in ("ws", "comment"):
            token_kind = kind
            if kind == "ident" and value in KEYWORDS:
                token_kind = "keyword"
            yield Token(token_kind, value, line, match.start() - line_start + 1)
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = match.start() + value.rfind("\n") + 1
        pos = match.end()
    yield Token("eof", "", line, pos - line_start + 1)


# ----------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.current
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, expected: str) -> ConstitutionError:
        tok = self.current
        found = "end of input" if tok.kind == "eof" else repr(tok.value)
        return ConstitutionError(f"expected {expected}, found {found}", tok.line, tok.column)

    def expect(self, kind: str, value: str | None = None, expected: str | None = None) -> Token:
        tok = self.current
        if tok.kind != kind or (value is not None and tok.value != value):
            raise self.error(expected or (repr(value) if value else kind))
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.current
        if tok.kind != "ident":
            raise self.error(what)
        return self.advance().value

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.current
        return tok.kind == kind and (value is None or tok.value == value)

    def parse_number(self) -> float:
        tok = self.expect("number", expected="number")
        return float(tok.value)

    def parse_string(self) -> str:
        tok = self.expect("string", expected="string literal")
        return tok.value[1:-1]

    # -- statements ----------------------------------------------------

    def parse_program(self) -> Constitution:
        star_refs: list[tuple[str, Token]] = []
        groups: list[ParameterGroup] = []
        facts: list[ContinuousFact] = []
        rules: list[Rule] = []
        objectives: list[ObjectiveDecl] = []
        if self.at("eof"):
            raise self.error("at least one statement")
        while not self.at("eof"):
            tok = self.current
            if self.at("keyword", "star_map"):
                star_refs.append((self._parse_star_map(), tok))
                if len(star_refs) > 1:
                    raise ConstitutionError(
                        "star_map declared more than once", tok.line, tok.column
                    )
            elif self.at("keyword", "parameter"):
                groups.append(self._parse_parameter_group())
            elif self.at("keyword", "field") and self.peek().value == "objective":
                objectives.append(self._parse_objective())
            elif self.at("keyword", "field"):
                rules.append(self._parse_rule())
            elif self.at("keyword", "path"):
                objectives.append(self._parse_objective())
            elif self.at("ident"):
                if self.peek().value == "~":
                    facts.append(self._parse_continuous_fact())
                else:
                    rules.append(self._parse_rule())
            else:
                raise self.error("a statement")
        constitution = Constitution(
            star_refs[0][0] if star_refs else None,
            tuple(groups),
            tuple(facts),
            tuple(rules),
            tuple(objectives),
        )
        self._check_duplicates(constitution)
        return constitution

    def _check_duplicates(self, c: Constitution) -> None:
        heads: set[str] = set()
        for rule in c.rules:
            if rule.head in heads:
                raise ConstitutionError(f"duplicate definition of {rule.head!r}")
            heads.add(rule.head)
        names: set[str] = set()
        for obj in c.objectives:
            if obj.name in names:
                raise ConstitutionError(f"duplicate objective {obj.name!r}")
            names.add(obj.name)
            if obj.is_logic and obj.body is not None:
                if obj.name in heads:
                    raise ConstitutionError(f"duplicate definition of {obj.name!r}")
                heads.add(obj.name)
        fact_names: set[str] = set()
        for fact in c.continuous_facts:
            if fact.name in fact_names:
                raise ConstitutionError(f"duplicate continuous fact {fact.name!r}")
            fact_names.add(fact.name)
        for group in c.parameter_groups:
            if len(set(group.options)) != len(group.options):
                raise ConstitutionError(f"duplicate option within parameter group {group.options}")

    def _parse_star_map(self) -> str:
        self.expect("keyword", "star_map")
        self.expect("punct", "(")
        ref = self.parse_string()
        self.expect("punct", ")")
        self.expect("punct", ".", expected="'.' at end of statement")
        return ref

    def _parse_parameter_group(self) -> ParameterGroup:
        self.expect("keyword", "parameter")
        self.expect("punct", "{")
        options = [self.expect_ident("parameter option")]
        self.expect("punct", ",", expected="',' (a parameter group needs >= 2 options)")
        options.append(self.expect_ident("parameter option"))
        while self.at("punct", ","):
            self.advance()
            options.append(self.expect_ident("parameter option"))
        self.expect("punct", "}")
        self.expect("punct", ".", expected="'.' at end of statement")
        return ParameterGroup(tuple(options))

    def _parse_continuous_fact(self) -> ContinuousFact:
        name_tok = self.current
        name = self.expect_ident("continuous fact name")
        self.expect("punct", "~")
        dist = self.expect_ident("distribution name")
        if dist != "normal":
            raise ConstitutionError(
                f"unsupported distribution {dist!r}: only 'normal(mean, std)' is available",
                name_tok.line,
                name_tok.column,
            )
        self.expect("punct", "(")
        params = [self.parse_number()]
        while self.at("punct", ","):
            self.advance()
            params.append(self.parse_number())
        self.expect("punct", ")")
        self.expect("punct", ".", expected="'.' at end of statement")
        if len(params) != 2:
            raise ConstitutionError(
                f"normal(mean, std) takes 2 parameters, got {len(params)}",
                name_tok.line,
                name_tok.column,
            )
        if params[1] < 0:
            raise ConstitutionError(
                f"standard deviation must be >= 0, got {params[1]}",
                name_tok.line,
                name_tok.column,
            )
        return ContinuousFact(name, dist, tuple(params))

    def _parse_rule(self) -> Rule:
        is_field = False
        if self.at("keyword", "field"):
            self.advance()
            is_field = True
        head = self.expect_ident("rule head")
        self.expect("keyword", "if", expected="'if' or '~'")
        body = self._parse_body()
        self.expect("punct", ".", expected="'.' at end of statement")
        return Rule(head, is_field, body)

    def _parse_objective(self) -> ObjectiveDecl:
        scope_tok = self.advance()  # 'field' or 'path'
        scope = scope_tok.value
        self.expect("keyword", "objective")
        name = self.expect_ident("objective name")
        body: BodyExpr | None = None
        model_ref: str | None = None
        if self.at("keyword", "if"):
            if scope == "path":
                raise ConstitutionError(
                    "path objectives must be model-sourced, not rule-defined",
                    scope_tok.line,
                    scope_tok.column,
                )
            self.advance()
            body = self._parse_body()
        elif self.at("punct", "("):
            self.advance()
            model_ref = self.parse_string()
            self.expect("punct", ")")
        elif scope == "path":
            raise ConstitutionError(
                "path objectives must name a model, e.g. path objective "
                f'{name}("{name}")',
                scope_tok.line,
                scope_tok.column,
            )
        self.expect("punct", ".", expected="'.' at end of statement")
        return ObjectiveDecl(scope, name, body, model_ref)

    # -- bodies ----------------------------------------------------------

    def _parse_body(self) -> BodyExpr:
        expr = self._parse_conj()
        while self.at("keyword", "or"):
            self.advance()
            expr = Or(expr, self._parse_conj())
        return expr

    def _parse_conj(self) -> BodyExpr:
        expr = self._parse_unary()
        while self.at("keyword", "and"):
            self.advance()
            expr = And(expr, self._parse_unary())
        return expr

    def _parse_unary(self) -> BodyExpr:
        if self.at("keyword", "not"):
            self.advance()
            return Not(self._parse_unary())
        return self._parse_primary()

    def _parse_comparison(self, term: CTerm) -> Comparison:
        tok = self.current
        if tok.kind != "op":
            raise self.error("comparison operator ('<', '>', '<=' or '>=')")
        self.advance()
        return Comparison(term, tok.value, self.parse_number())

    def _parse_primary(self) -> BodyExpr:
        if self.at("punct", "("):
            self.advance()
            expr = self._parse_body()
            self.expect("punct", ")")
            return expr
        if self.at("keyword", "over"):
            self.advance()
            self.expect("punct", "(")
            tag = self.expect_ident("feature tag")
            self.expect("punct", ")")
            return Over(tag)
        if self.at("keyword", "distance"):
            self.advance()
            self.expect("punct", "(")
            tag = self.expect_ident("feature tag")
            self.expect("punct", ")")
            return self._parse_comparison(Distance(tag))
        if self.at("keyword", "altitude"):
            self.advance()
            return self._parse_comparison(Altitude())
        if self.at("ident"):
            name = self.advance().value
            if self.current.kind == "op":
                return self._parse_comparison(FactTerm(name))
            return Atom(name)
        raise self.error("an atom, relation, comparison or '('")


def parse(text: str) -> Constitution:
    """Parse constitution source into its AST.

    Errors report line, column and the expected token.  Duplicate
    definitions and unsupported distributions are rejected here; name
    resolution belongs to :func:`validate`.
    """
    return _Parser(text).parse_program()


# ----------------------------------------------------------------------
# Printing (canonical source form)


def _precedence(expr: BodyExpr) -> int:
    if isinstance(expr, Or):
        return 0
    if isinstance(expr, And):
        return 1
    if isinstance(expr, Not):
        return 2
    return 3


def _format_number(value: float) -> str:
    return repr(float(value))


def _format_body(expr: BodyExpr, parent_level: int = 0) -> str:
    level = _precedence(expr)
    if isinstance(expr, Atom):
        text = expr.name
    elif isinstance(expr, Over):
        text = f"over({expr.tag})"
    elif isinstance(expr, Comparison):
        if isinstance(expr.term, Distance):
            term = f"distance({expr.term.tag})"
        elif isinstance(expr.term, Altitude):
            term = "altitude"
        else:
            term = expr.term.name
        text = f"{term} {expr.op} {_format_number(expr.literal)}"
    elif isinstance(expr, Not):
        text = f"not {_format_body(expr.operand, level)}"
    elif isinstance(expr, And):
        text = f"{_format_body(expr.left, level)} and {_format_body(expr.right, level + 1)}"
    elif isinstance(expr, Or):
        text = f"{_format_body(expr.left, level)} or {_format_body(expr.right, level + 1)}"
    else:
        raise TypeError(f"not a body expression: {expr!r}")
    if level < parent_level:
        return f"({text})"
    return text


def unparse(c: Constitution) -> str:
    """Render a constitution back to canonical source text.

    ``parse(unparse(parse(s)))`` is structurally equal to ``parse(s)``.
    """
    lines: list[str] = []
    if c.star_map_ref is not None:
        lines.append(f'star_map("{c.star_map_ref}").')
    for group in c.parameter_groups:
        lines.append("parameter {" + ", ".join(group.options) + "}.")
    for fact in c.continuous_facts:
        params = ", ".join(_format_number(p) for p in fact.params)
        lines.append(f"{fact.name} ~ {fact.distribution}({params}).")
    for rule in c.rules:
        prefix = "field " if rule.is_field else ""
        lines.append(f"{prefix}{rule.head} if {_format_body(rule.body)}.")
    for obj in c.objectives:
        head = f"{obj.scope} objective {obj.name}"
        if obj.model_ref is not None:
            lines.append(f'{head}("{obj.model_ref}").')
        elif obj.body is not None:
            lines.append(f"{head} if {_format_body(obj.body)}.")
        else:
            lines.append(f"{head}.")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def _walk(expr: BodyExpr):
    yield expr
    if isinstance(expr, Not):
        yield from _walk(expr.operand)
    elif isinstance(expr, (And, Or)):
        yield from _walk(expr.left)
        yield from _walk(expr.right)


def validate(c: Constitution, star_map) -> list[Diagnostic]:
    """Static checks of a constitution against a star map.

    Returns an empty list when the program is well-formed: acyclic
    definitions, every relation backed by a star-map layer, every atom
    resolvable to a rule head, parameter option or continuous fact, no
    option shared between groups, every compared term defined, and
    non-field rules free of (transitive) spatial dependence.
    """
    diags: list[Diagnostic] = []
    bodies = c.defined_bodies()
    heads = set(bodies)
    facts = set(c.fact_by_name)
    options: set[str] = set()
    for group in c.parameter_groups:
        for option in group.options:
            if option in options:
                diags.append(
                    Diagnostic("duplicate-option", f"option {option!r} appears in two groups")
                )
            options.add(option)

    for category, names in (("head", heads), ("continuous fact", facts)):
        for name in sorted(names & options):
            diags.append(
                Diagnostic(
                    "name-collision",
                    f"{name!r} is both a {category} and a parameter option",
                )
            )
    for name in sorted(heads & facts):
        diags.append(
            Diagnostic("name-collision", f"{name!r} is both a head and a continuous fact")
        )

    if not c.objectives:
        diags.append(Diagnostic("no-objective", "a constitution must declare an objective"))

    # atom resolution + relation layers + comparison terms
    referenced: dict[str, set[str]] = {name: set() for name in bodies}
    spatial: set[str] = set()  # heads with direct spatial content

    def scan(owner: str | None, body: BodyExpr):
        for node in _walk(body):
            if isinstance(node, Atom):
                if node.name in heads:
                    if owner is not None:
                        referenced[owner].add(node.name)
                elif node.name in facts:
                    diags.append(
                        Diagnostic(
                            "continuous-as-boolean",
                            f"continuous fact {node.name!r} used as a boolean atom",
                        )
                    )
                elif node.name not in options:
                    diags.append(
                        Diagnostic("unresolved-atom", f"unknown atom {node.name!r}")
                    )
            elif isinstance(node, Over):
                if owner is not None:
                    spatial.add(owner)
                if star_map is not None and not star_map.has_layer("over", node.tag):
                    diags.append(
                        Diagnostic(
                            "missing-layer", f"no over({node.tag}) layer in the star map"
                        )
                    )
            elif isinstance(node, Comparison):
                if isinstance(node.term, Distance):
                    if owner is not None:
                        spatial.add(owner)
                    if star_map is not None and not star_map.has_layer(
                        "distance", node.term.tag
                    ):
                        diags.append(
                            Diagnostic(
                                "missing-layer",
                                f"no distance({node.term.tag}) layer in the star map",
                            )
                        )
                elif isinstance(node.term, Altitude):
                    if owner is not None:
                        spatial.add(owner)
                elif node.term.name not in facts:
                    diags.append(
                        Diagnostic(
                            "undefined-term",
                            f"comparison against undefined continuous term {node.term.name!r}",
                        )
                    )

    for name, body in bodies.items():
        scan(name, body)

    # head-reference objectives
    for obj in c.objectives:
        if obj.is_logic and obj.body is None and obj.name not in c.rule_by_head:
            diags.append(
                Diagnostic(
                    "unresolved-atom",
                    f"objective {obj.name!r} references no rule head of that name",
                )
            )

    # cycles (iterative DFS over the head dependency graph)
    state: dict[str, int] = {}

    def find_cycle(start: str) -> list[str] | None:
        stack: list[tuple[str, Iterator[str]]] = [(start, iter(sorted(referenced[start])))]
        state[start] = 1
        trail = [start]
        while stack:
            name, it = stack[-1]
            advanced = False
            for dep in it:
                if state.get(dep, 0) == 1:
                    return trail[trail.index(dep) :] + [dep]
                if state.get(dep, 0) == 0:
                    state[dep] = 1
                    trail.append(dep)
                    stack.append((dep, iter(sorted(referenced[dep]))))
                    advanced = True
                    break
            if not advanced:
                state[name] = 2
                trail.pop()
                stack.pop()
        return None

    for name in sorted(bodies):
        if state.get(name, 0) == 0:
            cycle = find_cycle(name)
            if cycle:
                diags.append(
                    Diagnostic("cycle", "cyclic rule dependency: " + " -> ".join(cycle))
                )
                break

    # transitive spatial dependence of non-field rules
    field_heads = {r.head for r in c.rules if r.is_field}
    field_heads |= {o.name for o in c.objectives if o.is_logic and o.body is not None}
    spatial_closure = set(spatial) | field_heads
    changed = True
    while changed:
        changed = False
        for name, deps in referenced.items():
            if name not in spatial_closure and deps & spatial_closure:
                spatial_closure.add(name)
                changed = True
    for rule in c.rules:
        if not rule.is_field and rule.head in spatial_closure:
            diags.append(
                Diagnostic(
                    "non-spatial",
                    f"rule {rule.head!r} is not 'field' but depends on spatial relations",
                )
            )

    return diags
