"""Exact probabilistic inference over grounded constitutions.

Grounding turns a constitution, at one point of the navigation space and
under one mission setting, into a finite propositional program:

* each ``over(tag)`` becomes a Bernoulli fact whose probability is read
  from the star map,
* every continuous term (``distance(tag)`` layers and declared
  continuous facts) becomes one interval variable, partitioned by all
  literals the term is compared against in the queried part of the
  program, with interval masses from the Gaussian CDF,
* ``altitude`` comparisons and parameter atoms become constants.

Satisfying assignments are found by exhaustive enumeration and the query
probability is the sum over satisfying assignments of the product of the
assigned values' probabilities.  P(query) + P(not query) = 1 up to float
rounding, and refining a query with extra conjuncts can only lower its
probability -- the model sum runs in canonical enumeration order so the
inequality holds exactly in floating point as well.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from . import constitution as cl
from .grids import GridSpec3D, ScalarGrid3D
from .starmap import StarMap

DEFAULT_LIMIT_BITS = 24.0


class InferenceError(ValueError):
    """Grounding or query construction failed."""


class InferenceResourceError(InferenceError):
    """The joint assignment space exceeds the configured enumeration limit."""


# ----------------------------------------------------------------------
# Mission settings


@dataclass(frozen=True)
class MissionSetting:
    """One chosen option per parameter group, in group declaration order."""

    choices: tuple[str, ...]

    @classmethod
    def resolve(cls, c: cl.Constitution, options: Sequence[str] = ()) -> "MissionSetting":
        """Build a setting from a partial option list.

        Groups not named by ``options`` default to their first declared
        option.  Unknown options or two options from the same group are
        errors.
        """
        remaining = list(options)
        chosen: list[str] = []
        for group in c.parameter_groups:
            hits = [o for o in remaining if o in group.options]
            if len(hits) > 1:
                raise InferenceError(f"conflicting options {hits} for one parameter group")
            chosen.append(hits[0] if hits else group.options[0])
            for h in hits:
                remaining.remove(h)
        if remaining:
            raise InferenceError(f"unknown parameter options: {remaining}")
        return cls(tuple(chosen))

    def active(self, option: str) -> bool:
        return option in self.choices


# ----------------------------------------------------------------------
# Ground programs


@dataclass(frozen=True)
class BernoulliFact:
    name: str
    probability: float


@dataclass(frozen=True)
class IntervalVariable:
    """Discretized continuous term: sorted cut points and interval masses.

    Interval i spans (cuts[i-1], cuts[i]); masses has len(cuts) + 1
    entries summing to 1.
    """

    name: str
    cuts: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if len(self.masses) != len(self.cuts) + 1:
            raise InferenceError(f"{self.name}: need len(cuts) + 1 masses")
        if any(m < 0 or m > 1 for m in self.masses):
            raise InferenceError(f"{self.name}: masses must lie in [0, 1]")
        if abs(sum(self.masses) - 1.0) > 1e-12:
            raise InferenceError(f"{self.name}: masses must sum to 1")
        if any(a >= b for a, b in zip(self.cuts, self.cuts[1:])):
            raise InferenceError(f"{self.name}: cuts must be strictly increasing")


# Ground expressions: evaluated against (fact values, interval values).


@dataclass(frozen=True)
class GConst:
    value: bool


@dataclass(frozen=True)
class GFact:
    index: int


@dataclass(frozen=True)
class GInterval:
    var_index: int
    allowed: frozenset[int]


@dataclass(frozen=True)
class GNot:
    operand: "GExpr"


@dataclass(frozen=True)
class GAnd:
    items: tuple["GExpr", ...]


@dataclass(frozen=True)
class GOr:
    items: tuple["GExpr", ...]


@dataclass(frozen=True)
class GRef:
    name: str


GExpr = object


def _eval_gexpr(expr, facts, intervals, defs: dict[str, bool]) -> bool:
    if isinstance(expr, GConst):
        return expr.value
    if isinstance(expr, GFact):
        return facts[expr.index]
    if isinstance(expr, GInterval):
        return intervals[expr.var_index] in expr.allowed
    if isinstance(expr, GNot):
        return not _eval_gexpr(expr.operand, facts, intervals, defs)
    if isinstance(expr, GAnd):
        return all(_eval_gexpr(e, facts, intervals, defs) for e in expr.items)
    if isinstance(expr, GOr):
        return any(_eval_gexpr(e, facts, intervals, defs) for e in expr.items)
    if isinstance(expr, GRef):
        return defs[expr.name]
    raise TypeError(f"not a ground expression: {expr!r}")


@dataclass(frozen=True)
class GroundProgram:
    """Propositional program over Bernoulli facts and interval variables.

    ``definitions`` are in dependency (topological) order; ``query``
    names one of them.
    """

    facts: tuple[BernoulliFact, ...]
    intervals: tuple[IntervalVariable, ...]
    definitions: tuple[tuple[str, GExpr], ...]
    query: str

    def __post_init__(self):
        if self.query not in {name for name, _ in self.definitions}:
            raise InferenceError(f"query {self.query!r} is not defined")

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.facts) + tuple(v.name for v in self.intervals)

    def domain_sizes(self) -> tuple[int, ...]:
        return (2,) * len(self.facts) + tuple(len(v.masses) for v in self.intervals)

    def evaluate(self, facts: Sequence[bool], intervals: Sequence[int]) -> bool:
        defs: dict[str, bool] = {}
        for name, expr in self.definitions:
            defs[name] = _eval_gexpr(expr, facts, intervals, defs)
        return defs[self.query]

    def dump(self) -> str:
        """Readable text form: facts, interval tables, definitions."""
        lines = ["facts:"]
        for i, f in enumerate(self.facts):
            lines.append(f"  f{i} {f.name}: p = {f.probability}")
        lines.append("interval variables:")
        for i, v in enumerate(self.intervals):
            lines.append(f"  x{i} {v.name}: cuts = {list(v.cuts)}")
            edges = ["-inf"] + [str(c) for c in v.cuts] + ["+inf"]
            for j, mass in enumerate(v.masses):
                lines.append(f"      ({edges[j]}, {edges[j + 1]}): {mass}")
        lines.append("definitions:")
        for name, expr in self.definitions:
            lines.append(f"  {name} := {_format_gexpr(expr, self)}")
        lines.append(f"query: {self.query}")
        return "\n".join(lines)


def _format_gexpr(expr, gp: GroundProgram) -> str:
    if isinstance(expr, GConst):
        return "true" if expr.value else "false"
    if isinstance(expr, GFact):
        return gp.facts[expr.index].name
    if isinstance(expr, GInterval):
        return f"{gp.intervals[expr.var_index].name} in {sorted(expr.allowed)}"
    if isinstance(expr, GNot):
        return f"not ({_format_gexpr(expr.operand, gp)})"
    if isinstance(expr, GAnd):
        return " and ".join(f"({_format_gexpr(e, gp)})" for e in expr.items)
    if isinstance(expr, GOr):
        return " or ".join(f"({_format_gexpr(e, gp)})" for e in expr.items)
    if isinstance(expr, GRef):
        return expr.name
    raise TypeError(f"not a ground expression: {expr!r}")


@dataclass(frozen=True)
class ModelSet:
    """All satisfying total assignments, as a disjunction of conjunctions.

    Each assignment lists fact truth values (0/1) followed by interval
    indices, in :attr:`GroundProgram.variable_names` order.
    """

    variables: tuple[str, ...]
    fact_count: int
    assignments: tuple[tuple[int, ...], ...]


def enumerate_models(gp: GroundProgram, limit_bits: float = DEFAULT_LIMIT_BITS) -> ModelSet:
    """Exhaustively enumerate the satisfying assignments of ``gp``.

    Raises :class:`InferenceResourceError` when the joint space exceeds
    ``2**limit_bits`` assignments.
    """
    sizes = gp.domain_sizes()
    bits = sum(math.log2(s) for s in sizes) if sizes else 0.0
    if bits > limit_bits:
        raise InferenceResourceError(
            f"{bits:.1f} binary-equivalent bits exceed the limit of {limit_bits}; "
            "simplify the model or raise the limit"
        )
    nf = len(gp.facts)
    satisfying = []
    for values in itertools.product(*(range(s) for s in sizes)):
        facts = tuple(bool(v) for v in values[:nf])
        intervals = values[nf:]
        if gp.evaluate(facts, intervals):
            satisfying.append(values)
    return ModelSet(gp.variable_names, nf, tuple(satisfying))


def wmc(models: ModelSet, gp: GroundProgram) -> float:
    """Weighted model count: sum over models of the assignment product.

    Runs in canonical model order so that programs whose model sets nest
    compare consistently even in floating point.
    """
    nf = models.fact_count
    total = 0.0
    for assignment in models.assignments:
        term = 1.0
        for i, fact in enumerate(gp.facts):
            term *= fact.probability if assignment[i] else 1.0 - fact.probability
        for j, var in enumerate(gp.intervals):
            term *= var.masses[assignment[nf + j]]
        total += term
    return min(max(total, 0.0), 1.0)


# ----------------------------------------------------------------------
# Grounding a constitution

_CONJUNCTION_QUERY = "__all_objectives__"


def _gaussian_cdf(x: np.ndarray | float) -> np.ndarray | float:
    return ndtr(x)


def _interval_masses(mu: float, sigma: float, cuts: tuple[float, ...]) -> tuple[float, ...]:
    cdf = np.concatenate([[0.0], _gaussian_cdf((np.asarray(cuts) - mu) / sigma), [1.0]])
    return tuple(np.maximum(np.diff(cdf), 0.0))


def _allowed_intervals(op: str, cut_index: int, n_intervals: int) -> frozenset[int]:
    # Interval i lies between cuts[i-1] and cuts[i]; the cut points
    # themselves carry no probability mass, so < and <= coincide.
    if op in ("<", "<="):
        return frozenset(range(0, cut_index + 1))
    return frozenset(range(cut_index + 1, n_intervals))


def _compare(value: float, op: str, literal: float) -> bool:
    if op == "<":
        return value < literal
    if op == "<=":
        return value <= literal
    if op == ">":
        return value > literal
    return value >= literal


@dataclass(frozen=True)
class _Structure:
    """Point-independent grounding: variables and definitions.

    Only interval cut sets, setting constants and altitude truth values
    are baked in; Bernoulli probabilities and interval masses are filled
    per point.
    """

    over_tags: tuple[str, ...]
    interval_terms: tuple[tuple, ...]  # ('distance', tag, cuts) | ('fact', name, mu, sigma, cuts)
    definitions: tuple[tuple[str, GExpr], ...]
    query: str

    def domain_sizes(self) -> tuple[int, ...]:
        sizes = [2] * len(self.over_tags)
        for term in self.interval_terms:
            sizes.append(len(term[-1]) + 1)  # cuts are the last entry
        return tuple(sizes)


def _query_targets(c: cl.Constitution, query: str | None) -> list[str]:
    """Objective/head names whose conjunction is queried."""
    if query is not None:
        for obj in c.objectives:
            if obj.name == query and not obj.is_logic:
                raise InferenceError(
                    f"objective {query!r} is model-sourced and cannot be queried logically"
                )
        bodies = c.defined_bodies()
        if query not in bodies and query not in {o.name for o in c.logic_objectives}:
            raise InferenceError(f"unknown query {query!r}")
        return [query]
    names = [o.name for o in c.logic_objectives]
    if not names:
        raise InferenceError("the constitution declares no logic field objective")
    return names


def _build_structure(
    c: cl.Constitution,
    setting: MissionSetting,
    altitude_truth,
    query: str | None,
) -> _Structure:
    targets = _query_targets(c, query)
    bodies = c.defined_bodies()
    options = c.options
    facts = c.fact_by_name

    # Reachable heads, in a deterministic first-encounter order.
    reachable: list[str] = []
    seen: set[str] = set()

    def visit_expr(expr):
        for node in cl._walk(expr):
            if isinstance(node, cl.Atom) and node.name in bodies and node.name not in seen:
                seen.add(node.name)
                visit_head(node.name)

    def visit_head(name: str):
        visit_expr(bodies[name])
        reachable.append(name)

    roots: list[str] = []
    for target in targets:
        # a bare head-reference objective queries the rule head of its name
        if target not in bodies:
            raise InferenceError(f"objective {target!r} references undefined head")
        roots.append(target)
        if target not in seen:
            seen.add(target)
            visit_head(target)

    # Cut points per continuous term over the reachable program part.
    cuts: dict[tuple, set[float]] = {}
    over_tags: list[str] = []

    def collect(expr):
        for node in cl._walk(expr):
            if isinstance(node, cl.Over):
                if node.tag not in over_tags:
                    over_tags.append(node.tag)
            elif isinstance(node, cl.Comparison):
                if isinstance(node.term, cl.Distance):
                    key = ("distance", node.term.tag)
                elif isinstance(node.term, cl.FactTerm):
                    if node.term.name not in facts:
                        raise InferenceError(
                            f"comparison against undefined term {node.term.name!r}"
                        )
                    key = ("fact", node.term.name)
                else:
                    continue
                cuts.setdefault(key, set()).add(float(node.literal))

    for name in reachable:
        collect(bodies[name])

    interval_terms: list[tuple] = []
    term_index: dict[tuple, int] = {}
    for name in reachable:  # deterministic: first-encounter order within reachable walk
        for node in cl._walk(bodies[name]):
            if isinstance(node, cl.Comparison) and isinstance(
                node.term, (cl.Distance, cl.FactTerm)
            ):
                if isinstance(node.term, cl.Distance):
                    key = ("distance", node.term.tag)
                    entry = ("distance", node.term.tag, tuple(sorted(cuts[key])))
                else:
                    key = ("fact", node.term.name)
                    fact = facts[node.term.name]
                    entry = (
                        "fact",
                        node.term.name,
                        fact.mean,
                        fact.std,
                        tuple(sorted(cuts[key])),
                    )
                if key not in term_index:
                    term_index[key] = len(interval_terms)
                    interval_terms.append(entry)

    over_index = {tag: i for i, tag in enumerate(over_tags)}

    def translate(expr) -> GExpr:
        if isinstance(expr, cl.Atom):
            if expr.name in bodies:
                return GRef(expr.name)
            if expr.name in options:
                return GConst(setting.active(expr.name))
            if expr.name in facts:
                raise InferenceError(
                    f"continuous fact {expr.name!r} used as a boolean atom"
                )
            raise InferenceError(f"unknown atom {expr.name!r}")
        if isinstance(expr, cl.Over):
            return GFact(over_index[expr.tag])
        if isinstance(expr, cl.Comparison):
            if isinstance(expr.term, cl.Altitude):
                return GConst(bool(altitude_truth(expr.op, float(expr.literal))))
            if isinstance(expr.term, cl.Distance):
                key = ("distance", expr.term.tag)
            else:
                key = ("fact", expr.term.name)
                fact = facts[expr.term.name]
                if fact.std <= 0.0:
                    # point mass: the comparison is a constant
                    return GConst(_compare(fact.mean, expr.op, float(expr.literal)))
            index = term_index[key]
            term_cuts = interval_terms[index][-1]
            cut_index = term_cuts.index(float(expr.literal))
            return GInterval(index, _allowed_intervals(expr.op, cut_index, len(term_cuts) + 1))
        if isinstance(expr, cl.Not):
            return GNot(translate(expr.operand))
        if isinstance(expr, cl.And):
            return GAnd((translate(expr.left), translate(expr.right)))
        if isinstance(expr, cl.Or):
            return GOr((translate(expr.left), translate(expr.right)))
        raise TypeError(f"not a body expression: {expr!r}")

    definitions = [(name, translate(bodies[name])) for name in reachable]
    if len(roots) == 1:
        query_name = roots[0]
    else:
        query_name = _CONJUNCTION_QUERY
        definitions.append((query_name, GAnd(tuple(GRef(r) for r in roots))))
    return _Structure(tuple(over_tags), tuple(interval_terms), tuple(definitions), query_name)


def _point_in_star_map(sm: StarMap, x: float, y: float) -> bool:
    (x0, x1), (y0, y1) = sm.bounds
    return x0 - 1e-9 <= x <= x1 + 1e-9 and y0 - 1e-9 <= y <= y1 + 1e-9


def ground_at(
    c: cl.Constitution,
    sm: StarMap,
    point,
    setting: MissionSetting,
    query: str | None = None,
) -> GroundProgram:
    """Ground the constitution at one (x, y, z) point.

    ``query`` names a logic field objective or rule head; ``None``
    queries the conjunction of all logic field objectives.  Distance
    layers with zero spread collapse their comparisons to constants.
    """
    x, y, z = (float(v) for v in point)
    if not _point_in_star_map(sm, x, y):
        raise InferenceError(f"point ({x}, {y}) is outside the star map bounds {sm.bounds}")
    structure = _build_structure(c, setting, lambda op, lit: _compare(z, op, lit), query)

    facts = []
    for tag in structure.over_tags:
        p = sm.layer("over", tag).interpolate((x, y))["p"]
        facts.append(BernoulliFact(f"over({tag})", float(p)))

    intervals = []
    collapsed: dict[int, float] = {}
    for idx, term in enumerate(structure.interval_terms):
        if term[0] == "distance":
            params = sm.layer("distance", term[1]).interpolate((x, y))
            mu, sigma = params["mu"], params["sigma"]
            name = f"distance({term[1]})"
            term_cuts = term[2]
        else:
            _, name, mu, sigma, term_cuts = term
        if sigma <= 0.0:
            collapsed[idx] = mu
            intervals.append(IntervalVariable(name, (), (1.0,)))
        else:
            intervals.append(
                IntervalVariable(name, term_cuts, _interval_masses(mu, sigma, term_cuts))
            )

    def patch(expr) -> GExpr:
        if isinstance(expr, GInterval) and expr.var_index in collapsed:
            value = collapsed[expr.var_index]
            original_cuts = structure.interval_terms[expr.var_index][-1]
            # recover the comparison truth from the allowed interval set
            truth = _interval_set_truth(value, original_cuts, expr.allowed)
            return GConst(truth)
        if isinstance(expr, GNot):
            return GNot(patch(expr.operand))
        if isinstance(expr, GAnd):
            return GAnd(tuple(patch(e) for e in expr.items))
        if isinstance(expr, GOr):
            return GOr(tuple(patch(e) for e in expr.items))
        return expr

    definitions = tuple((name, patch(expr)) for name, expr in structure.definitions)
    return GroundProgram(tuple(facts), tuple(intervals), definitions, structure.query)


def _interval_set_truth(value: float, cuts: tuple[float, ...], allowed: frozenset[int]) -> bool:
    index = 0
    for cut in cuts:
        if value > cut:
            index += 1
    return index in allowed


def query_probability(
    c: cl.Constitution,
    sm: StarMap,
    point,
    setting: MissionSetting,
    query: str | None = None,
    limit_bits: float = DEFAULT_LIMIT_BITS,
) -> float:
    """Ground, enumerate and weight-count in one step."""
    gp = ground_at(c, sm, point, setting, query)
    return wmc(enumerate_models(gp, limit_bits), gp)


# ----------------------------------------------------------------------
# Vectorized evaluation over many points


def satisfaction_probabilities(
    c: cl.Constitution,
    sm: StarMap,
    points: np.ndarray,
    setting: MissionSetting,
    query: str | None = None,
    limit_bits: float = DEFAULT_LIMIT_BITS,
) -> np.ndarray:
    """P(query satisfied) for every (x, y, z) row of ``points``.

    Numerically identical to calling :func:`query_probability` per point
    (same CDF evaluations, same canonical model-sum order), but grounds
    the program structure once per distinct altitude-comparison
    signature and fills the per-point parameters vectorized.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3:
        raise InferenceError("points must be (n, 3)")
    out = np.zeros(len(pts))

    # Collect altitude comparisons so points can share ground structures.
    alt_literals: list[tuple[str, float]] = []
    bodies = c.defined_bodies()
    for body in bodies.values():
        for node in cl._walk(body):
            if isinstance(node, cl.Comparison) and isinstance(node.term, cl.Altitude):
                entry = (node.op, float(node.literal))
                if entry not in alt_literals:
                    alt_literals.append(entry)

    z = pts[:, 2]
    signatures = np.zeros(len(pts), dtype=np.int64)
    for bit, (op, literal) in enumerate(alt_literals):
        truth = np.array([_compare(v, op, literal) for v in z])
        signatures |= truth.astype(np.int64) << bit

    for signature in np.unique(signatures):
        mask = signatures == signature
        group = pts[mask]
        truth_by_literal = {
            alt_literals[bit]: bool((int(signature) >> bit) & 1)
            for bit in range(len(alt_literals))
        }
        structure = _build_structure(
            c, setting, lambda op, lit: truth_by_literal[(op, lit)], query
        )
        out[mask] = _evaluate_structure(structure, sm, group, limit_bits)
    return out


def _evaluate_structure(
    structure: _Structure, sm: StarMap, points: np.ndarray, limit_bits: float
) -> np.ndarray:
    sizes = structure.domain_sizes()
    bits = sum(math.log2(s) for s in sizes) if sizes else 0.0
    if bits > limit_bits:
        raise InferenceResourceError(
            f"{bits:.1f} binary-equivalent bits exceed the limit of {limit_bits}"
        )
    xy = points[:, :2]
    for x, y in xy:
        if not _point_in_star_map(sm, float(x), float(y)):
            raise InferenceError(
                f"point ({x}, {y}) is outside the star map bounds {sm.bounds}"
            )
    n = len(points)
    nf = len(structure.over_tags)

    # per-variable probability tables: list of (domain, n) arrays
    fact_p = [sm.layer("over", tag).interpolate_many(xy)["p"] for tag in structure.over_tags]
    interval_masses: list[np.ndarray] = []
    for term in structure.interval_terms:
        if term[0] == "distance":
            params = sm.layer("distance", term[1]).interpolate_many(xy)
            mu, sigma = params["mu"], np.maximum(params["sigma"], 5e-324)
            term_cuts = term[2]
        else:
            _, _, mu_s, sigma_s, term_cuts = term
            mu = np.full(n, mu_s)
            sigma = np.full(n, max(sigma_s, 5e-324))
        cdf = np.zeros((len(term_cuts) + 2, n))
        cdf[-1] = 1.0
        with np.errstate(divide="ignore"):
            for i, cut in enumerate(term_cuts):
                cdf[i + 1] = _gaussian_cdf((cut - mu) / sigma)
        interval_masses.append(np.maximum(np.diff(cdf, axis=0), 0.0))

    # enumerate satisfying assignments once (structure only)
    satisfying = []
    for values in itertools.product(*(range(s) for s in sizes)):
        facts = tuple(bool(v) for v in values[:nf])
        intervals = values[nf:]
        defs: dict[str, bool] = {}
        for name, expr in structure.definitions:
            defs[name] = _eval_gexpr(expr, facts, intervals, defs)
        if defs[structure.query]:
            satisfying.append(values)

    total = np.zeros(n)
    for assignment in satisfying:
        term = np.ones(n)
        for i in range(nf):
            term = term * (fact_p[i] if assignment[i] else 1.0 - fact_p[i])
        for j in range(len(structure.interval_terms)):
            term = term * interval_masses[j][assignment[nf + j]]
        total += term
    return np.minimum(np.maximum(total, 0.0), 1.0)


def probability_field(
    c: cl.Constitution,
    sm: StarMap,
    grid: GridSpec3D,
    setting: MissionSetting,
    query: str | None = None,
    limit_bits: float = DEFAULT_LIMIT_BITS,
) -> ScalarGrid3D:
    """Satisfaction probability of the logic objectives at every grid node.

    With ``query=None`` the conjunction of all logic field objectives is
    evaluated, which is the compliance field consumed by the router.
    """
    points = grid.node_points()
    try:
        values = satisfaction_probabilities(c, sm, points, setting, query, limit_bits)
    except InferenceError:
        raise
    nx, ny, nz = grid.counts
    return ScalarGrid3D(grid, values.reshape(nz, ny, nx))
