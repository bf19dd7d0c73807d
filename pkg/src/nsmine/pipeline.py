"""Rewrite engine for bringing statements into normal form.

Rules operate on quantifier *units*: the sugared standard quantifiers,
their monotone-standard combinations, and plain internal quantifiers.
Each registered rule either fires once (returning the rewritten formula
plus evidence) or reports no locus.  The engine interleaves a
simplifying fixpoint (resolve, pull, instantiate, combine, drops) with
single generative steps (realization, choice) and stops when the result
is recognized as a normal form (or, in saturating mode, at fixpoint).

Convention for real-number material: reals are coded at base type and
real atoms are base-level atoms over approximation data.  The
designated symbols are

    approx s t   infinitesimal-closeness macro (resolved by `resolve`)
    absdiff s t  distance between coded reals
    inv n        reciprocal threshold 1/n
    rzero        the real zero (approx t rzero expands without absdiff)
    in01 x       guard: x lies in the unit interval
    ones         the constant-one sequence (binary-sequence guards)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Iterator

from .kernel import App, BASE, Arrow, FinType, NumLiteral, Term, TYPE1, Var
from .kernel import free_vars as term_free_vars
from .formulas import (
    And,
    Atom,
    Exists,
    ExistsMono,
    ExistsSt,
    Forall,
    ForallMono,
    ForallSt,
    Formula,
    Implies,
    Not,
    NormalForm,
    Or,
    Quant,
    Rel,
    St,
    all_names,
    bounded_exists,
    exists_mono_st,
    forall_mono_st,
    fresh_name,
    free_formula_vars,
    is_internal,
    leq0,
    rename_bound,
    recognize_normal_form,
    subformulas,
    substitute_formula,
    try_normal_form,
)


class ProvisoViolated(Exception):
    pass


class StuckError(Exception):
    def __init__(self, formula: Formula, reason: str):
        super().__init__(reason)
        self.formula = formula
        self.reason = reason


APPROX = "approx"
ABSDIFF = "absdiff"
INV = "inv"
RZERO = "rzero"
IN01 = "in01"
ONES = "ones"

DEFAULT_WHITELIST = frozenset(
    {
        ABSDIFF,
        INV,
        IN01,
        "f",
        "g",
        "rr",
        "xat",
        "rabsv",
        "rnonzero",
        "radd",
        "rsum",
        "mesh2",
        "inpart2",
    }
)


# ---------------------------------------------------------------------------
# Quantifier units


@dataclass(frozen=True)
class Unit:
    kind: str
    var: str
    var_type: FinType
    body: Formula


_ST_UNIT_KINDS = {"forall-st", "exists-st", "forall-mono-st", "exists-mono-st"}
_UNIVERSAL_KINDS = {"forall-st", "forall-mono-st"}
_DUAL = {
    "forall-st": "exists-st",
    "exists-st": "forall-st",
    "forall-mono-st": "exists-mono-st",
    "exists-mono-st": "forall-mono-st",
}


def match_unit(f: Formula) -> Unit | None:
    match f:
        case ForallSt(x, t, body):
            return Unit("forall-st", x, t, body)
        case ExistsSt(x, t, body):
            return Unit("exists-st", x, t, body)
        case ForallMono(x, t, Implies(St(Var(n, vt)), body)) if n == x and vt == t:
            return Unit("forall-mono-st", x, t, body)
        case ExistsMono(x, t, And(St(Var(n, vt)), body)) if n == x and vt == t:
            return Unit("exists-mono-st", x, t, body)
        case Forall(x, t, body):
            return Unit("forall", x, t, body)
        case Exists(x, t, body):
            return Unit("exists", x, t, body)
    return None


def build_unit(kind: str, var: str, var_type: FinType, body: Formula) -> Formula:
    if kind == "forall-st":
        return ForallSt(var, var_type, body)
    if kind == "exists-st":
        return ExistsSt(var, var_type, body)
    if kind == "forall-mono-st":
        return forall_mono_st(var, var_type, body)
    if kind == "exists-mono-st":
        return exists_mono_st(var, var_type, body)
    if kind == "forall":
        return Forall(var, var_type, body)
    if kind == "exists":
        return Exists(var, var_type, body)
    raise ValueError(kind)


def st_unit(f: Formula) -> Unit | None:
    u = match_unit(f)
    return u if u is not None and u.kind in _ST_UNIT_KINDS else None


# ---------------------------------------------------------------------------
# Trace


@dataclass(frozen=True)
class TraceStep:
    rule: str
    before: Formula
    after: Formula
    evidence: str = ""


@dataclass
class RewriteTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def record(self, rule: str, before: Formula, after: Formula, evidence: str = "") -> None:
        self.steps.append(TraceStep(rule, before, after, evidence))

    def formulas(self) -> list[Formula]:
        if not self.steps:
            return []
        return [self.steps[0].before] + [s.after for s in self.steps]

    def replays_from(self, start: Formula) -> bool:
        current = start
        for step in self.steps:
            if step.before != current:
                return False
            current = step.after
        return True


RuleResult = "tuple[Formula, str] | None"
Rule = Callable[[Formula, "RuleContext"], "tuple[Formula, str] | None"]


@dataclass
class RuleContext:
    whitelist: frozenset[str] = DEFAULT_WHITELIST


# ---------------------------------------------------------------------------
# Generic leftmost rewriting


def _rewrite_leftmost(f: Formula, attempt) -> "tuple[Formula, str] | None":
    hit = attempt(f)
    if hit is not None:
        return hit
    match f:
        case Not(body):
            r = _rewrite_leftmost(body, attempt)
            return (Not(r[0]), r[1]) if r else None
        case And(l, rr):
            r = _rewrite_leftmost(l, attempt)
            if r:
                return And(r[0], rr), r[1]
            r = _rewrite_leftmost(rr, attempt)
            return (And(l, r[0]), r[1]) if r else None
        case Or(l, rr):
            r = _rewrite_leftmost(l, attempt)
            if r:
                return Or(r[0], rr), r[1]
            r = _rewrite_leftmost(rr, attempt)
            return (Or(l, r[0]), r[1]) if r else None
        case Implies(a, c):
            r = _rewrite_leftmost(a, attempt)
            if r:
                return Implies(r[0], c), r[1]
            r = _rewrite_leftmost(c, attempt)
            return (Implies(a, r[0]), r[1]) if r else None
        case Quant(x, t, body):
            r = _rewrite_leftmost(body, attempt)
            return (type(f)(x, t, r[0]), r[1]) if r else None
    return None


# ---------------------------------------------------------------------------
# Rule: resolve infinitesimal-closeness macros


def _approx_parts(f: Formula) -> tuple[Term, Term] | None:
    match f:
        case Atom(Rel.EQ0, App(App(Var(head, _), s), t), NumLiteral(0)) if head == APPROX:
            return s, t
    return None


def rule_resolve(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx
    taken = all_names(f)
    ant_names = _series("N", taken)
    cons_names = _series("k", taken)
    expansions = 0

    def go(g: Formula, side: str) -> Formula:
        nonlocal expansions
        parts = _approx_parts(g)
        if parts is not None:
            s, t = parts
            name = next(ant_names) if side == "ant" else next(cons_names)
            expansions += 1
            if t == Var(RZERO, BASE):
                dist = s
            else:
                dist = App(App(Var(ABSDIFF, Arrow(BASE, Arrow(BASE, BASE))), s), t)
            threshold = App(Var(INV, TYPE1), Var(name, BASE))
            return ForallSt(name, BASE, Atom(Rel.LEQ0, dist, threshold))
        match g:
            case Not(body):
                return Not(go(body, side))
            case And(l, r):
                return And(go(l, side), go(r, side))
            case Or(l, r):
                return Or(go(l, side), go(r, side))
            case Implies(a, c):
                return Implies(go(a, "ant"), go(c, "cons"))
            case Quant(x, t, body):
                return type(g)(x, t, go(body, side))
        return g

    result = go(f, "ant")
    if expansions == 0:
        return None
    return result, f"expanded {expansions} closeness macro(s)"


def _series(base: str, taken: set[str]) -> Iterator[str]:
    for i in count():
        name = base + "'" * i
        if name not in taken:
            taken.add(name)
            yield name


def resolve_infinitesimal(f: Formula) -> Formula:
    r = rule_resolve(f, RuleContext())
    return f if r is None else r[0]


# ---------------------------------------------------------------------------
# Rule: pull standard quantifiers


def _freshen_if_needed(u: Unit, avoid: set[str]) -> Unit:
    if u.var not in avoid:
        return u
    new = fresh_name(u.var, avoid | {u.var})
    renamed = rename_bound(build_unit_quant(u), new)
    ru = match_unit(renamed)
    assert ru is not None
    return ru


def build_unit_quant(u: Unit) -> Quant:
    f = build_unit(u.kind, u.var, u.var_type, u.body)
    assert isinstance(f, Quant)
    return f


def _pull_step(f: Formula) -> Formula | None:
    """One hoist of a standard-quantifier unit, or None."""
    match f:
        case Implies(a, c):
            # Consequent side first, then antecedent (which flips).
            u = st_unit(c)
            if u is not None and (is_internal(u.body) or is_internal(a)):
                u = _freshen_if_needed(u, free_formula_vars(a))
                return build_unit(u.kind, u.var, u.var_type, Implies(a, u.body))
            u = st_unit(a)
            if u is not None and (is_internal(u.body) or is_internal(c)):
                u = _freshen_if_needed(u, free_formula_vars(c))
                return build_unit(_DUAL[u.kind], u.var, u.var_type, Implies(u.body, c))
        case And(l, r):
            u = st_unit(l)
            if u is not None:
                u = _freshen_if_needed(u, free_formula_vars(r))
                return build_unit(u.kind, u.var, u.var_type, And(u.body, r))
            u = st_unit(r)
            if u is not None:
                u = _freshen_if_needed(u, free_formula_vars(l))
                return build_unit(u.kind, u.var, u.var_type, And(l, u.body))
        case Or(l, r):
            u = st_unit(l)
            if u is not None:
                u = _freshen_if_needed(u, free_formula_vars(r))
                return build_unit(u.kind, u.var, u.var_type, Or(u.body, r))
            u = st_unit(r)
            if u is not None:
                u = _freshen_if_needed(u, free_formula_vars(l))
                return build_unit(u.kind, u.var, u.var_type, Or(l, u.body))
        case Not(body):
            u = st_unit(body)
            if u is not None:
                return build_unit(_DUAL[u.kind], u.var, u.var_type, Not(u.body))
        case Forall(z, zt, body):
            u = st_unit(body)
            if u is not None and u.kind in _UNIVERSAL_KINDS:
                if u.var == z:
                    u = _freshen_if_needed(u, {z})
                return build_unit(u.kind, u.var, u.var_type, Forall(z, zt, u.body))
        case Exists(z, zt, body):
            u = st_unit(body)
            if u is not None and u.kind not in _UNIVERSAL_KINDS:
                if u.var == z:
                    u = _freshen_if_needed(u, {z})
                return build_unit(u.kind, u.var, u.var_type, Exists(z, zt, u.body))
    return None


def rule_pull(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx
    moved = 0
    current = f
    while True:
        r = _rewrite_leftmost(current, lambda g: ((res, "") if (res := _pull_step(g)) is not None else None))
        if r is None:
            break
        current = r[0]
        moved += 1
    if moved == 0:
        return None
    return current, f"hoisted {moved} quantifier(s)"


def pull_standard_quantifiers(f: Formula) -> Formula:
    r = rule_pull(f, RuleContext())
    return f if r is None else r[0]


# ---------------------------------------------------------------------------
# Rule: realization


def _split_forall_spine(f: Formula) -> tuple[list[tuple[str, FinType]], Formula]:
    spine: list[tuple[str, FinType]] = []
    g = f
    while isinstance(g, Forall):
        spine.append((g.var, g.var_type))
        g = g.body
    return spine, g


def _split_exists_st_block(f: Formula) -> tuple[list[tuple[str, FinType]], Formula]:
    block: list[tuple[str, FinType]] = []
    g = f
    while True:
        u = st_unit(g)
        if u is None or u.kind != "exists-st":
            break
        block.append((u.var, u.var_type))
        g = u.body
    return block, g


def rule_realization(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx

    def attempt(g: Formula):
        spine, rest = _split_forall_spine(g)
        if not spine:
            return None
        block, body = _split_exists_st_block(rest)
        if not block:
            return None
        if not is_internal(body):
            return None
        taken = all_names(g)
        matrix = body
        if len(block) == 1:
            (yname, ytype) = block[0]
            zname = fresh_name(yname + "'", taken)
            bound: Term = Var(zname, ytype)
            matrix = bounded_exists(yname, ytype, bound, matrix)
            bounds = [(zname, ytype)]
        elif all(t == BASE for _, t in block):
            zname = fresh_name("l", taken)
            bounds = [(zname, BASE)]
            for yname, ytype in reversed(block):
                matrix = bounded_exists(yname, ytype, Var(zname, BASE), matrix)
        else:
            bounds = []
            for yname, ytype in block:
                bounds.append((fresh_name(yname + "'", taken), ytype))
            for (yname, ytype), (zname, _) in zip(reversed(block), reversed(bounds)):
                matrix = bounded_exists(yname, ytype, Var(zname, ytype), matrix)
        for xname, xtype in reversed(spine):
            matrix = Forall(xname, xtype, matrix)
        for zname, ztype in reversed(bounds):
            if ztype == BASE:
                matrix = ExistsSt(zname, ztype, matrix)
            else:
                matrix = exists_mono_st(zname, ztype, matrix)
        names = ", ".join(z for z, _ in bounds)
        return matrix, f"majorizing bound {names}"

    return _rewrite_leftmost(f, attempt)


def apply_realization(f: Formula) -> Formula:
    r = rule_realization(f, RuleContext())
    if r is not None:
        return r[0]
    # Near-miss diagnostics: a standard existential under an internal
    # universal whose body is not internal is a proviso violation.
    for sub in subformulas(f):
        spine, rest = _split_forall_spine(sub)
        if spine:
            block, body = _split_exists_st_block(rest)
            if block and not is_internal(body):
                raise ProvisoViolated("matrix under the standard existential is not internal")
    return f


# ---------------------------------------------------------------------------
# Rule: monotone choice


_CHOICE_NAMES = ("g", "h", "g'", "h'", "g''", "h''")


def _fresh_choice_name(taken: set[str]) -> str:
    for name in _CHOICE_NAMES:
        if name not in taken:
            return name
    return fresh_name("g", taken)


def rule_choice(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx

    def attempt(g: Formula):
        u = st_unit(g)
        if u is None:
            return None
        if u.kind == "forall-st" and u.var_type != BASE:
            return None
        if u.kind not in ("forall-st", "forall-mono-st"):
            return None
        v = st_unit(u.body)
        if v is None:
            return None
        if v.kind == "exists-st" and v.var_type != BASE:
            return None
        if v.kind not in ("exists-st", "exists-mono-st"):
            return None
        if not is_internal(v.body):
            return None
        taken = all_names(g)
        cname = _fresh_choice_name(taken)
        ctype = Arrow(u.var_type, v.var_type)
        bound = App(Var(cname, ctype), Var(u.var, u.var_type))
        inner = bounded_exists(v.var, v.var_type, bound, v.body)
        result = build_unit(u.kind, u.var, u.var_type, inner)
        return result, f"choice function {cname}: fresh standard monotone parameter"

    return _rewrite_leftmost(f, attempt)


def apply_monotone_choice(f: Formula) -> Formula:
    r = rule_choice(f, RuleContext())
    if r is not None:
        return r[0]
    for sub in subformulas(f):
        u = st_unit(sub)
        if u is not None and u.kind in ("forall-st", "forall-mono-st"):
            v = st_unit(u.body)
            if v is not None and v.kind in ("exists-st", "exists-mono-st") and not is_internal(v.body):
                raise ProvisoViolated("matrix under the choice pattern is not internal")
    return f


# ---------------------------------------------------------------------------
# Rule: instantiate bounded base witnesses


def _split_bounded_block(f: Formula) -> tuple[list[tuple[str, FinType]], Term, Formula] | None:
    """Chain of existentials guarded by the same bound term."""
    names: list[tuple[str, FinType]] = []
    bound: Term | None = None
    g = f
    while isinstance(g, Exists):
        match g.body:
            case And(Atom(rel, Var(n, _), b, _), rest) if n == g.var and rel in (Rel.LEQ0, Rel.LEQ_STAR):
                if bound is None:
                    bound = b
                elif b != bound:
                    break
                names.append((g.var, g.var_type))
                g = rest
            case _:
                break
    if not names or bound is None:
        return None
    return names, bound, g


def _polarity_of_var_atoms(f: Formula, name: str) -> list[tuple[Atom, int]]:
    out: list[tuple[Atom, int]] = []

    def go(g: Formula, pol: int) -> None:
        match g:
            case Atom() as a:
                if name in term_free_vars(a.lhs) | term_free_vars(a.rhs):
                    out.append((a, pol))
            case St(t):
                if name in term_free_vars(t):
                    out.append((Atom(Rel.EQ0, t, t), 0))
            case Not(body):
                go(body, -pol)
            case And(l, r) | Or(l, r):
                go(l, pol)
                go(r, pol)
            case Implies(a, c):
                go(a, -pol)
                go(c, pol)
            case Quant(_, _, body):
                go(body, pol)

    go(f, 1)
    return out


def _only_reciprocal_occurrences(term: Term, name: str) -> bool:
    """Every occurrence of the variable is the exact subterm (inv name)."""

    def walk(t: Term) -> tuple[int, int]:
        # (total occurrences, occurrences under inv)
        match t:
            case App(Var(h, _), Var(n, _)) if h == INV and n == name:
                return 1, 1
            case Var(n, _) if n == name:
                return 1, 0
            case App(fn, arg):
                a, b = walk(fn)
                c, d = walk(arg)
                return a + c, b + d
            case _:
                from .kernel import Abs

                if isinstance(t, Abs):
                    return walk(t.body)
                return 0, 0

    total, good = walk(term)
    return total == good


def _monotone_positions(matrix: Formula, name: str) -> bool:
    """The variable occurs only as a reciprocal threshold, with polarity
    making the matrix weakly monotone in it."""
    atoms = _polarity_of_var_atoms(matrix, name)
    if not atoms:
        return False
    for atom, pol in atoms:
        if atom.rel is not Rel.LEQ0 or pol == 0:
            return False
        in_lhs = name in term_free_vars(atom.lhs)
        in_rhs = name in term_free_vars(atom.rhs)
        if in_lhs and in_rhs:
            return False
        side = atom.lhs if in_lhs else atom.rhs
        if not _only_reciprocal_occurrences(side, name):
            return False
        needed = 1 if in_lhs else -1
        if pol != needed:
            return False
    return True


def _max_witness_shape(matrix: Formula, name: str, spine_vars: set[str]) -> bool:
    """Single comparison atom with the variable only on the larger side,
    that side not touching spine-bound variables."""
    match matrix:
        case Atom(Rel.LEQ0, lhs, rhs, _):
            if name in term_free_vars(lhs):
                return False
            if name not in term_free_vars(rhs):
                return False
            if term_free_vars(rhs) & spine_vars:
                return False
            return True
    return False


@dataclass
class _Spine:
    steps: list[tuple] = field(default_factory=list)
    bound_vars: set[str] = field(default_factory=set)

    def rebuild(self, inner: Formula) -> Formula:
        for step in reversed(self.steps):
            if step[0] == "forall":
                inner = Forall(step[1], step[2], inner)
            elif step[0] == "exists":
                inner = Exists(step[1], step[2], inner)
            else:
                inner = Implies(step[1], inner)
        return inner


def _walk_spine(f: Formula) -> Iterator[tuple[_Spine, Formula]]:
    """Positive-polarity descents through internal quantifiers and
    internally-guarded implications."""
    spine = _Spine()
    g = f
    while True:
        yield _Spine(list(spine.steps), set(spine.bound_vars)), g
        u = match_unit(g)
        if u is not None and u.kind == "forall":
            spine.steps.append(("forall", u.var, u.var_type))
            spine.bound_vars.add(u.var)
            g = u.body
            continue
        if u is not None and u.kind == "exists":
            spine.steps.append(("exists", u.var, u.var_type))
            spine.bound_vars.add(u.var)
            g = u.body
            continue
        match g:
            case Implies(a, c) if is_internal(a):
                spine.steps.append(("implies", a))
                g = c
                continue
        return


def _process_block(
    outer_var: str | None,
    block: list[tuple[str, FinType]],
    bound: Term,
    matrix: Formula,
    spine_vars: set[str],
) -> tuple[Formula, list[str], list[str]] | None:
    """Substitute or unbind block variables; returns (new inner formula,
    substituted names, evidence notes) or None if nothing fires."""
    substituted: list[str] = []
    dropped: list[tuple[str, FinType]] = []
    kept: list[tuple[str, FinType]] = []
    notes: list[str] = []
    current = matrix
    for yname, ytype in block:
        if ytype == BASE and _monotone_positions(current, yname):
            current = substitute_formula(current, yname, bound)
            substituted.append(yname)
            notes.append(f"{yname}: monotone threshold positions, instantiated at the bound")
        elif (
            ytype == BASE
            and outer_var is not None
            and len(block) == 1
            and _max_witness_shape(current, yname, spine_vars)
        ):
            current = substitute_formula(current, yname, bound)
            substituted.append(yname)
            notes.append(f"{yname}: witness replaced by a maximizing value below the bound")
        else:
            kept.append((yname, ytype))
    if not substituted:
        return None
    if outer_var is not None:
        for yname, ytype in kept:
            dropped.append((yname, ytype))
            notes.append(f"{yname}: bound dropped (weakening)")
        kept = []
    for yname, ytype in reversed(dropped):
        current = Exists(yname, ytype, current)
    for yname, ytype in reversed(kept):
        current = bounded_exists(yname, ytype, bound, current)
    return current, substituted, notes


def rule_instantiate(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx

    def attempt(g: Formula):
        # Case A: a standard existential bounding an inner block.
        u = st_unit(g)
        if u is not None and u.kind == "exists-st" and u.var_type == BASE:
            for spine, rest in _walk_spine(u.body):
                blk = _split_bounded_block(rest)
                if blk is None:
                    continue
                block, bound, matrix = blk
                if bound != Var(u.var, BASE):
                    continue
                if u.var in free_formula_vars(matrix):
                    continue
                processed = _process_block(u.var, block, bound, matrix, spine.bound_vars)
                if processed is None:
                    continue
                inner, substituted, notes = processed
                result = ExistsSt(u.var, BASE, spine.rebuild(inner))
                if len(substituted) == 1:
                    new_name = substituted[0]
                    if new_name not in free_formula_vars(result):
                        result = rename_bound(result, new_name)
                        notes.append(f"bound variable renamed {u.var} -> {new_name}")
                return result, "; ".join(notes)
        # Case B: a block bounded by a compound term.
        blk = _split_bounded_block(g)
        if blk is not None:
            block, bound, matrix = blk
            if not isinstance(bound, Var):
                processed = _process_block(None, block, bound, matrix, set())
                if processed is not None:
                    inner, _, notes = processed
                    return inner, "; ".join(notes)
        return None

    return _rewrite_leftmost(f, attempt)


def instantiate_base_bound(f: Formula) -> Formula:
    r = rule_instantiate(f, RuleContext())
    return f if r is None else r[0]


# ---------------------------------------------------------------------------
# Rule: collapse base-type domination atoms


def rule_collapse_base_star(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx
    changed = 0

    def go(g: Formula) -> Formula:
        nonlocal changed
        match g:
            case Atom(Rel.LEQ_STAR, lhs, rhs, t) if t == BASE:
                changed += 1
                return leq0(lhs, rhs)
            case Not(body):
                return Not(go(body))
            case And(l, r):
                return And(go(l), go(r))
            case Or(l, r):
                return Or(go(l), go(r))
            case Implies(a, c):
                return Implies(go(a), go(c))
            case Quant(x, t, body):
                return type(g)(x, t, go(body))
        return g

    result = go(f)
    if changed == 0:
        return None
    return result, f"rewrote {changed} base-type domination atom(s)"


# ---------------------------------------------------------------------------
# Rule: combine normal forms across an implication


def _match_choice_form(f: Formula) -> tuple[list[tuple[str, FinType]], list[tuple[str, FinType]], Formula] | None:
    """(exists-mono-st g...)(forall-st x...) internal-matrix."""
    gs: list[tuple[str, FinType]] = []
    g = f
    while True:
        u = st_unit(g)
        if u is not None and u.kind == "exists-mono-st":
            gs.append((u.var, u.var_type))
            g = u.body
            continue
        break
    xs: list[tuple[str, FinType]] = []
    while True:
        u = st_unit(g)
        if u is not None and u.kind == "forall-st":
            xs.append((u.var, u.var_type))
            g = u.body
            continue
        break
    if not is_internal(g):
        return None
    if not gs and not xs:
        return None
    return gs, xs, g


def combine_normal_forms(impl: Formula) -> Formula:
    """Merge an implication of normal forms into a single normal form.

    The antecedent contributes choice functions (existing ones when it
    is already in choice form, fresh ones otherwise) as universals and
    its own universals as existentials; the consequent's tuples keep
    their roles.  Matrix: the internal implication.
    """
    if not isinstance(impl, Implies):
        raise ProvisoViolated("combination needs an implication")
    result = _combine(impl, allow_internal_antecedent=True)
    if result is None:
        raise ProvisoViolated("sides are not recognizable normal forms")
    return result[0]


def _combine(impl: Implies, allow_internal_antecedent: bool) -> "tuple[Formula, str] | None":
    left, right = impl.antecedent, impl.consequent
    right_nf = try_normal_form(right)
    if right_nf is None:
        return None
    if is_internal(left):
        if not allow_internal_antecedent:
            return None
        matrix = Implies(left, right_nf.matrix)
        return NormalForm(right_nf.universals, right_nf.existentials, matrix).render(), "internal antecedent"
    taken = all_names(impl)
    choice = _match_choice_form(left)
    evidence: str
    if choice is not None:
        gs, xs, phi0 = choice
        evidence = "reused antecedent choice functions " + ", ".join(n for n, _ in gs) if gs else "antecedent universals shifted"
    else:
        left_nf = try_normal_form(left)
        if left_nf is None or not left_nf.universals:
            return None
        xs = list(left_nf.universals)
        phi0 = left_nf.matrix
        gs = []
        for yname, ytype in left_nf.existentials:
            cname = _fresh_choice_name(taken)
            taken.add(cname)
            ctype = ytype
            for _, xt in reversed(xs):
                ctype = Arrow(xt, ctype)
            gs.append((cname, ctype))
            applied: Term = Var(cname, ctype)
            for xn, xt in xs:
                applied = App(applied, Var(xn, xt))
            phi0 = substitute_formula(phi0, yname, applied)
        evidence = (
            "introduced choice functions " + ", ".join(n for n, _ in gs) if gs else "antecedent universals shifted"
        )
    # Rename antecedent-side binders clashing with consequent-side ones.
    clashes = {n for n, _ in xs} & ({n for n, _ in right_nf.universals} | {n for n, _ in right_nf.existentials})
    for name in sorted(clashes):
        new = fresh_name(name, taken)
        taken.add(new)
        phi0 = substitute_formula(phi0, name, Var(new, dict(xs)[name]))
        xs = [(new, t) if n == name else (n, t) for n, t in xs]
    matrix = Implies(phi0, right_nf.matrix)
    f: Formula = matrix
    for yname, ytype in reversed(xs):
        if ytype == BASE:
            f = ExistsSt(yname, ytype, f)
        else:
            f = exists_mono_st(yname, ytype, f)
    for yname, ytype in reversed(list(right_nf.existentials)):
        f = ExistsSt(yname, ytype, f)
    for xname, xtype in reversed(list(right_nf.universals)):
        f = ForallSt(xname, xtype, f)
    for gname, gtype in reversed(gs):
        if gtype == BASE:
            f = ForallSt(gname, gtype, f)
        else:
            f = forall_mono_st(gname, gtype, f)
    return f, evidence


def rule_combine(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx

    def attempt(g: Formula):
        if isinstance(g, Implies) and not is_internal(g):
            return _combine(g, allow_internal_antecedent=False)
        return None

    return _rewrite_leftmost(f, attempt)


# ---------------------------------------------------------------------------
# Rule: drop the monotonicity restriction on a standard universal


def rule_drop_mono(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    del ctx

    def attempt(g: Formula):
        u = st_unit(g)
        if u is not None and u.kind == "forall-mono-st":
            return ForallSt(u.var, u.var_type, u.body), (
                f"monotonicity restriction on {u.var} dropped (classically justified for this fragment)"
            )
        return None

    return _rewrite_leftmost(f, attempt)


# ---------------------------------------------------------------------------
# Rule: drop standardness on sequence / unit-interval quantifiers


def _sequence_quantifier_parts(g: Formula) -> tuple[str, FinType, Formula, Formula] | None:
    match g:
        case ForallSt(x, t, Implies(guard, body)):
            match guard:
                case Atom(Rel.LEQ_STAR, Var(n, _), _, gt) if n == x and t == gt == TYPE1:
                    return x, t, guard, body
                case Atom(Rel.EQ0, App(Var(h, _), Var(n, _)), NumLiteral(0)) if h == IN01 and n == x and t == BASE:
                    return x, t, guard, body
    return None


def _head_symbols(f: Formula) -> set[str]:
    heads: set[str] = set()

    def walk_term(t: Term) -> None:
        match t:
            case App():
                head = t
                args = []
                while isinstance(head, App):
                    args.append(head.arg)
                    head = head.fn
                if isinstance(head, Var):
                    heads.add(head.name)
                for a in args:
                    walk_term(a)
            case _:
                from .kernel import Abs

                if isinstance(t, Abs):
                    walk_term(t.body)

    for sub in subformulas(f):
        match sub:
            case Atom(_, lhs, rhs, _):
                walk_term(lhs)
                walk_term(rhs)
            case St(t):
                walk_term(t)
    return heads


def drop_st_on_sequence_quantifier(f: Formula, whitelist: frozenset[str] = DEFAULT_WHITELIST) -> Formula:
    r = _drop_st(f, whitelist, strict=True)
    return f if r is None else r[0]


def _drop_st(f: Formula, whitelist: frozenset[str], strict: bool) -> "tuple[Formula, str] | None":
    def attempt(g: Formula):
        parts = _sequence_quantifier_parts(g)
        if parts is None:
            return None
        x, t, guard, body = parts
        offending = sorted(_head_symbols(body) - whitelist)
        if offending:
            if strict:
                raise ProvisoViolated(
                    f"symbol(s) not known to respect real equality: {', '.join(offending)}"
                )
            return None
        kind = "binary-sequence" if t == TYPE1 else "unit-interval"
        return Forall(x, t, Implies(guard, body)), (
            f"standardness dropped on {kind} quantifier {x}; symbols checked: "
            + ", ".join(sorted(_head_symbols(body)))
        )

    return _rewrite_leftmost(f, attempt)


def rule_drop_st(f: Formula, ctx: RuleContext) -> "tuple[Formula, str] | None":
    return _drop_st(f, ctx.whitelist, strict=False)


# ---------------------------------------------------------------------------
# The engine


RULES: dict[str, Rule] = {
    "resolve": rule_resolve,
    "pull": rule_pull,
    "collapse_base_star": rule_collapse_base_star,
    "instantiate": rule_instantiate,
    "combine": rule_combine,
    "drop_mono": rule_drop_mono,
    "drop_st": rule_drop_st,
    "realization": rule_realization,
    "choice": rule_choice,
}

SIMPLIFYING_DEFAULT = ("resolve", "pull", "collapse_base_star", "instantiate", "combine", "drop_mono", "drop_st")
GENERATIVE_DEFAULT = ("realization", "choice")


@dataclass(frozen=True)
class Strategy:
    simplifying: tuple[str, ...] = SIMPLIFYING_DEFAULT
    generative: tuple[str, ...] = GENERATIVE_DEFAULT
    stop_at_normal_form: bool = True
    max_steps: int = 10_000


NORMALIZE = Strategy()
SATURATE = Strategy(stop_at_normal_form=False)


@dataclass
class TemplateResult:
    normal_form: NormalForm
    trace: RewriteTrace
    final: Formula


def run_template(
    f: Formula,
    strategy: Strategy = NORMALIZE,
    whitelist: frozenset[str] = DEFAULT_WHITELIST,
) -> TemplateResult:
    """Apply rules to fixpoint under the strategy; succeed when the
    result is a recognizable normal form."""
    ctx = RuleContext(whitelist=whitelist)
    trace = RewriteTrace()
    current = f
    steps = 0
    while steps <= strategy.max_steps:
        progressed = True
        while progressed:
            progressed = False
            for name in strategy.simplifying:
                r = RULES[name](current, ctx)
                if r is not None:
                    after, evidence = r
                    if after == current:
                        continue
                    trace.record(name, current, after, evidence)
                    current = after
                    steps += 1
                    progressed = True
                    break
            if steps > strategy.max_steps:
                raise StuckError(current, "step budget exhausted")
        if strategy.stop_at_normal_form:
            nf = try_normal_form(current)
            if nf is not None:
                return TemplateResult(nf, trace, current)
        fired = False
        for name in strategy.generative:
            r = RULES[name](current, ctx)
            if r is not None:
                after, evidence = r
                trace.record(name, current, after, evidence)
                current = after
                steps += 1
                fired = True
                break
        if not fired:
            nf = try_normal_form(current)
            if nf is not None:
                return TemplateResult(nf, trace, current)
            raise StuckError(current, "no rule applies and the result is not a normal form")
    raise StuckError(current, "step budget exhausted")
