"""External formulas: internal core, the standardness predicate, and the
relativized / monotone quantifier sugar.

A formula variable is a named kernel free variable; quantifiers bind by
name.  The four sugared quantifiers are first-class nodes with defined
expansions, so recognizing and rebuilding them is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, auto
from typing import Iterator

from .kernel import (
    BASE,
    Arrow,
    FinType,
    Term,
    TypeMismatch,
    Var,
    free_vars as term_free_vars,
    subterms,
    type_check,
)
from . import kernel


class FormulaError(Exception):
    pass


class NotInternal(FormulaError):
    pass


class NotNormalForm(FormulaError):
    def __init__(self, reason: str, offending: "Formula | None" = None):
        super().__init__(reason)
        self.reason = reason
        self.offending = offending


class Rel(Enum):
    EQ0 = auto()
    LEQ0 = auto()
    LEQ_STAR = auto()


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    rel: Rel
    lhs: Term
    rhs: Term
    # The type at which a domination atom is asserted; Base relations
    # ignore it.
    star_type: FinType = BASE


@dataclass(frozen=True)
class St(Formula):
    term: Term


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    antecedent: Formula
    consequent: Formula


@dataclass(frozen=True)
class Quant(Formula):
    var: str
    var_type: FinType
    body: Formula


@dataclass(frozen=True)
class Forall(Quant):
    pass


@dataclass(frozen=True)
class Exists(Quant):
    pass


@dataclass(frozen=True)
class ForallSt(Quant):
    pass


@dataclass(frozen=True)
class ExistsSt(Quant):
    pass


@dataclass(frozen=True)
class ForallMono(Quant):
    pass


@dataclass(frozen=True)
class ExistsMono(Quant):
    pass


SUGARED = (ForallSt, ExistsSt, ForallMono, ExistsMono)


def var(name: str, var_type: FinType = BASE) -> Var:
    return Var(name, var_type)


def eq0(lhs: Term, rhs: Term) -> Atom:
    return Atom(Rel.EQ0, lhs, rhs)


def leq0(lhs: Term, rhs: Term) -> Atom:
    return Atom(Rel.LEQ0, lhs, rhs)


def leq_star(lhs: Term, rhs: Term, at_type: FinType) -> Atom:
    return Atom(Rel.LEQ_STAR, lhs, rhs, at_type)


def self_major(name: str, at_type: FinType) -> Atom:
    v = Var(name, at_type)
    return leq_star(v, v, at_type)


def forall_mono_st(name: str, var_type: FinType, body: Formula) -> Formula:
    """Quantifier over standard monotone objects, mono sugar outermost."""
    return ForallMono(name, var_type, Implies(St(Var(name, var_type)), body))


def exists_mono_st(name: str, var_type: FinType, body: Formula) -> Formula:
    return ExistsMono(name, var_type, And(St(Var(name, var_type)), body))


def bounded_exists(name: str, var_type: FinType, bound: Term, body: Formula) -> Formula:
    """(exists y <=* t) body, with <=*_0 written as <=_0."""
    v = Var(name, var_type)
    guard = leq0(v, bound) if var_type == BASE else leq_star(v, bound, var_type)
    return Exists(name, var_type, And(guard, body))


def bounded_forall(name: str, var_type: FinType, bound: Term, body: Formula) -> Formula:
    v = Var(name, var_type)
    guard = leq0(v, bound) if var_type == BASE else leq_star(v, bound, var_type)
    return Forall(name, var_type, Implies(guard, body))


def mono_bounded_exists(name: str, var_type: FinType, bound: Term, body: Formula) -> Formula:
    """(exists-tilde y <=* t) body: the witness is itself monotone."""
    v = Var(name, var_type)
    if var_type == BASE:
        return Exists(name, var_type, And(leq0(v, bound), body))
    return Exists(name, var_type, And(self_major(name, var_type), And(leq_star(v, bound, var_type), body)))


def mono_bounded_forall(name: str, var_type: FinType, bound: Term, body: Formula) -> Formula:
    v = Var(name, var_type)
    if var_type == BASE:
        return Forall(name, var_type, Implies(leq0(v, bound), body))
    return Forall(name, var_type, Implies(self_major(name, var_type), Implies(leq_star(v, bound, var_type), body)))


# ---------------------------------------------------------------------------
# Structure


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    match f:
        case Not(body):
            yield from subformulas(body)
        case And(l, r) | Or(l, r):
            yield from subformulas(l)
            yield from subformulas(r)
        case Implies(a, c):
            yield from subformulas(a)
            yield from subformulas(c)
        case Quant(_, _, body):
            yield from subformulas(body)


def is_internal(f: Formula) -> bool:
    """No standardness predicate and no sugared quantifier anywhere."""
    for sub in subformulas(f):
        if isinstance(sub, St) or isinstance(sub, SUGARED):
            return False
    return True


def expand_sugar(f: Formula) -> Formula:
    """One-level expansion of a sugared quantifier node."""
    match f:
        case ForallSt(x, t, body):
            return Forall(x, t, Implies(St(Var(x, t)), body))
        case ExistsSt(x, t, body):
            return Exists(x, t, And(St(Var(x, t)), body))
        case ForallMono(x, t, body):
            return Forall(x, t, Implies(self_major(x, t), body))
        case ExistsMono(x, t, body):
            return Exists(x, t, And(self_major(x, t), body))
    return f


def desugar(f: Formula) -> Formula:
    """Expand all sugared quantifiers, recursively."""
    match f:
        case Not(body):
            return Not(desugar(body))
        case And(l, r):
            return And(desugar(l), desugar(r))
        case Or(l, r):
            return Or(desugar(l), desugar(r))
        case Implies(a, c):
            return Implies(desugar(a), desugar(c))
        case ForallSt() | ExistsSt() | ForallMono() | ExistsMono():
            return desugar(expand_sugar(f))
        case Forall(x, t, body):
            return Forall(x, t, desugar(body))
        case Exists(x, t, body):
            return Exists(x, t, desugar(body))
        case _:
            return f


def resugar(f: Formula) -> Formula:
    """Recognize expansions back into sugared quantifiers, recursively."""
    match f:
        case Not(body):
            return Not(resugar(body))
        case And(l, r):
            return And(resugar(l), resugar(r))
        case Implies(a, c):
            return Implies(resugar(a), resugar(c))
        case Or(l, r):
            return Or(resugar(l), resugar(r))
        case Quant(x, t, body):
            body = resugar(body)
            match (f, body):
                case (Forall(), Implies(St(Var(n, vt)), inner)) if n == x and vt == t:
                    return ForallSt(x, t, inner)
                case (Forall(), Implies(Atom(Rel.LEQ_STAR, Var(n1, t1), Var(n2, t2), st), inner)) if (
                    n1 == n2 == x and t1 == t2 == t == st
                ):
                    return ForallMono(x, t, inner)
                case (Exists(), And(St(Var(n, vt)), inner)) if n == x and vt == t:
                    return ExistsSt(x, t, inner)
                case (Exists(), And(Atom(Rel.LEQ_STAR, Var(n1, t1), Var(n2, t2), st), inner)) if (
                    n1 == n2 == x and t1 == t2 == t == st
                ):
                    return ExistsMono(x, t, inner)
            return type(f)(x, t, body)
        case _:
            return f


def free_formula_vars(f: Formula) -> set[str]:
    match f:
        case Atom(_, lhs, rhs, _):
            return term_free_vars(lhs) | term_free_vars(rhs)
        case St(t):
            return term_free_vars(t)
        case Not(body):
            return free_formula_vars(body)
        case And(l, r) | Or(l, r):
            return free_formula_vars(l) | free_formula_vars(r)
        case Implies(a, c):
            return free_formula_vars(a) | free_formula_vars(c)
        case Quant(x, _, body):
            return free_formula_vars(body) - {x}
    return set()


def all_names(f: Formula) -> set[str]:
    """Every variable name occurring anywhere, free or bound."""
    names: set[str] = set()
    for sub in subformulas(f):
        match sub:
            case Atom(_, lhs, rhs, _):
                for t in (lhs, rhs):
                    for s in subterms(t):
                        if isinstance(s, Var):
                            names.add(s.name)
            case St(t):
                for s in subterms(t):
                    if isinstance(s, Var):
                        names.add(s.name)
            case Quant(x, _, _):
                names.add(x)
    return names


def fresh_name(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    candidate = base + "'"
    while candidate in taken:
        candidate += "'"
    return candidate


def substitute_formula(f: Formula, name: str, replacement: Term) -> Formula:
    """Capture-avoiding substitution of a free formula variable."""
    repl_frees = term_free_vars(replacement)

    def go(g: Formula) -> Formula:
        match g:
            case Atom(rel, lhs, rhs, st):
                return Atom(rel, kernel.substitute(lhs, name, replacement), kernel.substitute(rhs, name, replacement), st)
            case St(t):
                return St(kernel.substitute(t, name, replacement))
            case Not(body):
                return Not(go(body))
            case And(l, r):
                return And(go(l), go(r))
            case Or(l, r):
                return Or(go(l), go(r))
            case Implies(a, c):
                return Implies(go(a), go(c))
            case Quant(x, t, body):
                if x == name:
                    return g
                if x in repl_frees and name in free_formula_vars(body):
                    taken = all_names(body) | repl_frees | {name}
                    x2 = fresh_name(x, taken)
                    body = rename_formula_var(body, x, x2)
                    x = x2
                return type(g)(x, t, go(body))
        return g

    return go(f)


def rename_formula_var(f: Formula, old: str, new: str) -> Formula:
    """Rename a free variable (used for binder freshening)."""

    def go(g: Formula) -> Formula:
        match g:
            case Atom(rel, lhs, rhs, st):
                return Atom(rel, _rename_term(lhs), _rename_term(rhs), st)
            case St(t):
                return St(_rename_term(t))
            case Not(body):
                return Not(go(body))
            case And(l, r):
                return And(go(l), go(r))
            case Or(l, r):
                return Or(go(l), go(r))
            case Implies(a, c):
                return Implies(go(a), go(c))
            case Quant(x, t, body):
                if x == old:
                    return g
                return type(g)(x, t, go(body))
        return g

    def _rename_term(t: Term) -> Term:
        match t:
            case Var(n, vt) if n == old:
                return Var(new, vt)
            case kernel.Abs(vt, body, hint):
                return kernel.Abs(vt, _rename_term(body), hint=hint)
            case kernel.App(fn, arg):
                return kernel.App(_rename_term(fn), _rename_term(arg))
            case _:
                return t

    return go(f)


def rename_bound(f: Quant, new: str) -> Quant:
    """Rename the binder of a quantifier node."""
    body = rename_formula_var(f.body, f.var, new)
    return type(f)(new, f.var_type, body)


def alpha_equal(f: Formula, g: Formula) -> bool:
    return _alpha(f, g, {}, {})


def _alpha(f: Formula, g: Formula, env_f: dict[str, str], env_g: dict[str, str]) -> bool:
    if type(f) is not type(g):
        return False
    match f, g:
        case Atom(r1, l1, rh1, s1), Atom(r2, l2, rh2, s2):
            return r1 == r2 and s1 == s2 and _alpha_term(l1, l2, env_f, env_g) and _alpha_term(rh1, rh2, env_f, env_g)
        case St(t1), St(t2):
            return _alpha_term(t1, t2, env_f, env_g)
        case Not(b1), Not(b2):
            return _alpha(b1, b2, env_f, env_g)
        case (And(a1, b1), And(a2, b2)) | (Or(a1, b1), Or(a2, b2)) | (Implies(a1, b1), Implies(a2, b2)):
            return _alpha(a1, a2, env_f, env_g) and _alpha(b1, b2, env_f, env_g)
        case Quant(x1, t1, b1), Quant(x2, t2, b2):
            if t1 != t2:
                return False
            marker = "\x01#" + str(len(env_f))
            return _alpha(b1, b2, {**env_f, x1: marker}, {**env_g, x2: marker})
    return False


def _alpha_term(s: Term, t: Term, env_f: dict[str, str], env_g: dict[str, str]) -> bool:
    match s, t:
        case Var(n1, t1), Var(n2, t2):
            return env_f.get(n1, n1) == env_g.get(n2, n2) and t1 == t2
        case kernel.App(f1, a1), kernel.App(f2, a2):
            return _alpha_term(f1, f2, env_f, env_g) and _alpha_term(a1, a2, env_f, env_g)
        case kernel.Abs(t1, b1, _), kernel.Abs(t2, b2, _):
            return t1 == t2 and _alpha_term(b1, b2, env_f, env_g)
        case _:
            return s == t


# ---------------------------------------------------------------------------
# Relativization


def _bounded_number_quantifier(f: Quant) -> Formula | None:
    """Return the inner body if f is a number quantifier guarded by a
    <=_0 bound on its own variable, else None."""
    if f.var_type != BASE:
        return None
    match f:
        case Forall(x, _, Implies(Atom(Rel.LEQ0, Var(n, _), bound), inner)) if n == x and x not in term_free_vars(bound):
            return inner
        case Exists(x, _, And(Atom(Rel.LEQ0, Var(n, _), bound), inner)) if n == x and x not in term_free_vars(bound):
            return inner
    return None


def relativize(f: Formula) -> Formula:
    """Append the standardness guard to every quantifier of an internal
    formula, leaving bounded number quantifiers alone."""
    if not is_internal(f):
        raise NotInternal("relativize expects an internal formula")

    def go(g: Formula) -> Formula:
        match g:
            case Not(body):
                return Not(go(body))
            case And(l, r):
                return And(go(l), go(r))
            case Or(l, r):
                return Or(go(l), go(r))
            case Implies(a, c):
                return Implies(go(a), go(c))
            case Forall(x, t, body):
                inner = _bounded_number_quantifier(g)
                if inner is not None:
                    guard = g.body.antecedent  # type: ignore[union-attr]
                    return Forall(x, t, Implies(guard, go(inner)))
                return ForallSt(x, t, go(body))
            case Exists(x, t, body):
                inner = _bounded_number_quantifier(g)
                if inner is not None:
                    guard = g.body.left  # type: ignore[union-attr]
                    return Exists(x, t, And(guard, go(inner)))
                return ExistsSt(x, t, go(body))
            case _:
                return g

    return go(f)


# ---------------------------------------------------------------------------
# Normal forms


@dataclass(frozen=True)
class NormalForm:
    universals: tuple[tuple[str, FinType], ...]
    existentials: tuple[tuple[str, FinType], ...]
    matrix: Formula

    def render(self) -> Formula:
        f = self.matrix
        for name, t in reversed(self.existentials):
            f = ExistsSt(name, t, f)
        for name, t in reversed(self.universals):
            f = ForallSt(name, t, f)
        return f


def recognize_normal_form(f: Formula) -> NormalForm:
    """Decompose a leading standard-universal block followed by a
    standard-existential block over an internal matrix."""
    g = resugar(f)
    universals: list[tuple[str, FinType]] = []
    existentials: list[tuple[str, FinType]] = []
    while isinstance(g, ForallSt):
        universals.append((g.var, g.var_type))
        g = g.body
    while isinstance(g, ExistsSt):
        existentials.append((g.var, g.var_type))
        g = g.body
    if not is_internal(g):
        offending = next(
            sub for sub in subformulas(g) if isinstance(sub, St) or isinstance(sub, SUGARED)
        )
        raise NotNormalForm("matrix is not internal", offending)
    return NormalForm(tuple(universals), tuple(existentials), g)


def try_normal_form(f: Formula) -> NormalForm | None:
    try:
        return recognize_normal_form(f)
    except NotNormalForm:
        return None


# ---------------------------------------------------------------------------
# Well-formedness


def check_formula(f: Formula, context: dict[str, FinType] | None = None) -> None:
    """Type-check every term in the formula; raise TypeMismatch on error."""
    ctx = dict(context or {})

    def go(g: Formula, local: dict[str, FinType]) -> None:
        match g:
            case Atom(rel, lhs, rhs, st):
                lt = type_check(lhs, local)
                rt = type_check(rhs, local)
                if rel in (Rel.EQ0, Rel.LEQ0):
                    if lt != BASE or rt != BASE:
                        raise TypeMismatch("number relation", BASE, (lt, rt))
                else:
                    if lt != st or rt != st:
                        raise TypeMismatch("domination relation", st, (lt, rt))
            case St(t):
                type_check(t, local)
            case Not(body):
                go(body, local)
            case And(l, r) | Or(l, r):
                go(l, local)
                go(r, local)
            case Implies(a, c):
                go(a, local)
                go(c, local)
            case Quant(x, t, body):
                go(body, {**local, x: t})

    go(f, ctx)
