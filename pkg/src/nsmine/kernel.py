"""Finite simple types and the typed term language of extracted programs.

Terms use a locally nameless representation: free variables are named,
bound variables are de Bruijn indices.  Alpha-equivalent terms are
therefore structurally equal (binder name hints do not participate in
comparison).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Iterator, Mapping


class KernelError(Exception):
    pass


class TypeMismatch(KernelError):
    def __init__(self, location: str, expected: object, found: object):
        super().__init__(f"{location}: expected {expected}, found {found}")
        self.location = location
        self.expected = expected
        self.found = found


class UnboundVariable(KernelError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class FuelExhausted(KernelError):
    """Raised when evaluation exceeds its fuel limit.

    Well-typed terms always normalize; hitting this indicates a bug in
    the evaluator or an absurd fuel setting, not a user error.
    """


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class FinType:
    pass


@dataclass(frozen=True)
class Base(FinType):
    def __repr__(self) -> str:
        return "O"


@dataclass(frozen=True)
class Arrow(FinType):
    domain: FinType
    codomain: FinType

    def __repr__(self) -> str:
        return f"({self.domain!r} -> {self.codomain!r})"


BASE = Base()
TYPE1 = Arrow(BASE, BASE)  # sequences / number-theoretic functions
TYPE2 = Arrow(TYPE1, BASE)  # functionals on sequences


def arrow(*types: FinType) -> FinType:
    """Right-fold a list of types into a curried arrow type."""
    if not types:
        raise ValueError("arrow() needs at least one type")
    result = types[-1]
    for t in reversed(types[:-1]):
        result = Arrow(t, result)
    return result


def recursor_type(result: FinType) -> FinType:
    # R : rho -> (0 -> rho -> rho) -> 0 -> rho
    return arrow(result, arrow(BASE, result, result), BASE, result)


# ---------------------------------------------------------------------------
# Terms


class ConstKind(Enum):
    ZERO = auto()
    SUCC = auto()
    MAXNAT = auto()
    RECURSOR = auto()


@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    """Free variable, named, carrying its type."""

    name: str
    type: FinType

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class BVar(Term):
    """Bound variable as a de Bruijn index relative to enclosing Abs nodes."""

    index: int

    def __repr__(self) -> str:
        return f"#{self.index}"


@dataclass(frozen=True)
class Const(Term):
    kind: ConstKind
    # Recursor is a family indexed by its result type; other constants
    # ignore this field.
    result_type: FinType = BASE

    def type(self) -> FinType:
        if self.kind is ConstKind.ZERO:
            return BASE
        if self.kind is ConstKind.SUCC:
            return Arrow(BASE, BASE)
        if self.kind is ConstKind.MAXNAT:
            return arrow(BASE, BASE, BASE)
        return recursor_type(self.result_type)

    def __repr__(self) -> str:
        if self.kind is ConstKind.RECURSOR:
            return f"rec[{self.result_type!r}]"
        return self.kind.name.lower()


@dataclass(frozen=True)
class NumLiteral(Term):
    """Sugar for an iterated successor applied to zero."""

    value: int

    def __repr__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Abs(Term):
    var_type: FinType
    body: Term
    hint: str = field(default="x", compare=False)

    def __repr__(self) -> str:
        return f"(lam {self.hint} : {self.var_type!r} {self.body!r})"


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term

    def __repr__(self) -> str:
        return f"({self.fn!r} {self.arg!r})"


ZERO = Const(ConstKind.ZERO)
SUCC = Const(ConstKind.SUCC)
MAXNAT = Const(ConstKind.MAXNAT)


def recursor(result: FinType) -> Const:
    return Const(ConstKind.RECURSOR, result)


def app(fn: Term, *args: Term) -> Term:
    result = fn
    for a in args:
        result = App(result, a)
    return result


def lam(name: str, var_type: FinType, body: Term) -> Abs:
    """Build an abstraction from a named body, closing over `name`."""
    return Abs(var_type, abstract(body, name), hint=name)


def lit(n: int) -> NumLiteral:
    if n < 0:
        raise ValueError("naturals only")
    return NumLiteral(n)


# ---------------------------------------------------------------------------
# Binding operations


def abstract(term: Term, name: str, depth: int = 0) -> Term:
    """Turn free occurrences of `name` into the bound variable at `depth`."""
    match term:
        case Var(n, _) if n == name:
            return BVar(depth)
        case Abs(vt, body, hint):
            return Abs(vt, abstract(body, name, depth + 1), hint=hint)
        case App(fn, arg):
            return App(abstract(fn, name, depth), abstract(arg, name, depth))
        case _:
            return term


def instantiate(term: Term, replacement: Term, depth: int = 0) -> Term:
    """Replace the bound variable at `depth` with `replacement`."""
    match term:
        case BVar(i) if i == depth:
            return replacement
        case Abs(vt, body, hint):
            return Abs(vt, instantiate(body, replacement, depth + 1), hint=hint)
        case App(fn, arg):
            return App(instantiate(fn, replacement, depth), instantiate(arg, replacement, depth))
        case _:
            return term


def substitute(term: Term, name: str, replacement: Term) -> Term:
    """Capture-avoiding substitution of a free variable.

    Bound variables are indices, so free variables of `replacement` can
    never be captured by binders in `term`.
    """
    match term:
        case Var(n, vt) if n == name:
            rt = infer_type_opt(replacement)
            if rt is not None and rt != vt:
                raise TypeMismatch(f"substitute {name}", vt, rt)
            return replacement
        case Abs(vt, body, hint):
            return Abs(vt, substitute(body, name, replacement), hint=hint)
        case App(fn, arg):
            return App(substitute(fn, name, replacement), substitute(arg, name, replacement))
        case _:
            return term


def free_vars(term: Term) -> set[str]:
    match term:
        case Var(n, _):
            return {n}
        case Abs(_, body, _):
            return free_vars(body)
        case App(fn, arg):
            return free_vars(fn) | free_vars(arg)
        case _:
            return set()


def subterms(term: Term) -> Iterator[Term]:
    yield term
    match term:
        case Abs(_, body, _):
            yield from subterms(body)
        case App(fn, arg):
            yield from subterms(fn)
            yield from subterms(arg)


# ---------------------------------------------------------------------------
# Typing


def type_check(term: Term, context: Mapping[str, FinType] | None = None) -> FinType:
    """Return the unique type of `term`, or raise.

    `context` supplies types for free variables not carrying one of
    their own (all Vars carry a type; the context, when given, must
    agree with it).
    """
    return _check(term, [], dict(context or {}))


def _check(term: Term, bound: list[FinType], ctx: dict[str, FinType]) -> FinType:
    match term:
        case Var(name, vt):
            if name in ctx and ctx[name] != vt:
                raise TypeMismatch(f"variable {name}", ctx[name], vt)
            return vt
        case BVar(i):
            if i >= len(bound):
                raise UnboundVariable(f"#{i}")
            return bound[i]
        case Const():
            return term.type()
        case NumLiteral():
            return BASE
        case Abs(vt, body, _):
            body_t = _check(body, [vt] + bound, ctx)
            return Arrow(vt, body_t)
        case App(fn, arg):
            fn_t = _check(fn, bound, ctx)
            arg_t = _check(arg, bound, ctx)
            if not isinstance(fn_t, Arrow):
                raise TypeMismatch(f"application of {fn!r}", "an arrow type", fn_t)
            if fn_t.domain != arg_t:
                raise TypeMismatch(f"argument {arg!r}", fn_t.domain, arg_t)
            return fn_t.codomain
    raise KernelError(f"unknown term {term!r}")


def infer_type_opt(term: Term) -> FinType | None:
    try:
        return type_check(term)
    except KernelError:
        return None


def is_closed(term: Term) -> bool:
    return not free_vars(term) and _max_index(term) < 0


def _max_index(term: Term, depth: int = 0) -> int:
    match term:
        case BVar(i):
            return i - depth
        case Abs(_, body, _):
            return _max_index(body, depth + 1)
        case App(fn, arg):
            return max(_max_index(fn, depth), _max_index(arg, depth))
        case _:
            return -1


# ---------------------------------------------------------------------------
# Evaluation (call-by-value, fuel-limited backstop)

DEFAULT_FUEL = 10_000_000


class _Fuel:
    __slots__ = ("left",)

    def __init__(self, amount: int):
        self.left = amount

    def burn(self) -> None:
        self.left -= 1
        if self.left < 0:
            raise FuelExhausted("evaluation fuel exhausted")


def evaluate(term: Term, fuel: int = DEFAULT_FUEL) -> Term:
    """Normalize a closed well-typed term.

    Base-type results come back as NumLiteral; arrow-type results as an
    Abs or a partially applied constant.
    """
    return _eval(term, _Fuel(fuel))


def _eval(term: Term, fuel: _Fuel) -> Term:
    match term:
        case Const(kind, _) if kind is ConstKind.ZERO:
            return NumLiteral(0)
        case Var() | BVar() | NumLiteral() | Abs() | Const():
            return term
        case App(fn, arg):
            vf = _eval(fn, fuel)
            va = _eval(arg, fuel)
            return _apply(vf, va, fuel)
    raise KernelError(f"cannot evaluate {term!r}")


def _apply(vf: Term, va: Term, fuel: _Fuel) -> Term:
    fuel.burn()
    match vf:
        case Abs(_, body, _):
            return _eval(instantiate(body, va), fuel)
        case Const(kind, _) if kind is ConstKind.SUCC:
            if isinstance(va, NumLiteral):
                return NumLiteral(va.value + 1)
            return App(vf, va)
        case App(Const(kind, _), first) if kind is ConstKind.MAXNAT:
            if isinstance(first, NumLiteral) and isinstance(va, NumLiteral):
                return NumLiteral(max(first.value, va.value))
            return App(vf, va)
        case App(App(Const(kind, _), base), step) if kind is ConstKind.RECURSOR:
            if isinstance(va, NumLiteral):
                acc = base
                for i in range(va.value):
                    acc = _apply(_apply(step, NumLiteral(i), fuel), acc, fuel)
                return acc
            return App(vf, va)
        case _:
            # Partial application of a constant: keep the spine.
            return App(vf, va)


def eval_nat(term: Term, fuel: int = DEFAULT_FUEL) -> int:
    """Evaluate a closed Base-type term to its numeral."""
    result = evaluate(term, fuel)
    if not isinstance(result, NumLiteral):
        raise TypeMismatch("eval_nat", "a numeral", result)
    return result.value


def as_unary_fn(term: Term, fuel: int = DEFAULT_FUEL):
    """View a closed term of type O -> O as a Python function on naturals."""

    def fn(n: int) -> int:
        return eval_nat(App(term, NumLiteral(n)), fuel)

    return fn
