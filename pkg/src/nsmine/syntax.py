"""Parenthesized prefix syntax shared by terms and formulas.

Grammar (whitespace-insensitive, `;` comments to end of line):

    type    := "O" | "(" "->" type type ")"
    term    := ident | nat-literal | "(" "lam" ident ":" type term ")"
             | "(" term term+ ")" | "zero" | "succ" | "max" | "(" "rec" type ")"
    formula := "(" rel term term ")" | "(" "st" term ")" | "(" "not" formula ")"
             | "(" ("and"|"or"|"implies") formula formula ")"
             | "(" quant ident ":" type formula ")"
    rel     := "=0" | "<=0" | "<=*"
    quant   := "forall" | "exists" | "forall-st" | "exists-st"
             | "forall-mono" | "exists-mono"

Free identifiers take their type from first use: in head position the
arity of the application determines an arrow type over the argument
types, elsewhere the expected type of the position (Base if unknown).
Later uses must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernel import (
    BASE,
    MAXNAT,
    SUCC,
    ZERO,
    Abs,
    App,
    Arrow,
    BVar,
    Const,
    ConstKind,
    FinType,
    NumLiteral,
    Term,
    Var,
    free_vars,
    lam,
    recursor,
)
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
    Or,
    Quant,
    Rel,
    St,
)


class ParseError(Exception):
    def __init__(self, message: str, position: int = -1):
        super().__init__(message if position < 0 else f"{message} (at token {position})")
        self.position = position


_QUANTS = {
    "forall": Forall,
    "exists": Exists,
    "forall-st": ForallSt,
    "exists-st": ExistsSt,
    "forall-mono": ForallMono,
    "exists-mono": ExistsMono,
}

_RELS = {"=0": Rel.EQ0, "<=0": Rel.LEQ0, "<=*": Rel.LEQ_STAR}

_KEYWORDS = {
    "lam", "rec", "zero", "succ", "max", "st", "not", "and", "or",
    "implies", "O", "->", *_QUANTS, *_RELS,
}


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c.isspace():
            i += 1
        elif c in "():":
            tokens.append(c)
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "():;":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], context: dict[str, FinType] | None = None):
        self.tokens = tokens
        self.pos = 0
        # Binder-scoped types (quantifiers and lambdas).
        self.bound: dict[str, FinType] = {}
        # Types assigned to free identifiers, fixed at first use.
        self.assumptions: dict[str, FinType] = dict(context or {})

    def peek(self) -> str:
        if self.pos >= len(self.tokens):
            raise ParseError("unexpected end of input", self.pos)
        return self.tokens[self.pos]

    def next(self) -> str:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise ParseError(f"expected {tok!r}, got {got!r}", self.pos - 1)

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    # -- types --------------------------------------------------------------

    def parse_type(self) -> FinType:
        tok = self.next()
        if tok == "O":
            return BASE
        if tok == "(":
            self.expect("->")
            dom = self.parse_type()
            cod = self.parse_type()
            self.expect(")")
            return Arrow(dom, cod)
        raise ParseError(f"expected a type, got {tok!r}", self.pos - 1)

    # -- terms --------------------------------------------------------------

    def parse_term(self, expected: FinType | None = None) -> Term:
        tok = self.peek()
        if tok == "(":
            return self._parse_compound_term(expected)
        self.next()
        if tok == "zero":
            return self._check(ZERO, BASE, expected)
        if tok == "succ":
            return self._check(SUCC, Arrow(BASE, BASE), expected)
        if tok == "max":
            return self._check(MAXNAT, Arrow(BASE, Arrow(BASE, BASE)), expected)
        if tok.isdigit():
            return self._check(NumLiteral(int(tok)), BASE, expected)
        if tok in _KEYWORDS or tok in "():":
            raise ParseError(f"expected a term, got {tok!r}", self.pos - 1)
        return self._ident(tok, expected)

    def _ident(self, name: str, expected: FinType | None) -> Var:
        if name in self.bound:
            t = self.bound[name]
        elif name in self.assumptions:
            t = self.assumptions[name]
        else:
            t = expected if expected is not None else BASE
            self.assumptions[name] = t
        if expected is not None and t != expected:
            raise ParseError(f"identifier {name!r} has type {t!r}, expected {expected!r}", self.pos - 1)
        return Var(name, t)

    def _check(self, term: Term, actual: FinType, expected: FinType | None) -> Term:
        if expected is not None and actual != expected:
            raise ParseError(f"{term!r} has type {actual!r}, expected {expected!r}", self.pos - 1)
        return term

    def _parse_compound_term(self, expected: FinType | None) -> Term:
        self.expect("(")
        tok = self.peek()
        if tok == "lam":
            self.next()
            name = self.next()
            self.expect(":")
            var_type = self.parse_type()
            saved = self.bound.get(name)
            self.bound[name] = var_type
            body_expected = None
            if isinstance(expected, Arrow):
                if expected.domain != var_type:
                    raise ParseError(f"lambda domain {var_type!r}, expected {expected.domain!r}", self.pos)
                body_expected = expected.codomain
            body = self.parse_term(body_expected)
            if saved is None:
                del self.bound[name]
            else:
                self.bound[name] = saved
            self.expect(")")
            return lam(name, var_type, body)
        if tok == "rec":
            self.next()
            result = self.parse_type()
            self.expect(")")
            return recursor(result)
        # Application: parse args first, then give the head an arrow type.
        head_start = self.pos
        head_surface = self._scan_term_tokens()
        args: list[Term] = []
        while self.peek() != ")":
            args.append(self.parse_term(None))
        self.expect(")")
        if not args:
            raise ParseError("application needs at least one argument", head_start)
        arg_types = [self._type_of(a) for a in args]
        result_type = expected if expected is not None else BASE
        head_type: FinType = result_type
        for at in reversed(arg_types):
            head_type = Arrow(at, head_type)
        end = self.pos
        self.pos = head_start
        head = self.parse_term(head_type)
        if self.pos != head_start + len(head_surface):
            raise ParseError("malformed application head", head_start)
        self.pos = end
        result: Term = head
        for a in args:
            result = App(result, a)
        return result

    def _scan_term_tokens(self) -> list[str]:
        """Consume one term's tokens without elaborating, returning them."""
        start = self.pos
        depth = 0
        while True:
            tok = self.next()
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth < 0:
                    raise ParseError("unbalanced parens in term", self.pos - 1)
            if depth == 0:
                return self.tokens[start : self.pos]

    def _type_of(self, term: Term) -> FinType:
        match term:
            case Var(_, t):
                return t
            case NumLiteral():
                return BASE
            case Const():
                return term.type()
            case Abs(vt, _, _):
                from .kernel import type_check

                return type_check(term, self.assumptions)
            case App():
                from .kernel import type_check

                return type_check(term, self.assumptions)
        raise ParseError(f"cannot type {term!r}")

    # -- formulas -----------------------------------------------------------

    def parse_formula(self) -> Formula:
        self.expect("(")
        tok = self.next()
        if tok in _RELS:
            rel = _RELS[tok]
            if rel is Rel.LEQ_STAR:
                lhs = self.parse_term(None)
                star = self._type_of(lhs)
                rhs = self.parse_term(star)
                self.expect(")")
                return Atom(rel, lhs, rhs, star)
            lhs = self.parse_term(BASE)
            rhs = self.parse_term(BASE)
            self.expect(")")
            return Atom(rel, lhs, rhs)
        if tok == "st":
            t = self.parse_term(None)
            self.expect(")")
            return St(t)
        if tok == "not":
            body = self.parse_formula()
            self.expect(")")
            return Not(body)
        if tok in ("and", "or", "implies"):
            left = self.parse_formula()
            right = self.parse_formula()
            self.expect(")")
            cls = {"and": And, "or": Or, "implies": Implies}[tok]
            return cls(left, right)
        if tok in _QUANTS:
            name = self.next()
            self.expect(":")
            var_type = self.parse_type()
            saved = self.bound.get(name)
            self.bound[name] = var_type
            body = self.parse_formula()
            if saved is None:
                del self.bound[name]
            else:
                self.bound[name] = saved
            self.expect(")")
            return _QUANTS[tok](name, var_type, body)
        raise ParseError(f"expected a formula, got {tok!r}", self.pos - 1)


def parse_type(text: str) -> FinType:
    p = _Parser(tokenize(text))
    t = p.parse_type()
    if not p.done():
        raise ParseError("trailing tokens after type", p.pos)
    return t


def parse_term(text: str, context: dict[str, FinType] | None = None) -> Term:
    p = _Parser(tokenize(text), context)
    t = p.parse_term()
    if not p.done():
        raise ParseError("trailing tokens after term", p.pos)
    return t


def parse_formula(text: str, context: dict[str, FinType] | None = None) -> Formula:
    p = _Parser(tokenize(text), context)
    f = p.parse_formula()
    if not p.done():
        raise ParseError("trailing tokens after formula", p.pos)
    return f


# ---------------------------------------------------------------------------
# Printing (canonical, single-line, byte-stable)


def print_type(t: FinType) -> str:
    if t == BASE:
        return "O"
    assert isinstance(t, Arrow)
    return f"(-> {print_type(t.domain)} {print_type(t.codomain)})"


def print_term(term: Term, binders: list[str] | None = None) -> str:
    binders = binders or []

    def go(t: Term, env: list[str]) -> str:
        match t:
            case Var(name, _):
                return name
            case BVar(i):
                if i < len(env):
                    return env[i]
                return f"#{i}"
            case NumLiteral(v):
                return str(v)
            case Const(kind, rt):
                if kind is ConstKind.ZERO:
                    return "zero"
                if kind is ConstKind.SUCC:
                    return "succ"
                if kind is ConstKind.MAXNAT:
                    return "max"
                return f"(rec {print_type(rt)})"
            case Abs(vt, body, hint):
                taken = free_vars(body) | set(env)
                name = hint
                while name in taken:
                    name += "'"
                return f"(lam {name} : {print_type(vt)} {go(body, [name] + env)})"
            case App():
                spine: list[Term] = []
                head: Term = t
                while isinstance(head, App):
                    spine.append(head.arg)
                    head = head.fn
                spine.reverse()
                parts = [go(head, env)] + [go(a, env) for a in spine]
                return f"({' '.join(parts)})"
        raise ValueError(f"cannot print {t!r}")

    return go(term, binders)


_QUANT_NAMES = {
    Forall: "forall",
    Exists: "exists",
    ForallSt: "forall-st",
    ExistsSt: "exists-st",
    ForallMono: "forall-mono",
    ExistsMono: "exists-mono",
}

_REL_NAMES = {Rel.EQ0: "=0", Rel.LEQ0: "<=0", Rel.LEQ_STAR: "<=*"}


def print_formula(f: Formula) -> str:
    match f:
        case Atom(rel, lhs, rhs, _):
            return f"({_REL_NAMES[rel]} {print_term(lhs)} {print_term(rhs)})"
        case St(t):
            return f"(st {print_term(t)})"
        case Not(body):
            return f"(not {print_formula(body)})"
        case And(l, r):
            return f"(and {print_formula(l)} {print_formula(r)})"
        case Or(l, r):
            return f"(or {print_formula(l)} {print_formula(r)})"
        case Implies(a, c):
            return f"(implies {print_formula(a)} {print_formula(c)})"
        case Quant(x, t, body):
            name = _QUANT_NAMES[type(f)]
            return f"({name} {x} : {print_type(t)} {print_formula(body)})"
    raise ValueError(f"cannot print {f!r}")
