"""Hereditary domination between functionals, monotone closure, and the
counterexample generator for the non-constructive search operator.

The checker is a refutation-complete sampler: a Holds verdict means no
sampled pair violated the defining clause, never a proof.  Sampling
plans are explicit value objects so verdicts are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Callable, Sequence

from .kernel import BASE, Arrow, FinType, Term, as_unary_fn


class BudgetInvalid(Exception):
    pass


NatFn = Callable[[int], int]


@dataclass(frozen=True)
class SamplingBudget:
    """Finite test domain for domination checks.

    base_bound: number arguments range over 0..base_bound; pairs (u, v)
        with v <= u are scanned with u ascending and v descending, so
        the diagonal is tried first.
    type1_family: sample sequence-arguments for functional (type-2)
        checks; all ordered pairs from the family related by the
        sampled type-1 clause are used.
    max_samples: optional cap; hitting it yields an Inconclusive
        verdict instead of Holds.
    """

    base_bound: int = 20
    type1_family: tuple[NatFn, ...] = ()
    max_samples: int | None = None

    def validate(self, typ: FinType) -> None:
        if self.base_bound < 0:
            raise BudgetInvalid("base_bound must be nonnegative")
        if _needs_family(typ) and not self.type1_family:
            raise BudgetInvalid("checking at this type needs a nonempty type1_family")


def _needs_family(typ: FinType) -> bool:
    return isinstance(typ, Arrow) and isinstance(typ.domain, Arrow)


class Outcome(Enum):
    HOLDS = auto()
    FAILS = auto()
    INCONCLUSIVE = auto()


@dataclass(frozen=True)
class MajVerdict:
    outcome: Outcome
    witness: tuple[object, object] | None = None  # (u, v) violating pair
    samples_used: int = 0

    @property
    def holds(self) -> bool:
        return self.outcome is Outcome.HOLDS


def maj_base(x: int, y: int) -> bool:
    return x <= y


def _as_value(x: object, typ: FinType) -> object:
    if isinstance(x, Term):
        if typ == Arrow(BASE, BASE):
            return as_unary_fn(x)
        if typ == BASE:
            from .kernel import eval_nat

            return eval_nat(x)
        raise BudgetInvalid(f"cannot adapt a term at type {typ!r}")
    return x


class _Sampler:
    def __init__(self, budget: SamplingBudget):
        self.budget = budget
        self.samples = 0
        self.exhausted = False

    def tick(self) -> bool:
        if self.budget.max_samples is not None and self.samples >= self.budget.max_samples:
            self.exhausted = True
            return False
        self.samples += 1
        return True

    def check(self, x: object, y: object, typ: FinType) -> tuple[object, object] | None:
        """First violating pair of the clause for x dominated-by y, or None."""
        if typ == BASE:
            return None if maj_base(int(x), int(y)) else ((x, y))  # pragma: no cover
        assert isinstance(typ, Arrow)
        for u, v in self._pairs(typ.domain):
            if not self.tick():
                return None
            xu = _apply(x, v, typ.domain)
            yv = _apply(y, u, typ.domain)
            if not self._le(xu, yv, typ.codomain):
                return (u, v)
            yu = _apply(y, v, typ.domain)
            if not self._le(yu, yv, typ.codomain):
                return (u, v)
        return None

    def _le(self, a: object, b: object, typ: FinType) -> bool:
        if typ == BASE:
            return maj_base(int(a), int(b))
        # Nested arrow codomain: recurse with the same budget.
        return self.check(a, b, typ) is None and not self.exhausted

    def _pairs(self, domain: FinType):
        """Ordered pairs (u, v) with v dominated by u, u's scan ascending
        and v descending from the diagonal."""
        if domain == BASE:
            for u in range(self.budget.base_bound + 1):
                for v in range(u, -1, -1):
                    yield u, v
        elif domain == Arrow(BASE, BASE):
            family = self.budget.type1_family
            for u in family:
                for v in family:
                    if self._type1_le(v, u):
                        yield u, v
        else:
            raise BudgetInvalid(f"no sampling scheme for domain {domain!r}")

    def _type1_le(self, v: NatFn, u: NatFn) -> bool:
        inner = _Sampler(self.budget)
        return inner.check(v, u, Arrow(BASE, BASE)) is None


def _apply(fn: object, arg: object, domain: FinType) -> object:
    del domain
    return fn(arg)  # type: ignore[operator]


def maj_check(x: object, y: object, typ: FinType, budget: SamplingBudget) -> MajVerdict:
    """Sample the domination clause for x below y at an arrow type."""
    if not isinstance(typ, Arrow):
        raise BudgetInvalid("maj_check expects an arrow type; use maj_base at type O")
    budget.validate(typ)
    xv = _as_value(x, typ)
    yv = _as_value(y, typ)
    sampler = _Sampler(budget)
    witness = sampler.check(xv, yv, typ)
    if witness is not None:
        return MajVerdict(Outcome.FAILS, witness, sampler.samples)
    if sampler.exhausted:
        return MajVerdict(Outcome.INCONCLUSIVE, None, sampler.samples)
    return MajVerdict(Outcome.HOLDS, None, sampler.samples)


def is_monotone(x: object, typ: FinType, budget: SamplingBudget) -> MajVerdict:
    return maj_check(x, x, typ, budget)


def monotone_closure(g: NatFn | Term) -> NatFn:
    """Running maximum of a number-theoretic function.

    The result dominates the input pointwise and is weakly increasing.
    """
    fn = as_unary_fn(g) if isinstance(g, Term) else g
    cache: dict[int, int] = {}

    def closed(k: int) -> int:
        if k in cache:
            return cache[k]
        best = 0 if k < 0 else fn(0)
        for n in range(1, k + 1):
            value = fn(n)
            if value > best:
                best = value
        cache[k] = best
        return best

    return closed


# ---------------------------------------------------------------------------
# The search-operator refuter


def mu(f: NatFn, search_bound: int = 1 << 20) -> int:
    """Least zero of a sequence known to have one."""
    for n in range(search_bound + 1):
        if f(n) == 0:
            return n
    raise ValueError("no zero found within the search bound")


@dataclass(frozen=True)
class MuCounterexample:
    """A binary sequence below the all-ones sequence whose least zero
    exceeds a claimed bound for the search operator's value there."""

    prefix: tuple[int, ...]
    mu_value: int
    sequence: NatFn = field(compare=False)

    def recheck(self) -> bool:
        return mu(self.sequence) == self.mu_value


def refute_mu_majorant(candidate_bound: int) -> MuCounterexample:
    """Given a putative majorant value at the all-ones sequence, build a
    binary sequence dominated by all-ones whose least zero is larger.

    The sequence is 1 up to and including candidate_bound, 0 at index
    candidate_bound + 1, and 1 afterwards.
    """
    if candidate_bound < 0:
        raise ValueError("candidate_bound must be a natural number")
    zero_at = candidate_bound + 1

    def seq(n: int) -> int:
        return 0 if n == zero_at else 1

    prefix = tuple(seq(i) for i in range(zero_at + 2))
    return MuCounterexample(prefix=prefix, mu_value=zero_at, sequence=seq)


def ones(_: int) -> int:
    """The all-ones sequence, the top of the binary sequences."""
    return 1
