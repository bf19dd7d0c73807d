"""The standardness-eliminating functional interpretation.

interpret() maps a formula to a pair of monotone-standard variable
tuples and an internal matrix, clause by clause over the connectives.
simplify_monotone() performs the two semantic collapses that restore
the plain bounded shape on normal-form inputs: the witness-functional
pair of an interpreted standard existential collapses to a single
bound, and a universal functional is instantiated at a constant
function.

Empty universal tuples are padded with a dummy number argument so the
functionals introduced for implication and existence always have an
argument slot; this keeps the output shapes uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kernel import BASE, Arrow, FinType, Term, Var, app, arrow, type_check
from .formulas import (
    And,
    Atom,
    Exists,
    Forall,
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
    bounded_forall,
    desugar,
    exists_mono_st,
    forall_mono_st,
    free_formula_vars,
    is_internal,
    leq0,
    leq_star,
    mono_bounded_exists,
    mono_bounded_forall,
    substitute_formula,
)


class IllTyped(Exception):
    pass


VarSpec = tuple[str, FinType]


@dataclass(frozen=True)
class UstResult:
    b_tuple: tuple[VarSpec, ...]
    c_tuple: tuple[VarSpec, ...]
    lower: Formula
    notes: tuple[str, ...] = field(default=(), compare=False)

    def render(self) -> Formula:
        f = self.lower
        for name, t in reversed(self.c_tuple):
            f = exists_mono_st(name, t, f)
        for name, t in reversed(self.b_tuple):
            f = forall_mono_st(name, t, f)
        return f


class _Names:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.counter = 0

    def fresh(self, prefix: str) -> str:
        while True:
            self.counter += 1
            name = f"{prefix}{self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def _guard_atom(v: Term, bound: Term, t: FinType) -> Atom:
    return leq0(v, bound) if t == BASE else leq_star(v, bound, t)


def interpret(phi: Formula) -> UstResult:
    """Interpret a formula, returning monotone-standard tuples and an
    internal matrix."""
    try:
        from .formulas import check_formula

        check_formula(phi)
    except Exception as exc:  # noqa: BLE001 - surface as the module error
        raise IllTyped(str(exc)) from exc
    g = desugar(phi)
    names = _Names(all_names(g))
    b, c, lower = _interp(g, names)
    result = UstResult(tuple(b), tuple(c), lower)
    assert is_internal(result.lower)
    return result


def _interp(g: Formula, names: _Names) -> tuple[list[VarSpec], list[VarSpec], Formula]:
    if is_internal(g):
        return [], [], g
    match g:
        case St(t):
            ty = type_check(t)
            c = names.fresh("c")
            return [], [(c, ty)], Atom(Rel.LEQ_STAR, t, Var(c, ty), ty) if ty != BASE else leq0(t, Var(c, ty))
        case Or(l, r):
            bl, cl, fl = _interp(l, names)
            br, cr, fr = _interp(r, names)
            return bl + br, cl + cr, Or(fl, fr)
        case And(l, r):
            bl, cl, fl = _interp(l, names)
            br, cr, fr = _interp(r, names)
            return bl + br, cl + cr, And(fl, fr)
        case Forall(x, t, body):
            b, c, lower = _interp(body, names)
            return b, c, Forall(x, t, lower)
        case Not(body):
            return _interp_not(body, names)
        case Implies(a, c):
            return _interp_implies(a, c, names)
        case Exists(x, t, body):
            return _interp_exists(x, t, body, names)
    raise IllTyped(f"no interpretation clause for {g!r}")


def _functional_types(b_specs: list[VarSpec], result: FinType) -> FinType:
    return arrow(*[t for _, t in b_specs], result)


def _pad_universals(b: list[VarSpec], names: _Names) -> list[VarSpec]:
    """Dummy number slot standing in for an empty universal tuple."""
    return b if b else [(names.fresh("b"), BASE)]


def _substituted(phi: Formula, specs: list[VarSpec], replacements: list[Term]) -> Formula:
    for (name, _), term in zip(specs, replacements):
        phi = substitute_formula(phi, name, term)
    return phi


def _interp_not(body: Formula, names: _Names) -> tuple[list[VarSpec], list[VarSpec], Formula]:
    b, c, phi = _interp(body, names)
    b_eff = _pad_universals(b, names)
    fs: list[VarSpec] = [(names.fresh("f"), _functional_types(b_eff, t)) for _, t in c]
    primes = [(name + "'", t) for name, t in b_eff]
    prime_vars: list[Term] = [Var(n, t) for n, t in primes]
    matrix = _substituted(phi, b, prime_vars[: len(b)])
    matrix = _substituted(matrix, c, [app(Var(fn, ft), *prime_vars) for fn, ft in fs])
    matrix = Not(matrix)
    for (pn, pt), (bn, bt) in zip(reversed(primes), reversed(b_eff)):
        matrix = mono_bounded_exists(pn, pt, Var(bn, bt), matrix)
    return fs, b_eff, matrix


def _interp_implies(ant: Formula, cons: Formula, names: _Names) -> tuple[list[VarSpec], list[VarSpec], Formula]:
    b, c, phi = _interp(ant, names)
    d, e, psi = _interp(cons, names)
    if not c:
        # No witness functionals needed; just bound the universal tuple.
        primes = [(name + "'", t) for name, t in b]
        matrix = _substituted(phi, b, [Var(n, t) for n, t in primes])
        for (pn, pt), (bn, bt) in zip(reversed(primes), reversed(b)):
            matrix = mono_bounded_forall(pn, pt, Var(bn, bt), matrix)
        return d, b + e, Implies(matrix, psi)
    b_eff = _pad_universals(b, names)
    fs: list[VarSpec] = [(names.fresh("f"), _functional_types(b_eff, t)) for _, t in c]
    primes = [(name + "'", t) for name, t in b_eff]
    prime_vars: list[Term] = [Var(n, t) for n, t in primes]
    antecedent = _substituted(phi, b, prime_vars[: len(b)])
    antecedent = _substituted(antecedent, c, [app(Var(fn, ft), *prime_vars) for fn, ft in fs])
    for (pn, pt), (bn, bt) in zip(reversed(primes), reversed(b_eff)):
        antecedent = mono_bounded_forall(pn, pt, Var(bn, bt), antecedent)
    return fs + d, b_eff + e, Implies(antecedent, psi)


def _interp_exists(x: str, t: FinType, body: Formula, names: _Names) -> tuple[list[VarSpec], list[VarSpec], Formula]:
    b, c, phi = _interp(body, names)
    if not c:
        # Degenerate: only the universal tuple needs bounding constants.
        caps: list[VarSpec] = [(names.fresh("F"), bt) for _, bt in b]
        primes = [(name + "'", bt) for name, bt in b]
        matrix = _substituted(phi, b, [Var(n, tt) for n, tt in primes])
        for (pn, pt), (cn, ct) in zip(reversed(primes), reversed(caps)):
            matrix = mono_bounded_forall(pn, pt, Var(cn, ct), matrix)
        matrix = Exists(x, t, matrix)
        return caps, [], matrix
    b_eff = _pad_universals(b, names)
    fs: list[VarSpec] = [(names.fresh("f"), _functional_types(b_eff, ct)) for _, ct in c]
    caps: list[VarSpec] = [(names.fresh("F"), _functional_types(fs, bt)) for _, bt in b_eff]
    f_primes = [(name + "'", ft) for name, ft in fs]
    b_primes = [(name + "'", bt) for name, bt in b_eff]
    fprime_vars: list[Term] = [Var(n, ft) for n, ft in f_primes]
    bprime_vars: list[Term] = [Var(n, bt) for n, bt in b_primes]
    matrix = _substituted(phi, b, bprime_vars[: len(b)])
    matrix = _substituted(matrix, c, [app(v, *bprime_vars) for v in fprime_vars])
    for (pn, pt), (cn, ct) in zip(reversed(b_primes), reversed(caps)):
        matrix = mono_bounded_forall(pn, pt, app(Var(cn, ct), *fprime_vars), matrix)
    matrix = Exists(x, t, matrix)
    for (pn, pt), (fn, ft) in zip(reversed(f_primes), reversed(fs)):
        matrix = mono_bounded_exists(pn, pt, Var(fn, ft), matrix)
    return caps, fs, matrix


# ---------------------------------------------------------------------------
# Monotone simplification


def simplify_monotone(r: UstResult) -> UstResult:
    """Collapse witness-functional pairs to single bounds and universal
    functionals to constants, to fixpoint.

    Inputs outside the recognized shapes come back unchanged with a
    shape-mismatch note.
    """
    names = _Names(all_names(r.lower) | {n for n, _ in r.b_tuple} | {n for n, _ in r.c_tuple})
    notes: list[str] = []
    changed = True
    while changed:
        changed = False
        step = _collapse_witness_pair(r, names)
        if step is not None:
            r = step
            notes.append("witness-pair")
            changed = True
            continue
        step = _collapse_constant_function(r, names)
        if step is not None:
            r = step
            notes.append("constant-function")
            changed = True
    if not notes:
        notes.append("shape-mismatch: no recognized collapse")
    return UstResult(r.b_tuple, r.c_tuple, r.lower, tuple(notes))


def _match_witness_pair(f: Formula, b_names: set[str], c_names: set[str]):
    """Match (exists-tilde f' <=* f)(exists y)(forall b' <=0 F(f'))
    [y <=* f'(b') and chi] with F universal and f existential."""
    match f:
        case Exists(
            fp1,
            sigma,
            And(
                Atom(Rel.LEQ_STAR, Var(fp2, _), Var(fp3, _), _),
                And(
                    Atom(Rel.LEQ_STAR, Var(fp4, _), Var(fname, _), _),
                    Exists(
                        y,
                        ytype,
                        Forall(
                            bp1,
                            BASE,
                            Implies(
                                Atom(Rel.LEQ0, Var(bp2, _), bound_term),
                                And(guard, chi),
                            ),
                        ),
                    ),
                ),
            ),
        ) if fp1 == fp2 == fp3 == fp4 and bp1 == bp2 and fname in c_names:
            # bound_term must be F(f') for a universal F
            from .kernel import App as KApp

            match bound_term:
                case KApp(Var(Fname, _), Var(argname, _)) if Fname in b_names and argname == fp1:
                    # guard must be y <= f'(b')
                    match guard:
                        case Atom(_, Var(yn, _), KApp(Var(gn, _), Var(bn, _)), _) if (
                            yn == y and gn == fp1 and bn == bp1
                        ):
                            return (Fname, fname, y, ytype, chi)
    return None


def _rewrite_first(g: Formula, attempt) -> tuple[Formula, object | None]:
    """Replace the leftmost subformula where `attempt` fires.

    attempt(subformula) returns (replacement, info) or None.
    """
    hit = attempt(g)
    if hit is not None:
        return hit
    match g:
        case Not(body):
            new, info = _rewrite_first(body, attempt)
            return (Not(new), info) if info is not None else (g, None)
        case And(l, r):
            new, info = _rewrite_first(l, attempt)
            if info is not None:
                return And(new, r), info
            new, info = _rewrite_first(r, attempt)
            return (And(l, new), info) if info is not None else (g, None)
        case Or(l, r):
            new, info = _rewrite_first(l, attempt)
            if info is not None:
                return Or(new, r), info
            new, info = _rewrite_first(r, attempt)
            return (Or(l, new), info) if info is not None else (g, None)
        case Implies(a, c):
            new, info = _rewrite_first(a, attempt)
            if info is not None:
                return Implies(new, c), info
            new, info = _rewrite_first(c, attempt)
            return (Implies(a, new), info) if info is not None else (g, None)
        case Quant(x, t, body):
            new, info = _rewrite_first(body, attempt)
            return (type(g)(x, t, new), info) if info is not None else (g, None)
    return g, None


def _collapse_witness_pair(r: UstResult, names: _Names) -> UstResult | None:
    b_names = {n for n, _ in r.b_tuple}
    c_names = {n for n, _ in r.c_tuple}

    def attempt(g: Formula):
        m = _match_witness_pair(g, b_names, c_names)
        if m is None:
            return None
        Fname, fname, y, ytype, chi = m
        e0 = names.fresh("e")
        return bounded_exists(y, ytype, Var(e0, ytype), chi), (Fname, fname, e0, ytype)

    new_lower, info = _rewrite_first(r.lower, attempt)
    if info is None:
        return None
    Fname, fname, e0, etype = info
    new_b = tuple(spec for spec in r.b_tuple if spec[0] != Fname)
    new_c = tuple((e0, etype) if spec[0] == fname else spec for spec in r.c_tuple)
    return UstResult(new_b, new_c, new_lower, r.notes)


def _collapse_constant_function(r: UstResult, names: _Names) -> UstResult | None:
    b_specs = dict(r.b_tuple)
    c_names = {n for n, _ in r.c_tuple}

    def attempt(g: Formula):
        from .kernel import App as KApp, free_vars as tfv

        match g:
            case Implies(
                Forall(
                    bp1,
                    BASE,
                    Implies(Atom(Rel.LEQ0, Var(bp2, _), Var(bname, _)), Atom(rel, subject, bound, at)),
                ),
                chi,
            ) if bp1 == bp2 and bname in c_names:
                match bound:
                    case KApp(Var(fname, ftype), Var(argname, _)) if (
                        fname in b_specs and argname == bp1 and bp1 not in tfv(subject)
                    ):
                        assert isinstance(ftype, Arrow)
                        x0 = names.fresh("x")
                        replacement = Implies(Atom(rel, subject, Var(x0, ftype.codomain), at), chi)
                        return replacement, (fname, bname, x0, ftype.codomain)
        return None

    new_lower, info = _rewrite_first(r.lower, attempt)
    if info is None:
        return None
    fname, bname, x0, xtype = info
    # The placeholder existential must not occur anywhere else.
    if bname in free_formula_vars(new_lower):
        return None
    new_b = tuple((x0, xtype) if spec[0] == fname else spec for spec in r.b_tuple)
    new_c = tuple(spec for spec in r.c_tuple if spec[0] != bname)
    return UstResult(new_b, new_c, new_lower, r.notes)


# ---------------------------------------------------------------------------
# Extraction contracts


def extraction_contract(nf: NormalForm) -> Formula:
    """The verification obligation for a normal form: monotone majorants
    for the universal tuple, bounded originals, and witnesses bounded by
    fresh term metavariables applied to the majorants."""
    from .formulas import ForallMono

    taken = all_names(nf.matrix) | {n for n, _ in nf.universals} | {n for n, _ in nf.existentials}
    names = _Names(taken)
    majorants: list[VarSpec] = [(name, t) for name, t in nf.universals]
    copies: list[VarSpec] = [(name + "0", t) for name, t in nf.universals]
    matrix = nf.matrix
    for (orig, _), (copy, t) in zip(nf.universals, copies):
        matrix = substitute_formula(matrix, orig, Var(copy, t))
    t_metas: list[VarSpec] = []
    for _, et in nf.existentials:
        t_metas.append((names.fresh("t"), _functional_types(majorants, et)))
    f = matrix
    for (yname, ytype), (tname, ttype) in zip(reversed(nf.existentials), reversed(t_metas)):
        bound = app(Var(tname, ttype), *[Var(n, t) for n, t in majorants])
        f = bounded_exists(yname, ytype, bound, f)
    for (copy, t), (orig, _) in zip(reversed(copies), reversed(majorants)):
        f = bounded_forall(copy, t, Var(orig, t), f)
    for name, t in reversed(majorants):
        if t == BASE:
            f = Forall(name, t, f)
        else:
            f = ForallMono(name, t, f)
    return f
